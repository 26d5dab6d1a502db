"""Conversational product search with clarification questions, plus its benchmark."""

from .agent import (
    ClarificationQuestion,
    ClarifySession,
    ClarifyingSearchAgent,
    DemandRecord,
    SessionMemory,
    TurnOutput,
    analyze_category,
    build_structured_query,
    generate_nl_query,
    generate_questions,
    parse_user_reply,
)
from .catalog import (
    ALL_FACETS,
    LIST_FACETS,
    Catalog,
    CatalogError,
    CategoryStatistics,
    Constraint,
    ProductItem,
    StructuredQuery,
    SyntheticSpec,
    execute_structured_query,
    generate_synthetic_catalog,
    load_catalog,
    summarize,
)
from .config import AgentConfig
from .retrieval import (
    BM25Index,
    DenseIndex,
    HashingEmbedder,
    RankedList,
    TokenOverlapReranker,
    bm25_search,
    build_bm25_index,
    build_dense_index,
    dense_search,
    feature_hash_embed,
    item_to_document_text,
    rerank,
    rrf_fuse,
    tokenize,
)
from .simbench import (
    BenchmarkReport,
    BenchmarkSpec,
    SimulatedUser,
    aspect_distribution,
    doc2query,
    failure_rates,
    hit_at_k,
    mrr_at_k,
    question_similarity,
    run_benchmark,
    run_conversational,
    run_traditional,
    simulate_answer,
)

__version__ = "0.1.0"
