"""Retrieval benchmark with simulated users.

Two settings: a single-shot run over document-derived queries, and a
conversational run where a deterministic simulated shopper answers the
agent's clarification questions from a hidden ground-truth item. Metrics are
MRR@k and HIT@k against the source document at every agent turn.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .agent import (
    ClarificationQuestion,
    ClarifyingSearchAgent,
    SessionMemory,
    TurnOutput,
)
from .catalog import LIST_FACETS, Catalog, ProductItem, match_key
from .config import AgentConfig
from .retrieval import Embedder, HashingEmbedder, RankedList, rerank, tokenize

SETTINGS = ("traditional", "conversational", "warm-start")
_SETTING_ALIASES = {
    "warm_start": "warm-start",
    "warm-start-conversational": "warm-start",
}


class BenchmarkError(ValueError):
    pass


def mrr_at_k(ranked: RankedList, truth_id: str, k: int) -> float:
    """Reciprocal rank of the truth document within the top-k, else 0."""
    if k < 1:
        raise BenchmarkError(f"k must be >= 1, got {k}")
    for rank, (doc_id, _) in enumerate(ranked.entries[:k], start=1):
        if doc_id == truth_id:
            return 1.0 / rank
    return 0.0


def hit_at_k(ranked: RankedList, truth_id: str, k: int) -> int:
    if k < 1:
        raise BenchmarkError(f"k must be >= 1, got {k}")
    return int(any(doc_id == truth_id for doc_id, _ in ranked.entries[:k]))


@dataclass(frozen=True)
class SimulatedUser:
    """Answers clarification questions from a hidden ground-truth item.

    With the default exact policy a candidate is selected iff it equals one of
    the item's values for the question's facet (case-insensitively); the
    overlap policy instead requires token overlap of at least ``threshold``.
    Free-text emission is off by default, so answers stay within the provided
    candidates or "Other".
    """

    item: ProductItem
    policy: str = "exact"
    threshold: float = 0.5
    emit_free_text: bool = False

    def __post_init__(self) -> None:
        if self.policy not in ("exact", "overlap"):
            raise BenchmarkError(f"unknown matching policy {self.policy!r}")


def _candidate_matches(candidate: str, values: Sequence[str], user: SimulatedUser) -> bool:
    if user.policy == "exact":
        key = match_key(candidate)
        return any(key == match_key(value) for value in values)
    candidate_tokens = set(tokenize(candidate))
    if not candidate_tokens:
        return False
    for value in values:
        overlap = len(candidate_tokens & set(tokenize(value))) / len(candidate_tokens)
        if overlap >= user.threshold:
            return True
    return False


def simulate_answer(user: SimulatedUser, questions: Sequence[ClarificationQuestion]) -> list[str]:
    """One reply string per question: matching candidates joined, or "Other"."""
    replies: list[str] = []
    for question in questions:
        facets = [question.facet] if question.facet in LIST_FACETS else list(LIST_FACETS)
        values = [v for facet in facets for v in user.item.facet_values(facet)]
        selected = [c for c in question.candidates[:-1] if _candidate_matches(c, values, user)]
        if selected:
            replies.append(", ".join(selected))
        elif user.emit_free_text and values:
            replies.append(values[0])
        else:
            replies.append("Other")
    return replies


def doc2query(item: ProductItem, mode: str = "template", seed: int = 0, backend=None) -> str:
    """Synthesize a keyword query from an item so it serves as its own label.

    Template mode samples 3-5 values across distinct non-empty facets,
    deterministically per (seed, item id).
    """
    if mode == "llm":
        if backend is None:
            raise BenchmarkError("llm mode needs a backend")
        from .llm_bridge import build_doc2query_prompt, call_backend

        raw = call_backend(backend, build_doc2query_prompt(item))
        return raw.strip().splitlines()[0].strip() if raw.strip() else item.category
    if mode != "template":
        raise BenchmarkError(f"unknown doc2query mode {mode!r}")
    rng = random.Random(f"{seed}:{item.id}")
    non_empty = [facet for facet in LIST_FACETS if item.facet_values(facet)]
    if not non_empty:
        return item.category
    count = min(rng.randint(3, 5), len(non_empty))
    facets = rng.sample(non_empty, count)
    values = [rng.choice(item.facet_values(facet)) for facet in facets]
    return " ".join([item.category] + values)


@dataclass(frozen=True)
class BenchmarkSpec:
    setting: str = "conversational"
    docs_per_category: int = 100
    user_turns: int = 5
    seed: int = 0
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "setting", _SETTING_ALIASES.get(self.setting, self.setting))
        if self.setting not in SETTINGS:
            raise BenchmarkError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.docs_per_category < 1:
            raise BenchmarkError("docs_per_category must be >= 1")
        if self.user_turns < 1:
            raise BenchmarkError("user_turns must be >= 1")

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "docs_per_category": self.docs_per_category,
            "user_turns": self.user_turns,
            "seed": self.seed,
            "agent": self.agent.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkSpec":
        agent = data.get("agent", {})
        return cls(
            setting=data.get("setting", "conversational"),
            docs_per_category=data.get("docs_per_category", 100),
            user_turns=data.get("user_turns", 5),
            seed=data.get("seed", 0),
            agent=agent if isinstance(agent, AgentConfig) else AgentConfig.from_dict(agent),
        )


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-turn and aggregate retrieval metrics plus failure accounting."""

    setting: str
    config: dict
    k: int
    n_queries: int
    per_turn_hit: tuple[float, ...]
    per_turn_mrr: tuple[float, ...]
    per_turn_rerank_mrr: tuple[float, ...]
    hit_at_k: float
    mrr_at_k: float
    rerank_mrr_at_k: float
    mean_query_chars: tuple[float, ...]
    structured_attempts: int
    invalid_queries: int
    trivial_queries: int
    invalid_rate: float
    trivial_rate: float
    question_similarity: tuple[float, ...]
    aspect_distribution: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "config": self.config,
            "k": self.k,
            "n_queries": self.n_queries,
            "per_turn_hit": list(self.per_turn_hit),
            "per_turn_mrr": list(self.per_turn_mrr),
            "per_turn_rerank_mrr": list(self.per_turn_rerank_mrr),
            "hit_at_k": self.hit_at_k,
            "mrr_at_k": self.mrr_at_k,
            "rerank_mrr_at_k": self.rerank_mrr_at_k,
            "mean_query_chars": list(self.mean_query_chars),
            "structured_attempts": self.structured_attempts,
            "invalid_queries": self.invalid_queries,
            "trivial_queries": self.trivial_queries,
            "invalid_rate": self.invalid_rate,
            "trivial_rate": self.trivial_rate,
            "question_similarity": list(self.question_similarity),
            "aspect_distribution": dict(sorted(self.aspect_distribution.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    def render_text(self) -> str:
        lines = [
            f"setting: {self.setting}   queries: {self.n_queries}   k: {self.k}",
            "",
            f"{'turn':>4}  {'HIT@k':>8}  {'MRR@k':>8}  {'rerank MRR@k':>13}  {'query chars':>11}",
        ]
        for t in range(len(self.per_turn_hit)):
            lines.append(
                f"{t + 1:>4}  {self.per_turn_hit[t]:>8.4f}  {self.per_turn_mrr[t]:>8.4f}  "
                f"{self.per_turn_rerank_mrr[t]:>13.4f}  {self.mean_query_chars[t]:>11.2f}"
            )
        lines.append(
            f"{'all':>4}  {self.hit_at_k:>8.4f}  {self.mrr_at_k:>8.4f}  "
            f"{self.rerank_mrr_at_k:>13.4f}"
        )
        lines.append("")
        lines.append(
            f"structured attempts: {self.structured_attempts}   "
            f"invalid: {self.invalid_queries} ({self.invalid_rate:.2%})   "
            f"trivial: {self.trivial_queries} ({self.trivial_rate:.2%})"
        )
        if self.question_similarity:
            curve = ", ".join(f"{v:.3f}" for v in self.question_similarity)
            lines.append(f"question similarity by turn (2..T): {curve}")
        if self.aspect_distribution:
            aspects = "  ".join(
                f"{facet}={share:.2%}" for facet, share in sorted(self.aspect_distribution.items())
            )
            lines.append(f"question aspects: {aspects}")
        return "\n".join(lines) + "\n"


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _sample_truths(catalog: Catalog, spec: BenchmarkSpec) -> list[ProductItem]:
    truths: list[ProductItem] = []
    for category in catalog.categories:
        bucket = catalog.bucket(category)
        if spec.docs_per_category > len(bucket):
            raise BenchmarkError(
                f"docs_per_category={spec.docs_per_category} exceeds the "
                f"{len(bucket)}-item bucket for {category!r}"
            )
        rng = random.Random(f"{spec.seed}:sample:{match_key(category)}")
        truths.extend(rng.sample(list(bucket), spec.docs_per_category))
    return truths


def question_similarity(
    turns: Sequence[Sequence[ClarificationQuestion]],
    embedder: Embedder,
) -> list[float]:
    """Per-turn mean of each question's max cosine against all earlier questions.

    Questions embed as text plus joined candidates; cosines are clamped to
    [0, 1]. Turns without questions, or without any earlier question to
    compare against, contribute 0. Returns one value per turn from turn 2 on.
    """
    if len(turns) < 2:
        return []

    def embed(question: ClarificationQuestion):
        return embedder.embed(question.text + " " + " ".join(question.candidates))

    earlier = [embed(q) for q in turns[0]]
    curve: list[float] = []
    for turn in turns[1:]:
        vectors = [embed(q) for q in turn]
        maxima: list[float] = []
        for vec in vectors:
            best = max((float(vec @ prior) for prior in earlier), default=0.0)
            maxima.append(min(max(best, 0.0), 1.0))
        curve.append(_mean(maxima))
        earlier.extend(vectors)
    return curve


def aspect_distribution(sessions: Iterable[SessionMemory]) -> dict[str, float]:
    """Fraction of all generated questions per facet; proportions sum to 1."""
    counts: dict[str, int] = {}
    total = 0
    for memory in sessions:
        for question in memory.asked_questions:
            counts[question.facet] = counts.get(question.facet, 0) + 1
            total += 1
    if total == 0:
        raise BenchmarkError("no questions were generated")
    return {facet: count / total for facet, count in sorted(counts.items())}


def failure_rates(sessions: Iterable[SessionMemory]) -> tuple[float, float]:
    """(invalid, trivial) counters over total structured-query attempts."""
    attempts = invalid = trivial = 0
    for memory in sessions:
        attempts += memory.structured_attempts
        invalid += memory.invalid_query
        trivial += memory.trivial_query
    if attempts == 0:
        return 0.0, 0.0
    return invalid / attempts, trivial / attempts


def run_traditional(catalog: Catalog, spec: BenchmarkSpec) -> BenchmarkReport:
    """Single-shot retrieval over synthesized document queries."""
    if spec.setting != "traditional":
        raise BenchmarkError(f"run_traditional needs a traditional spec, got {spec.setting!r}")
    engine = ClarifyingSearchAgent(catalog, spec.agent)
    truths = _sample_truths(catalog, spec)
    k = spec.agent.top_k
    hits: list[float] = []
    mrrs: list[float] = []
    rerank_mrrs: list[float] = []
    query_chars: list[float] = []
    for truth in truths:
        query = doc2query(truth, seed=spec.seed)
        ranked = engine.search(query, k, apply_rerank=False)
        reranked = rerank(query, ranked, engine.reranker, engine.doc_texts, k)
        hits.append(hit_at_k(ranked, truth.id, k))
        mrrs.append(mrr_at_k(ranked, truth.id, k))
        rerank_mrrs.append(mrr_at_k(reranked, truth.id, k))
        query_chars.append(len(query))
    return BenchmarkReport(
        setting=spec.setting,
        config=spec.to_dict(),
        k=k,
        n_queries=len(truths),
        per_turn_hit=(_mean(hits),),
        per_turn_mrr=(_mean(mrrs),),
        per_turn_rerank_mrr=(_mean(rerank_mrrs),),
        hit_at_k=_mean(hits),
        mrr_at_k=_mean(mrrs),
        rerank_mrr_at_k=_mean(rerank_mrrs),
        mean_query_chars=(_mean(query_chars),),
        structured_attempts=0,
        invalid_queries=0,
        trivial_queries=0,
        invalid_rate=0.0,
        trivial_rate=0.0,
        question_similarity=(),
        aspect_distribution={},
    )


@dataclass
class ConversationalRun:
    """Raw per-session artifacts of a conversational run, before aggregation."""

    truths: list[ProductItem]
    turn_outputs: list[list[TurnOutput]]
    memories: list[SessionMemory]


def run_sessions(
    catalog: Catalog,
    spec: BenchmarkSpec,
    *,
    engine: ClarifyingSearchAgent | None = None,
) -> ConversationalRun:
    """Simulate every session of a conversational spec and keep raw outputs."""
    if spec.setting not in ("conversational", "warm-start"):
        raise BenchmarkError(f"conversational spec required, got {spec.setting!r}")
    engine = engine or ClarifyingSearchAgent(catalog, spec.agent)
    truths = _sample_truths(catalog, spec)
    turn_outputs: list[list[TurnOutput]] = []
    memories: list[SessionMemory] = []
    for index, truth in enumerate(truths):
        session = engine.open_session(f"sess{index:05d}")
        user = SimulatedUser(item=truth)
        initial_query = (
            doc2query(truth, seed=spec.seed) if spec.setting == "warm-start" else None
        )
        output = session.start(truth.category, initial_query=initial_query)
        outputs = [output]
        for _ in range(spec.user_turns - 1):
            replies = simulate_answer(user, output.questions)
            output = session.answer(replies)
            outputs.append(output)
        turn_outputs.append(outputs)
        memories.append(session.memory)
    return ConversationalRun(truths=truths, turn_outputs=turn_outputs, memories=memories)


def run_conversational(
    catalog: Catalog,
    spec: BenchmarkSpec,
    *,
    embedder: Embedder | None = None,
) -> BenchmarkReport:
    """Multi-turn benchmark: category (or warm-start query) in, metrics per agent turn."""
    engine = ClarifyingSearchAgent(catalog, spec.agent)
    run = run_sessions(catalog, spec, engine=engine)
    k = spec.agent.top_k
    turns = spec.user_turns
    per_turn_hit = [[] for _ in range(turns)]
    per_turn_mrr = [[] for _ in range(turns)]
    per_turn_rerank = [[] for _ in range(turns)]
    per_turn_chars = [[] for _ in range(turns)]
    for truth, outputs in zip(run.truths, run.turn_outputs):
        for t, output in enumerate(outputs):
            per_turn_hit[t].append(hit_at_k(output.items, truth.id, k))
            per_turn_mrr[t].append(mrr_at_k(output.items, truth.id, k))
            reranked = rerank(output.query, output.items, engine.reranker, engine.doc_texts, k)
            per_turn_rerank[t].append(mrr_at_k(reranked, truth.id, k))
            per_turn_chars[t].append(len(output.query))
    similarity_embedder = embedder or HashingEmbedder(spec.agent.embed_dimension)
    curves = [
        question_similarity([list(output.questions) for output in outputs], similarity_embedder)
        for outputs in run.turn_outputs
    ]
    similarity = tuple(
        _mean([curve[t] for curve in curves]) for t in range(turns - 1)
    ) if curves else ()
    total_questions = sum(len(memory.asked_questions) for memory in run.memories)
    aspects = aspect_distribution(run.memories) if total_questions else {}
    invalid_rate, trivial_rate = failure_rates(run.memories)
    return BenchmarkReport(
        setting=spec.setting,
        config=spec.to_dict(),
        k=k,
        n_queries=len(run.truths),
        per_turn_hit=tuple(_mean(v) for v in per_turn_hit),
        per_turn_mrr=tuple(_mean(v) for v in per_turn_mrr),
        per_turn_rerank_mrr=tuple(_mean(v) for v in per_turn_rerank),
        hit_at_k=_mean([x for col in per_turn_hit for x in col]),
        mrr_at_k=_mean([x for col in per_turn_mrr for x in col]),
        rerank_mrr_at_k=_mean([x for col in per_turn_rerank for x in col]),
        mean_query_chars=tuple(_mean(v) for v in per_turn_chars),
        structured_attempts=sum(m.structured_attempts for m in run.memories),
        invalid_queries=sum(m.invalid_query for m in run.memories),
        trivial_queries=sum(m.trivial_query for m in run.memories),
        invalid_rate=invalid_rate,
        trivial_rate=trivial_rate,
        question_similarity=similarity,
        aspect_distribution=aspects,
    )


def run_benchmark(catalog: Catalog, spec: BenchmarkSpec) -> BenchmarkReport:
    if spec.setting == "traditional":
        return run_traditional(catalog, spec)
    return run_conversational(catalog, spec)
