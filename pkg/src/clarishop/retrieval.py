"""Full-text retrieval over catalog documents.

Provides an Okapi-style inverted index, an exhaustive dense index with a
pluggable embedder, reciprocal rank fusion, and set-preserving reranking.
All indexes are immutable after build and safe for concurrent searches.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .catalog import LIST_FACETS, Catalog, ProductItem

BM25_K1 = 1.2
BM25_B = 0.75
RRF_K_CONST = 60.0
DEFAULT_EMBED_DIMENSION = 256

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class RetrievalError(ValueError):
    pass


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return 0x3400 <= code <= 0x4DBF or 0x4E00 <= code <= 0x9FFF or 0xF900 <= code <= 0xFAFF


def _split_scripts(run: str):
    """Yield (segment, is_cjk) spans of a single alphanumeric run."""
    start = 0
    for i in range(1, len(run) + 1):
        if i == len(run) or _is_cjk(run[i]) != _is_cjk(run[start]):
            yield run[start:i], _is_cjk(run[start])
            start = i


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; CJK runs become overlapping bigrams."""
    tokens: list[str] = []
    for run in _WORD_RE.findall(text.casefold()):
        for segment, is_cjk in _split_scripts(run):
            if is_cjk and len(segment) > 1:
                tokens.extend(segment[i : i + 2] for i in range(len(segment) - 1))
            else:
                tokens.append(segment)
    return tokens


def item_to_document_text(item: ProductItem) -> str:
    """Serialize an item to its indexed surface: title, category, then facet values."""
    parts = [item.title, item.category]
    for facet in LIST_FACETS:
        parts.extend(item.facet_values(facet))
    return " ".join(part for part in parts if part)


def catalog_document_texts(catalog: Catalog) -> dict[str, str]:
    return {item.id: item_to_document_text(item) for item in catalog}


@dataclass(frozen=True)
class RankedList:
    """Ordered (doc_id, score) pairs cut to a requested depth k.

    Scores are non-increasing, ids distinct, and score ties are ordered by
    ascending doc id.
    """

    entries: tuple[tuple[str, float], ...]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise RetrievalError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "entries", tuple((d, float(s)) for d, s in self.entries))
        if len(self.entries) > self.k:
            raise RetrievalError(f"{len(self.entries)} entries exceed k={self.k}")
        ids = [doc_id for doc_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise RetrievalError("duplicate doc ids in ranked list")
        for (id_a, score_a), (id_b, score_b) in zip(self.entries, self.entries[1:]):
            if score_b > score_a:
                raise RetrievalError("scores must be non-increasing")
            if score_b == score_a and id_b < id_a:
                raise RetrievalError("ties must be ordered by ascending doc id")

    @classmethod
    def from_scores(cls, scores: Mapping[str, float] | Iterable[tuple[str, float]], k: int) -> "RankedList":
        pairs = scores.items() if isinstance(scores, Mapping) else scores
        ranked = sorted(((d, float(s)) for d, s in pairs), key=lambda e: (-e[1], e[0]))
        return cls(entries=tuple(ranked[:k]), k=k)

    def ids(self) -> tuple[str, ...]:
        return tuple(doc_id for doc_id, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@runtime_checkable
class Embedder(Protocol):
    """Deterministic text-to-vector mapping with a fixed output dimension."""

    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


@runtime_checkable
class Reranker(Protocol):
    """Deterministic (query, document text) relevance scorer."""

    def score(self, query: str, doc_text: str) -> float: ...


def _hash_features(text: str) -> list[str]:
    tokens = tokenize(text)
    features = [f"t:{tok}" for tok in tokens]
    for tok in tokens:
        padded = f"#{tok}#"
        features.extend(f"g:{padded[i:i + 3]}" for i in range(max(len(padded) - 2, 1)))
    return features


def feature_hash_embed(text: str, dimension: int) -> np.ndarray:
    """Signed feature hashing of token unigrams and per-token character trigrams.

    L2-normalized unless no feature hashes in (empty text gives the zero vector).
    """
    if dimension < 2:
        raise RetrievalError(f"dimension must be >= 2, got {dimension}")
    vec = np.zeros(dimension, dtype=np.float64)
    for feature in _hash_features(text):
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if h & (1 << 63) else -1.0
        vec[h % dimension] += sign
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm else vec


@dataclass(frozen=True)
class HashingEmbedder:
    dimension: int = DEFAULT_EMBED_DIMENSION

    def embed(self, text: str) -> np.ndarray:
        return feature_hash_embed(text, self.dimension)


@dataclass(frozen=True)
class TokenOverlapReranker:
    """Scores by the fraction of distinct query tokens present in the document."""

    def score(self, query: str, doc_text: str) -> float:
        query_tokens = set(tokenize(query))
        if not query_tokens:
            return 0.0
        return len(query_tokens & set(tokenize(doc_text))) / len(query_tokens)


@dataclass(frozen=True)
class BM25Index:
    postings: dict[str, dict[str, int]]
    doc_len: dict[str, int]
    avgdl: float
    n_docs: int

    @classmethod
    def build(cls, texts: Mapping[str, str]) -> "BM25Index":
        if not texts:
            raise RetrievalError("cannot build a BM25 index over zero documents")
        postings: dict[str, dict[str, int]] = {}
        doc_len: dict[str, int] = {}
        for doc_id, text in texts.items():
            tokens = tokenize(text)
            doc_len[doc_id] = len(tokens)
            for token in tokens:
                postings.setdefault(token, {})
                postings[token][doc_id] = postings[token].get(doc_id, 0) + 1
        avgdl = sum(doc_len.values()) / len(doc_len)
        return cls(postings=postings, doc_len=doc_len, avgdl=avgdl, n_docs=len(doc_len))

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_bm25_index(catalog: Catalog) -> BM25Index:
    if len(catalog) == 0:
        raise RetrievalError("cannot index an empty catalog")
    return BM25Index.build(catalog_document_texts(catalog))


def bm25_search(index: BM25Index, query: str, k: int) -> RankedList:
    """Top-k by Okapi scoring with k1=1.2, b=0.75 and +1-smoothed idf."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    scores: dict[str, float] = {}
    for term in tokenize(query):
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for doc_id, tf in postings.items():
            norm = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * index.doc_len[doc_id] / index.avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (BM25_K1 + 1.0) / norm
    return RankedList.from_scores(scores, k)


@dataclass(frozen=True)
class DenseIndex:
    doc_ids: tuple[str, ...]
    matrix: np.ndarray  # unit rows; all-zero embeddings stay zero
    dimension: int

    @classmethod
    def build(cls, texts: Mapping[str, str], embedder: Embedder) -> "DenseIndex":
        if not texts:
            raise RetrievalError("cannot build a dense index over zero documents")
        doc_ids = tuple(texts.keys())
        rows = []
        for doc_id in doc_ids:
            vec = np.asarray(embedder.embed(texts[doc_id]), dtype=np.float64)
            if vec.shape != (embedder.dimension,):
                raise RetrievalError(
                    f"embedder produced shape {vec.shape}, declared dimension {embedder.dimension}"
                )
            if not np.isfinite(vec).all():
                raise RetrievalError(f"embedder produced non-finite values for {doc_id!r}")
            # Per-vector normalization keeps rows bit-identical to normalizing
            # each document on its own; axis-norms can round differently.
            norm = float(np.linalg.norm(vec))
            rows.append(vec / norm if norm else vec)
        return cls(doc_ids=doc_ids, matrix=np.stack(rows), dimension=embedder.dimension)


def build_dense_index(catalog: Catalog, embedder: Embedder) -> DenseIndex:
    if len(catalog) == 0:
        raise RetrievalError("cannot index an empty catalog")
    return DenseIndex.build(catalog_document_texts(catalog), embedder)


def dense_search(index: DenseIndex, query: str, k: int, embedder: Embedder) -> RankedList:
    """Exhaustive cosine scan; zero-norm vectors score 0 by definition."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    query_vec = np.asarray(embedder.embed(query), dtype=np.float64)
    if query_vec.shape != (index.dimension,):
        raise RetrievalError(
            f"query embedding has shape {query_vec.shape}, index dimension is {index.dimension}"
        )
    norm = float(np.linalg.norm(query_vec))
    if norm == 0.0:
        scores = {doc_id: 0.0 for doc_id in index.doc_ids}
        return RankedList.from_scores(scores, k)
    unit_query = query_vec / norm
    # Row-wise dots keep scores identical to a per-document cosine evaluation;
    # a matrix product can round ties differently.
    scores = {
        doc_id: float(np.dot(index.matrix[i], unit_query))
        for i, doc_id in enumerate(index.doc_ids)
    }
    return RankedList.from_scores(scores, k)


def rrf_fuse(lists: Sequence[RankedList], k: int, *, k_const: float = RRF_K_CONST) -> RankedList:
    """Reciprocal rank fusion: score(d) = sum over lists of 1/(k_const + rank).

    Contributions are summed in sorted order so the result is exactly
    permutation-invariant in the input lists.
    """
    if k_const <= 0:
        raise RetrievalError(f"k_const must be positive, got {k_const}")
    contributions: dict[str, list[float]] = {}
    for ranked in lists:
        for rank, (doc_id, _) in enumerate(ranked.entries, start=1):
            contributions.setdefault(doc_id, []).append(1.0 / (k_const + rank))
    scores = {doc_id: math.fsum(sorted(parts)) for doc_id, parts in contributions.items()}
    return RankedList.from_scores(scores, k)


def rerank(
    query: str,
    candidates: RankedList,
    reranker: Reranker,
    doc_texts: Mapping[str, str],
    k: int,
) -> RankedList:
    """Reorder the top-k candidates by reranker score; the document set is unchanged."""
    top = candidates.entries[:k]
    scores = {doc_id: float(reranker.score(query, doc_texts[doc_id])) for doc_id, _ in top}
    return RankedList.from_scores(scores, k)
