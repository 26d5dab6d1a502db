"""Faceted product catalog: JSONL ingestion, filtered queries, statistics, synthesis.

Items carry one category plus ten list-valued facets. All matching is
case-insensitive on whitespace-trimmed values; facet lists are deduplicated
and sorted at construction so downstream code sees one canonical form.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterable, Iterator

LIST_FACETS: tuple[str, ...] = (
    "brand",
    "series",
    "target_customer",
    "applicable_scenario",
    "decorative_attribute",
    "material",
    "style",
    "specification",
    "color",
    "function",
)
CATEGORY_FACET = "category"
ALL_FACETS: tuple[str, ...] = (CATEGORY_FACET,) + LIST_FACETS

QUERY_MODES = ("exact", "substring")

# At most this many values are drawn per facet when synthesizing items.
MAX_VALUES_PER_ITEM_FACET = 3


class CatalogError(ValueError):
    """Malformed catalog input or a violated catalog invariant."""

    def __init__(self, message: str, *, line: int | None = None, item_id: str | None = None):
        super().__init__(message)
        self.line = line
        self.item_id = item_id


def match_key(value: str) -> str:
    """Canonical form used for every facet/category comparison."""
    return value.strip().casefold()


def _clean_values(values: Iterable[str], *, facet: str) -> tuple[str, ...]:
    """Trim, drop empties, dedupe case-insensitively, sort deterministically."""
    seen: dict[str, str] = {}
    for raw in values:
        if not isinstance(raw, str):
            raise CatalogError(f"facet {facet!r} contains a non-string value: {raw!r}")
        value = raw.strip()
        if not value:
            continue
        seen.setdefault(match_key(value), value)
    return tuple(sorted(seen.values(), key=lambda v: (match_key(v), v)))


@dataclass(frozen=True)
class ProductItem:
    """One catalog document: a category plus ten list-valued facets."""

    id: str
    title: str
    category: str
    brand: tuple[str, ...] = ()
    series: tuple[str, ...] = ()
    target_customer: tuple[str, ...] = ()
    applicable_scenario: tuple[str, ...] = ()
    decorative_attribute: tuple[str, ...] = ()
    material: tuple[str, ...] = ()
    style: tuple[str, ...] = ()
    specification: tuple[str, ...] = ()
    color: tuple[str, ...] = ()
    function: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", self.id.strip() if isinstance(self.id, str) else self.id)
        if not self.id or not isinstance(self.id, str):
            raise CatalogError("item id must be a non-empty string", item_id=self.id or None)
        object.__setattr__(self, "title", (self.title or "").strip())
        category = (self.category or "").strip() if isinstance(self.category, str) else ""
        if not category:
            raise CatalogError(f"item {self.id!r} has an empty category", item_id=self.id)
        object.__setattr__(self, "category", category)
        for facet in LIST_FACETS:
            object.__setattr__(self, facet, _clean_values(getattr(self, facet), facet=facet))

    def facet_values(self, facet: str) -> tuple[str, ...]:
        if facet == CATEGORY_FACET:
            return (self.category,)
        if facet not in LIST_FACETS:
            raise KeyError(facet)
        return getattr(self, facet)

    def to_dict(self) -> dict:
        record: dict = {"id": self.id, "title": self.title, "category": self.category}
        for facet in LIST_FACETS:
            record[facet] = list(getattr(self, facet))
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "ProductItem":
        if not isinstance(record, dict):
            raise CatalogError(f"item record must be an object, got {type(record).__name__}")
        kwargs: dict = {
            "id": record.get("id", ""),
            "title": record.get("title", ""),
            "category": record.get("category", ""),
        }
        for facet in LIST_FACETS:
            raw = record.get(facet, [])
            if raw is None:
                raw = []
            if not isinstance(raw, list):
                raise CatalogError(f"facet {facet!r} must be an array of strings")
            kwargs[facet] = raw
        return cls(**kwargs)


class Catalog:
    """Immutable item collection with per-category buckets, id-sorted."""

    def __init__(self, items: Iterable[ProductItem]):
        ordered = sorted(items, key=lambda it: it.id)
        by_id: dict[str, ProductItem] = {}
        for item in ordered:
            if item.id in by_id:
                raise CatalogError(f"duplicate item id {item.id!r}", item_id=item.id)
            by_id[item.id] = item
        self._items: tuple[ProductItem, ...] = tuple(ordered)
        self._by_id = by_id
        buckets: dict[str, list[ProductItem]] = {}
        names: dict[str, str] = {}
        for item in self._items:
            key = match_key(item.category)
            buckets.setdefault(key, []).append(item)
            prior = names.get(key)
            names[key] = item.category if prior is None else min(prior, item.category)
        self._buckets = {key: tuple(bucket) for key, bucket in buckets.items()}
        self._category_names = names

    @property
    def items(self) -> tuple[ProductItem, ...]:
        return self._items

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(sorted(self._category_names.values(), key=match_key))

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[ProductItem]:
        return iter(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Catalog) and self._items == other._items

    def get(self, item_id: str) -> ProductItem:
        return self._by_id[item_id]

    def has_category(self, category: str) -> bool:
        return match_key(category) in self._buckets

    def bucket(self, category: str) -> tuple[ProductItem, ...]:
        return self._buckets.get(match_key(category), ())

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fp:
            for item in self._items:
                fp.write(json.dumps(item.to_dict(), ensure_ascii=False, sort_keys=True))
                fp.write("\n")


def load_catalog(path: str | Path) -> Catalog:
    """Load a line-delimited JSON catalog file.

    Raises CatalogError carrying the offending line number for malformed
    records and the offending id for duplicates.
    """
    items: list[ProductItem] = []
    seen: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"line {lineno}: invalid JSON ({exc.msg})", line=lineno) from exc
            try:
                item = ProductItem.from_dict(record)
            except CatalogError as exc:
                raise CatalogError(f"line {lineno}: {exc}", line=lineno) from exc
            if item.id in seen:
                raise CatalogError(
                    f"line {lineno}: duplicate item id {item.id!r} (first seen on line {seen[item.id]})",
                    line=lineno,
                    item_id=item.id,
                )
            seen[item.id] = lineno
            items.append(item)
    return Catalog(items)


@dataclass(frozen=True)
class Constraint:
    """One facet filter: values OR-combine, constraints AND-combine."""

    facet: str
    values: tuple[str, ...]
    mode: str = "substring"

    def __post_init__(self) -> None:
        if self.facet not in LIST_FACETS:
            raise CatalogError(f"unknown constraint facet {self.facet!r}")
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values or any(not isinstance(v, str) or not v.strip() for v in self.values):
            raise CatalogError(f"constraint on {self.facet!r} needs non-empty string values")
        if self.mode not in QUERY_MODES:
            raise CatalogError(f"unknown constraint mode {self.mode!r}")

    def matches(self, item: ProductItem) -> bool:
        item_keys = [match_key(v) for v in item.facet_values(self.facet)]
        for value in self.values:
            key = match_key(value)
            if self.mode == "exact":
                if key in item_keys:
                    return True
            elif any(key in item_key for item_key in item_keys):
                return True
        return False


@dataclass(frozen=True)
class StructuredQuery:
    category: str
    constraints: tuple[Constraint, ...] = ()
    limit: int = 100

    def __post_init__(self) -> None:
        if not self.category.strip():
            raise CatalogError("structured query needs a category")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.limit < 1:
            raise CatalogError(f"limit must be >= 1, got {self.limit}")
        facets = [c.facet for c in self.constraints]
        if len(facets) != len(set(facets)):
            raise CatalogError("at most one constraint per facet")


def execute_structured_query(catalog: Catalog, query: StructuredQuery) -> list[ProductItem]:
    """Filter the query's category bucket; returns up to `limit` items by ascending id."""
    results: list[ProductItem] = []
    for item in catalog.bucket(query.category):
        if all(constraint.matches(item) for constraint in query.constraints):
            results.append(item)
            if len(results) >= query.limit:
                break
    return results


@dataclass(frozen=True)
class CategoryStatistics:
    """Per-facet value counts over an item pool, truncated to the top-m values.

    Each facet's map is ordered by descending count with lexicographic
    tie-break, so iteration order is the ranking.
    """

    category: str
    item_count: int
    values: dict[str, dict[str, int]]

    def facet_counts(self, facet: str) -> dict[str, int]:
        return self.values.get(facet, {})

    @property
    def is_empty(self) -> bool:
        return all(not counts for counts in self.values.values())


def summarize(items: list[ProductItem], m: int) -> CategoryStatistics:
    """Count distinct normalized facet values across items, keeping top-m per facet."""
    if m < 1:
        raise CatalogError(f"m must be >= 1, got {m}")
    categories = {match_key(item.category) for item in items}
    if len(categories) > 1:
        raise CatalogError(f"summarize needs a single category, got {sorted(categories)}")
    per_facet: dict[str, dict[str, int]] = {}
    for facet in LIST_FACETS:
        counts: Counter[str] = Counter()
        display: dict[str, str] = {}
        for item in items:
            for value in item.facet_values(facet):
                key = match_key(value)
                counts[key] += 1
                prior = display.get(key)
                display[key] = value if prior is None else min(prior, value)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], display[kv[0]]))
        per_facet[facet] = {display[key]: count for key, count in ranked[:m]}
    return CategoryStatistics(
        category=items[0].category if items else "",
        item_count=len(items),
        values=per_facet,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated catalog: categories x items x facet vocabulary size.

    Items inside a category are drawn around value clusters so facet values
    correlate, the way real product lines do: an item sampled into a cluster
    prefers that cluster's value subset with probability ``cluster_focus``.
    """

    categories: int = 4
    items_per_category: int = 100
    values_per_facet: int = 8
    clusters_per_category: int = 8
    cluster_span: int = 4
    cluster_focus: float = 0.8

    def __post_init__(self) -> None:
        for name in (
            "categories",
            "items_per_category",
            "values_per_facet",
            "clusters_per_category",
            "cluster_span",
        ):
            if getattr(self, name) < 1:
                raise CatalogError(f"{name} must be >= 1")
        if not 0.0 <= self.cluster_focus <= 1.0:
            raise CatalogError("cluster_focus must be within [0, 1]")


def _assignments_per_facet(vocab_size: int) -> int:
    return sum(comb(vocab_size, k) for k in range(1, min(MAX_VALUES_PER_ITEM_FACET, vocab_size) + 1))


def generate_synthetic_catalog(seed: int, spec: SyntheticSpec) -> Catalog:
    """Deterministically synthesize a separable catalog.

    Every item draws 1-3 values per facet from a per-facet vocabulary; no two
    items in a category share the identical full facet assignment. Raises if
    the value space cannot guarantee separability.
    """
    space = _assignments_per_facet(spec.values_per_facet) ** len(LIST_FACETS)
    if space < spec.items_per_category:
        minimum = spec.values_per_facet
        while _assignments_per_facet(minimum) ** len(LIST_FACETS) < spec.items_per_category:
            minimum += 1
        raise CatalogError(
            f"value space too small for {spec.items_per_category} separable items per "
            f"category; values_per_facet must be >= {minimum}"
        )
    vocab = {
        facet: [f"{facet.replace('_', '')}{j:02d}" for j in range(spec.values_per_facet)]
        for facet in LIST_FACETS
    }
    span = min(spec.cluster_span, spec.values_per_facet)
    rng = random.Random(seed)
    items: list[ProductItem] = []
    for ci in range(spec.categories):
        category = f"category{ci:02d}"
        clusters = [
            {
                facet: rng.sample(vocab[facet], min(span, spec.values_per_facet))
                for facet in LIST_FACETS
            }
            for _ in range(spec.clusters_per_category)
        ]
        seen_assignments: set[tuple] = set()
        for ii in range(spec.items_per_category):
            for _ in range(10_000):
                cluster = rng.choice(clusters)
                assignment = []
                for facet in LIST_FACETS:
                    count = rng.randint(1, min(MAX_VALUES_PER_ITEM_FACET, spec.values_per_facet))
                    if spec.cluster_focus >= 1.0:
                        count = min(count, len(cluster[facet]))
                    picked: list[str] = []
                    while len(picked) < count:
                        pool = cluster[facet] if rng.random() < spec.cluster_focus else vocab[facet]
                        value = rng.choice(pool)
                        if value not in picked:
                            picked.append(value)
                    assignment.append(tuple(sorted(picked)))
                assignment = tuple(assignment)
                if assignment not in seen_assignments:
                    seen_assignments.add(assignment)
                    break
            else:
                raise CatalogError(
                    "could not draw a fresh facet assignment; value space too dense for "
                    f"{spec.items_per_category} items per category"
                )
            values = dict(zip(LIST_FACETS, assignment))
            title = " ".join([category] + [v for facet in LIST_FACETS for v in values[facet]])
            items.append(
                ProductItem(id=f"{category}-{ii:04d}", title=title, category=category, **values)
            )
    return Catalog(items)
