"""Per-turn clarification loop: analyze the category, search items, ask questions.

Each agent turn runs three stages over the session memory: statistics of the
currently matching item pool, item retrieval from a natural language query,
and entropy-guided multi-choice question generation. Sessions are
single-writer; the shared catalog and indexes are immutable.
"""

from __future__ import annotations

import math
import random
import uuid
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .catalog import (
    CATEGORY_FACET,
    LIST_FACETS,
    Catalog,
    CategoryStatistics,
    Constraint,
    StructuredQuery,
    execute_structured_query,
    match_key,
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
    catalog_document_texts,
    dense_search,
    rerank,
    rrf_fuse,
    tokenize,
)

OTHER_OPTION = "Other"
UNKNOWN_FACET = "unknown"

QUESTION_TEMPLATES: dict[str, str] = {
    "brand": "Which brand do you prefer for {category}?",
    "series": "Which product series are you interested in for {category}?",
    "target_customer": "Who will be using the {category}?",
    "applicable_scenario": "In which scenario will you use the {category}?",
    "decorative_attribute": "Which decorative details matter to you for {category}?",
    "material": "Which material do you prefer for {category}?",
    "style": "Which style of {category} do you like?",
    "specification": "Which specification do you need for {category}?",
    "color": "Which color do you prefer for {category}?",
    "function": "Which functions should the {category} have?",
}


class SessionError(Exception):
    pass


class UnknownCategoryError(SessionError):
    def __init__(self, category: str, available: Sequence[str]):
        super().__init__(f"unknown category {category!r}; available: {', '.join(available)}")
        self.category = category
        self.available = tuple(available)


class SessionProtocolError(SessionError):
    pass


class NoAskableFacetError(SessionError):
    """No facet can yield a fresh clarification question from the statistics."""


@dataclass(frozen=True)
class ClarificationQuestion:
    """Facet-targeted multi-choice question; the last candidate is always "Other"."""

    facet: str
    text: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.facet not in LIST_FACETS:
            raise ValueError(f"question facet must be a list facet, got {self.facet!r}")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not 2 <= len(self.candidates) <= 6:
            raise ValueError(f"need 2..6 candidates, got {len(self.candidates)}")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be distinct")
        if self.candidates[-1] != OTHER_OPTION:
            raise ValueError(f'last candidate must be "{OTHER_OPTION}"')

    def to_dict(self) -> dict:
        return {"facet": self.facet, "text": self.text, "candidates": list(self.candidates)}


@dataclass(frozen=True)
class DemandRecord:
    """One answered question distilled into structured demand state."""

    turn: int
    facet: str
    question_text: str
    chosen_options: tuple[str, ...] = ()
    free_text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "chosen_options", tuple(self.chosen_options))
        if not self.chosen_options and not self.free_text:
            raise ValueError("a demand needs chosen options or free text")
        if self.facet != UNKNOWN_FACET and self.facet not in LIST_FACETS:
            raise ValueError(f"unknown demand facet {self.facet!r}")

    @property
    def concrete_options(self) -> tuple[str, ...]:
        return tuple(o for o in self.chosen_options if match_key(o) != match_key(OTHER_OPTION))

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "facet": self.facet,
            "question_text": self.question_text,
            "chosen_options": list(self.chosen_options),
            "free_text": self.free_text,
        }


@dataclass
class SessionMemory:
    """Accumulated state of one conversation session."""

    session_id: str
    category: str = ""
    demands: list[DemandRecord] = field(default_factory=list)
    asked_questions: list[ClarificationQuestion] = field(default_factory=list)
    dialogue_log: list[tuple[str, object]] = field(default_factory=list)
    search_history: list[tuple[str, ...]] = field(default_factory=list)
    query_log: list[str] = field(default_factory=list)
    invalid_query: int = 0
    trivial_query: int = 0
    structured_attempts: int = 0

    def user_turns(self) -> int:
        return sum(1 for role, _ in self.dialogue_log if role == "user")

    def agent_turns(self) -> int:
        return len(self.search_history)


@dataclass(frozen=True)
class TurnOutput:
    turn: int
    questions: tuple[ClarificationQuestion, ...]
    items: RankedList
    query: str

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "questions": [q.to_dict() for q in self.questions],
            "items": [{"id": doc_id, "score": score} for doc_id, score in self.items.entries],
            "query": self.query,
        }


def build_structured_query(memory: SessionMemory, max_number: int = 100) -> StructuredQuery:
    """Fold all demands into one category-scoped query.

    Concrete chosen options become lowercase substring values; free text
    contributes its tokens on the same facet; "Other" alone leaves the facet
    unconstrained. Demands on one facet merge into a single OR constraint.
    """
    values_by_facet: dict[str, list[str]] = {}
    facet_order: list[str] = []
    for demand in memory.demands:
        if demand.facet == UNKNOWN_FACET:
            continue
        values = [match_key(o) for o in demand.concrete_options]
        if demand.free_text:
            values.extend(tokenize(demand.free_text))
        if not values:
            continue
        bucket = values_by_facet.setdefault(demand.facet, [])
        if demand.facet not in facet_order:
            facet_order.append(demand.facet)
        for value in values:
            if value not in bucket:
                bucket.append(value)
    constraints = tuple(
        Constraint(facet=facet, values=tuple(values_by_facet[facet]), mode="substring")
        for facet in facet_order
    )
    return StructuredQuery(category=memory.category, constraints=constraints, limit=max_number)


def generate_nl_query(memory: SessionMemory) -> str:
    """Category followed by every concrete option and free-text token, deduplicated."""
    seen = {match_key(memory.category)}
    parts = [memory.category]
    for demand in memory.demands:
        for option in demand.concrete_options:
            key = match_key(option)
            if key not in seen:
                seen.add(key)
                parts.append(option)
        if demand.free_text:
            for token in tokenize(demand.free_text):
                if token not in seen:
                    seen.add(token)
                    parts.append(token)
    return " ".join(parts)


def _entropy(counts: Sequence[int]) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    return -sum((c / total) * math.log2(c / total) for c in counts if c)


def generate_questions(
    memory: SessionMemory,
    stats: CategoryStatistics,
    n: int,
    *,
    candidate_count: int = 5,
) -> list[ClarificationQuestion]:
    """Pick the n most informative facets and build multi-choice questions.

    Unasked facets with at least two distinct values are ranked by Shannon
    entropy of their value counts. If fewer than n qualify, asked facets whose
    candidate set has since changed are re-allowed, then remaining facets pad
    the list in least-recently-asked order. No emitted question repeats an
    asked (facet, candidate set) pair.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    asked_pairs = {(q.facet, q.candidates) for q in memory.asked_questions}
    last_asked: dict[str, int] = {}
    for index, question in enumerate(memory.asked_questions):
        last_asked[question.facet] = index

    def candidates_for(facet: str) -> tuple[str, ...]:
        values = [
            v for v in stats.facet_counts(facet) if match_key(v) != match_key(OTHER_OPTION)
        ][:candidate_count]
        return tuple(values) + (OTHER_OPTION,)

    def entropy_rank(facet: str) -> tuple[float, int]:
        return (-_entropy(list(stats.facet_counts(facet).values())), LIST_FACETS.index(facet))

    def distinct(facet: str) -> int:
        return len(stats.facet_counts(facet))

    usable = [f for f in LIST_FACETS if distinct(f) >= 2]
    chosen = sorted((f for f in usable if f not in last_asked), key=entropy_rank)[:n]
    if len(chosen) < n:
        re_askable = sorted(
            (
                f
                for f in usable
                if f in last_asked and f not in chosen and (f, candidates_for(f)) not in asked_pairs
            ),
            key=entropy_rank,
        )
        chosen.extend(re_askable[: n - len(chosen)])
    if len(chosen) < n:
        pad = [
            f
            for f in LIST_FACETS
            if f not in chosen and distinct(f) >= 1 and (f, candidates_for(f)) not in asked_pairs
        ]
        pad.sort(key=lambda f: (last_asked.get(f, -1), LIST_FACETS.index(f)))
        chosen.extend(pad[: n - len(chosen)])
    if not chosen:
        raise NoAskableFacetError("statistics expose no facet worth asking about")
    return [
        ClarificationQuestion(
            facet=facet,
            text=QUESTION_TEMPLATES[facet].format(category=memory.category),
            candidates=candidates_for(facet),
        )
        for facet in chosen
    ]


_SEGMENT_SPLIT = (",", ";", "\n")


def _split_answer(answer: str) -> list[str]:
    segments = [answer]
    for sep in _SEGMENT_SPLIT:
        segments = [part for seg in segments for part in seg.split(sep)]
    return [seg.strip().strip("\"'").strip() for seg in segments]


def parse_user_reply(
    reply: Sequence[str],
    questions: Sequence[ClarificationQuestion],
    turn: int,
) -> list[DemandRecord]:
    """Match each answer against its question's candidates; leftovers become free text."""
    if len(reply) != len(questions):
        raise SessionProtocolError(f"expected {len(questions)} answers, got {len(reply)}")
    records: list[DemandRecord] = []
    for answer, question in zip(reply, questions):
        by_key = {match_key(c): c for c in question.candidates}
        chosen: list[str] = []
        free_segments: list[str] = []
        for segment in _split_answer(answer):
            if not segment:
                continue
            candidate = by_key.get(match_key(segment))
            if candidate is None:
                free_segments.append(segment)
            elif candidate not in chosen:
                chosen.append(candidate)
        free_text = ", ".join(free_segments) if free_segments else None
        if not chosen and free_text is None:
            chosen = [OTHER_OPTION]
        records.append(
            DemandRecord(
                turn=turn,
                facet=question.facet,
                question_text=question.text,
                chosen_options=tuple(chosen),
                free_text=free_text,
            )
        )
    return records


def analyze_category(
    memory: SessionMemory,
    catalog: Catalog,
    stats_source: str = "structured",
    *,
    max_number: int = 100,
    stats_top_m: int = 10,
    seed: int = 0,
    searcher: Callable[[str, int], RankedList] | None = None,
    structured_query: StructuredQuery | None = None,
) -> CategoryStatistics:
    """Summarize the item pool implied by the current demands.

    ``structured`` executes the demand query and falls back to the previous
    turn's retrieved items (or the whole category bucket on turn 1) when it
    matches nothing, incrementing the trivial-query counter. ``bm25``/``dense``
    summarize retriever output via the supplied searcher, ``random`` a seeded
    category sample, ``none`` nothing.
    """
    bucket = catalog.bucket(memory.category)
    if not bucket:
        raise UnknownCategoryError(memory.category, catalog.categories)
    if stats_source == "none":
        return CategoryStatistics(
            category=memory.category,
            item_count=0,
            values={facet: {} for facet in LIST_FACETS},
        )
    if stats_source == "random":
        rng = random.Random(f"{seed}:{memory.session_id}:{memory.agent_turns()}")
        sample = rng.sample(list(bucket), min(max_number, len(bucket)))
        return summarize(sample, stats_top_m)
    if stats_source in ("bm25", "dense"):
        if searcher is None:
            raise ValueError(f"stats_source {stats_source!r} needs a searcher")
        ranked = searcher(generate_nl_query(memory), max_number)
        category_key = match_key(memory.category)
        pool = [catalog.get(doc_id) for doc_id in ranked.ids()]
        pool = [item for item in pool if match_key(item.category) == category_key]
        return summarize(pool, stats_top_m)
    if stats_source != "structured":
        raise ValueError(f"unknown stats_source {stats_source!r}")

    query = structured_query if structured_query is not None else build_structured_query(memory, max_number)
    memory.structured_attempts += 1
    rows = execute_structured_query(catalog, query)
    if rows:
        return summarize(rows, stats_top_m)
    memory.trivial_query += 1
    if memory.search_history:
        category_key = match_key(memory.category)
        previous = [catalog.get(doc_id) for doc_id in memory.search_history[-1]]
        previous = [item for item in previous if match_key(item.category) == category_key]
        if previous:
            return summarize(previous, stats_top_m)
    return summarize(list(bucket[:max_number]), stats_top_m)


class ClarifyingSearchAgent:
    """Shared, immutable engine: catalog, indexes, config, optional LLM backend.

    Open one session per conversation; sessions may run concurrently.
    """

    def __init__(
        self,
        catalog: Catalog,
        config: AgentConfig | None = None,
        *,
        embedder=None,
        reranker=None,
        backend=None,
    ):
        self.catalog = catalog
        self.config = config or AgentConfig()
        self.embedder = embedder or HashingEmbedder(self.config.embed_dimension)
        self.reranker = reranker or TokenOverlapReranker()
        self.backend = backend
        self.doc_texts = catalog_document_texts(catalog)
        self._bm25: BM25Index | None = None
        self._dense: DenseIndex | None = None
        if self.config.retriever in ("bm25", "fusion") or self.config.stats_source == "bm25":
            self._bm25 = BM25Index.build(self.doc_texts)
        if self.config.retriever in ("dense", "fusion") or self.config.stats_source == "dense":
            self._dense = DenseIndex.build(self.doc_texts, self.embedder)

    @property
    def bm25_index(self) -> BM25Index:
        if self._bm25 is None:
            self._bm25 = BM25Index.build(self.doc_texts)
        return self._bm25

    @property
    def dense_index(self) -> DenseIndex:
        if self._dense is None:
            self._dense = DenseIndex.build(self.doc_texts, self.embedder)
        return self._dense

    def search(self, query: str, k: int, *, apply_rerank: bool | None = None) -> RankedList:
        """Run the configured retriever at depth k; rerank per config unless overridden."""
        if self.config.retriever == "bm25":
            ranked = bm25_search(self.bm25_index, query, k)
        elif self.config.retriever == "dense":
            ranked = dense_search(self.dense_index, query, k, self.embedder)
        else:
            ranked = rrf_fuse(
                [
                    bm25_search(self.bm25_index, query, k),
                    dense_search(self.dense_index, query, k, self.embedder),
                ],
                k,
                k_const=self.config.rrf_k_const,
            )
        if self.config.rerank if apply_rerank is None else apply_rerank:
            ranked = rerank(query, ranked, self.reranker, self.doc_texts, k)
        return ranked

    def stats_searcher(self, query: str, limit: int) -> RankedList:
        if self.config.stats_source == "dense":
            return dense_search(self.dense_index, query, limit, self.embedder)
        return bm25_search(self.bm25_index, query, limit)

    def open_session(self, session_id: str | None = None) -> "ClarifySession":
        return ClarifySession(self, session_id or uuid.uuid4().hex)


class ClarifySession:
    """Single conversation: strictly serialized steps over one SessionMemory."""

    def __init__(self, agent: ClarifyingSearchAgent, session_id: str):
        self.agent = agent
        self.memory = SessionMemory(session_id=session_id)
        self._pending: tuple[ClarificationQuestion, ...] = ()
        self._started = False

    @property
    def session_id(self) -> str:
        return self.memory.session_id

    @property
    def started(self) -> bool:
        return self._started

    @property
    def pending_questions(self) -> tuple[ClarificationQuestion, ...]:
        return self._pending

    def step(self, user_input: str | Sequence[str]) -> TurnOutput:
        """First call takes the product category; later calls take per-question answers."""
        if isinstance(user_input, str):
            if self._started:
                raise SessionProtocolError("session already started; expected per-question answers")
            return self.start(user_input)
        return self.answer(user_input)

    def start(self, category: str, initial_query: str | None = None) -> TurnOutput:
        if self._started:
            raise SessionProtocolError("session already started")
        if not self.agent.catalog.has_category(category):
            raise UnknownCategoryError(category, self.agent.catalog.categories)
        self._started = True
        self.memory.category = category
        self.memory.dialogue_log.append(("user", initial_query or category))
        if initial_query and initial_query.strip() and initial_query.strip() != category:
            # Warm start: keep the upfront query's tokens as an unconstrained demand.
            self.memory.demands.append(
                DemandRecord(
                    turn=1,
                    facet=UNKNOWN_FACET,
                    question_text="",
                    free_text=initial_query.strip(),
                )
            )
        return self._run_turn()

    def answer(self, answers: Sequence[str]) -> TurnOutput:
        if not self._started:
            raise SessionProtocolError("session not started; first input must be a category")
        if len(answers) != len(self._pending):
            raise SessionProtocolError(
                f"expected {len(self._pending)} answers, got {len(answers)}"
            )
        turn = self.memory.user_turns() + 1
        records = parse_user_reply(answers, self._pending, turn)
        self.memory.demands.extend(records)
        self.memory.dialogue_log.append(("user", list(answers)))
        return self._run_turn()

    def _run_turn(self) -> TurnOutput:
        config = self.agent.config
        memory = self.memory
        turn = memory.agent_turns() + 1
        stats = self._analyze()
        query = self._generate_query()
        items = self.agent.search(query, config.top_k)
        memory.search_history.append(items.ids())
        memory.query_log.append(query)
        questions = self._generate_questions(stats)
        memory.asked_questions.extend(questions)
        output = TurnOutput(turn=turn, questions=tuple(questions), items=items, query=query)
        memory.dialogue_log.append(("agent", output.to_dict()))
        self._pending = output.questions
        return output

    def _analyze(self) -> CategoryStatistics:
        config = self.agent.config
        structured_query = None
        if config.stats_source == "structured" and self.agent.backend is not None:
            structured_query = self._llm_structured_query()
        return analyze_category(
            self.memory,
            self.agent.catalog,
            config.stats_source,
            max_number=config.max_number,
            stats_top_m=config.stats_top_m,
            seed=config.seed,
            searcher=self.agent.stats_searcher,
            structured_query=structured_query,
        )

    def _llm_structured_query(self) -> StructuredQuery | None:
        from . import llm_bridge

        try:
            raw = llm_bridge.call_backend(
                self.agent.backend, llm_bridge.build_sql_prompt(self.memory, self.agent.config.max_number)
            )
        except llm_bridge.BridgeError:
            return None
        query = llm_bridge.validate_sql_like(raw, max_number=self.agent.config.max_number)
        if query is None:
            self.memory.invalid_query += 1
            self.memory.structured_attempts += 1
            return None
        return query

    def _generate_query(self) -> str:
        if self.agent.backend is not None:
            from . import llm_bridge

            try:
                raw = llm_bridge.call_backend(
                    self.agent.backend, llm_bridge.build_query_prompt(self.memory)
                )
                candidate = raw.strip().splitlines()[0].strip().strip("\"'") if raw.strip() else ""
                if candidate:
                    return candidate
            except llm_bridge.BridgeError:
                pass
        return generate_nl_query(self.memory)

    def _generate_questions(self, stats: CategoryStatistics) -> list[ClarificationQuestion]:
        config = self.agent.config
        llm_questions: list[ClarificationQuestion] = []
        if self.agent.backend is not None:
            llm_questions = self._llm_questions(stats)
        if len(llm_questions) >= config.questions_per_turn:
            return llm_questions[: config.questions_per_turn]
        try:
            generated = generate_questions(
                self.memory,
                stats,
                config.questions_per_turn,
                candidate_count=config.candidate_count,
            )
        except NoAskableFacetError:
            if llm_questions:
                return llm_questions
            return []
        taken_facets = {q.facet for q in llm_questions}
        merged = llm_questions + [q for q in generated if q.facet not in taken_facets]
        return merged[: config.questions_per_turn]

    def _llm_questions(self, stats: CategoryStatistics) -> list[ClarificationQuestion]:
        from . import llm_bridge

        try:
            raw = llm_bridge.call_backend(
                self.agent.backend, llm_bridge.build_question_prompt(self.memory, stats)
            )
            parsed = llm_bridge.parse_question_json(raw)
        except llm_bridge.BridgeError:
            return []
        asked_pairs = {(q.facet, q.candidates) for q in self.memory.asked_questions}
        fresh: list[ClarificationQuestion] = []
        seen_facets: set[str] = set()
        for question in parsed:
            if (question.facet, question.candidates) in asked_pairs:
                continue
            if question.facet in seen_facets:
                continue
            seen_facets.add(question.facet)
            fresh.append(question)
        return fresh

    def export_transcript(self) -> list[dict]:
        """Line-delimited view of the dialogue: one record per logged turn."""
        return [
            {"turn": index, "role": role, "payload": payload}
            for index, (role, payload) in enumerate(self.memory.dialogue_log, start=1)
        ]
