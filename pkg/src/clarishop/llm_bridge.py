"""Optional LLM-backed tools: SQL generation, query/question generation, user simulation.

Every function here either returns a validated artifact or signals a typed
failure; callers always have a deterministic fallback, so a session never
depends on a backend being present or healthy.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .agent import OTHER_OPTION, ClarificationQuestion, DemandRecord, SessionMemory
from .catalog import (
    LIST_FACETS,
    CategoryStatistics,
    Constraint,
    ProductItem,
    StructuredQuery,
    match_key,
)


class BridgeError(Exception):
    pass


class UnboundSlotError(BridgeError):
    def __init__(self, slot: str):
        super().__init__(f"unbound template slot: {slot}")
        self.slot = slot


class MalformedLLMOutput(BridgeError):
    pass


class BackendUnavailable(BridgeError):
    pass


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class BackendPolicy:
    timeout_s: float = 30.0
    retries: int = 1


BACKEND_ENDPOINT_ENV = "CLARISHOP_BACKEND_URL"
BACKEND_API_KEY_ENV = "CLARISHOP_BACKEND_KEY"


def backend_credentials_from_env(
    endpoint_var: str = BACKEND_ENDPOINT_ENV,
    key_var: str = BACKEND_API_KEY_ENV,
) -> tuple[str | None, str | None]:
    """Endpoint URL and API key for a caller-supplied backend; request shape is theirs."""
    return os.environ.get(endpoint_var), os.environ.get(key_var)


_SLOT_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")
_ALLOWED_SLOTS = {
    "dialect",
    "max_number",
    "schema",
    "category",
    "statistics",
    "question",
    "answer",
    "json_description",
    "item",
    "questions",
    "history",
}
_INDEXED_SLOT_RE = re.compile(r"^(question|answer)_\d+$")


@dataclass(frozen=True)
class PromptTemplate:
    """Named template whose {slot} placeholders come from a closed set."""

    name: str
    text: str

    def __post_init__(self) -> None:
        for slot in self.slots():
            if slot not in _ALLOWED_SLOTS and not _INDEXED_SLOT_RE.match(slot):
                raise ValueError(f"template {self.name!r} uses unknown slot {slot!r}")

    def slots(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_SLOT_RE.findall(self.text)))


def render(template: PromptTemplate, bindings: dict[str, object]) -> str:
    """Byte-exact slot substitution; raises UnboundSlotError naming any missing slot."""
    def substitute(match: re.Match) -> str:
        slot = match.group(1)
        if slot not in bindings:
            raise UnboundSlotError(slot)
        return str(bindings[slot])

    return _SLOT_RE.sub(substitute, template.text)


TEXT2SQL_TEMPLATE = PromptTemplate(
    name="text2sql",
    text=(
        "You are a SQL generation assistant. Given the confirmed shopping demands below, "
        "write one syntactically correct {dialect} query that retrieves matching records.\n"
        "Follow these rules:\n"
        "1. Output the SQL statement only, with no explanation.\n"
        '2. Select every column with "*".\n'
        '3. Cap the number of retrieved records with "LIMIT {max_number}".\n'
        "4. Build the WHERE conditions carefully and prefer the keyword 'LIKE' for facet values.\n"
        "\n"
        "Only this table may be queried:\n"
        "Table schema: {schema}\n"
        "\n"
        "Example input:\n"
        "Product category: Casual pants\n"
        "Question: Which material do you prefer for Casual pants?\n"
        "Answer: Polyester fiber\n"
        "\n"
        "Example output:\n"
        "SQL Query: SELECT * FROM item WHERE category='Casual pants' "
        "AND material LIKE '%polyester fiber%' LIMIT {max_number};\n"
        "\n"
        "Input:\n"
        "Product category: {category}\n"
        "{history}\n"
        "\n"
        "SQL Query:"
    ),
)

QUERY_GENERATION_TEMPLATE = PromptTemplate(
    name="query_generation",
    text=(
        "You are a query generation assistant. Given the user's purchasing demands, write one "
        "short natural language query for retrieving the target product.\n"
        "Follow these rules:\n"
        "1. Keep the query concise: keywords separated by spaces.\n"
        "2. Cover every confirmed purchasing requirement.\n"
        "3. Output the query only, with no explanation and no quotation marks.\n"
        "\n"
        "Product category: {category}\n"
        "{history}\n"
        "\n"
        "Query:"
    ),
)

QUESTION_GENERATION_TEMPLATE = PromptTemplate(
    name="question_generation",
    text=(
        "You are a product shopping assistant that pins down user demands by asking "
        "multiple-choice questions. To help you ask valuable questions, here is a summary of "
        "statistics about {category}.\n"
        "Statistics: {statistics}\n"
        "\n"
        "Follow these rules:\n"
        "1. Everything you generate must concern {category} and help identify what the user wants.\n"
        "2. Never generate a question that duplicates a previous one.\n"
        "3. When building options, take them from the statistical data wherever possible.\n"
        "\n"
        "Generate new multiple-choice questions based on the historical Q&A below.\n"
        "{history}\n"
        "\n"
        "Respond with JSON only, with no additional information.\n"
        "JSON format description: {json_description}\n"
        "```json"
    ),
)

USER_SIMULATION_TEMPLATE = PromptTemplate(
    name="user_simulation",
    text=(
        "You are talking with a shopping assistant who is helping you find a product you "
        "already have in mind. Follow these rules when answering:\n"
        "1. Answer every question truthfully for the target product.\n"
        '2. Prefer the provided options; if none of them fits, answer "Other".\n'
        "3. Output only the answers, without explanations and without quotation marks.\n"
        "4. Put each question's answer on its own line.\n"
        "\n"
        "Target product information: {item}\n"
        "\n"
        "Questions from the assistant: {questions}\n"
        "\n"
        "Answer the questions directly, one answer per line:"
    ),
)

DOC2QUERY_TEMPLATE = PromptTemplate(
    name="doc2query",
    text=(
        "You are a search query writer. Write one short keyword query a shopper would type to "
        "find the product below.\n"
        "Follow these rules:\n"
        "1. Keep the query concise: keywords separated by spaces.\n"
        "2. Output the query only, with no explanation and no punctuation.\n"
        "\n"
        "Product: {item}\n"
        "\n"
        "Query:"
    ),
)

RESTRICTED_DIALECT = "single-table SELECT (WHERE/LIKE/LIMIT only)"
ITEM_SCHEMA = (
    "item(id TEXT, title TEXT, category TEXT, "
    + ", ".join(f"{facet} TEXT" for facet in LIST_FACETS)
    + ")"
)
QUESTION_JSON_DESCRIPTION = (
    '[{"facet": "<one of ' + "|".join(LIST_FACETS) + '>", '
    '"question": "<question text>", "candidates": ["<option>", "..."]}]'
)


def format_qa_history(pairs: Sequence[tuple[str, str]]) -> str:
    """Question/Answer lines for prompt history; empty history renders as nothing."""
    lines: list[str] = []
    for question, answer in pairs:
        lines.append(f"Question: {question}")
        lines.append(f"Answer: {answer}")
    return "\n".join(lines)


def _demand_answer_text(demand: DemandRecord) -> str:
    parts = list(demand.chosen_options)
    if demand.free_text:
        parts.append(demand.free_text)
    return ", ".join(parts)


def memory_qa_pairs(memory: SessionMemory) -> list[tuple[str, str]]:
    return [
        (demand.question_text or "(stated upfront)", _demand_answer_text(demand))
        for demand in memory.demands
    ]


def _statistics_text(stats: CategoryStatistics) -> str:
    lines = [f"items: {stats.item_count}"]
    for facet in LIST_FACETS:
        counts = stats.facet_counts(facet)
        if counts:
            rendered = ", ".join(f"{value} ({count})" for value, count in counts.items())
            lines.append(f"{facet}: {rendered}")
    return "\n".join(lines)


def build_sql_prompt(memory: SessionMemory, max_number: int) -> str:
    return render(
        TEXT2SQL_TEMPLATE,
        {
            "dialect": RESTRICTED_DIALECT,
            "max_number": max_number,
            "schema": ITEM_SCHEMA,
            "category": memory.category,
            "history": format_qa_history(memory_qa_pairs(memory)),
        },
    )


def build_query_prompt(memory: SessionMemory) -> str:
    return render(
        QUERY_GENERATION_TEMPLATE,
        {
            "category": memory.category,
            "history": format_qa_history(memory_qa_pairs(memory)),
        },
    )


def build_question_prompt(memory: SessionMemory, stats: CategoryStatistics) -> str:
    return render(
        QUESTION_GENERATION_TEMPLATE,
        {
            "category": memory.category,
            "statistics": _statistics_text(stats),
            "history": format_qa_history(memory_qa_pairs(memory)),
            "json_description": QUESTION_JSON_DESCRIPTION,
        },
    )


def build_simulator_prompt(item: ProductItem, questions: Sequence[ClarificationQuestion]) -> str:
    question_lines = "\n".join(
        f"{i}. {q.text} Options: {json.dumps(list(q.candidates), ensure_ascii=False)}"
        for i, q in enumerate(questions, start=1)
    )
    return render(
        USER_SIMULATION_TEMPLATE,
        {
            "item": json.dumps(item.to_dict(), ensure_ascii=False, sort_keys=True),
            "questions": question_lines,
        },
    )


def build_doc2query_prompt(item: ProductItem) -> str:
    return render(
        DOC2QUERY_TEMPLATE,
        {"item": json.dumps(item.to_dict(), ensure_ascii=False, sort_keys=True)},
    )


def call_backend(backend: ChatBackend, prompt: str, policy: BackendPolicy | None = None) -> str:
    """Invoke the backend with a hard timeout and bounded retries."""
    policy = policy or BackendPolicy()
    last_error: Exception | None = None
    for _ in range(policy.retries + 1):
        executor = ThreadPoolExecutor(max_workers=1)
        try:
            future = executor.submit(backend.complete, prompt)
            return future.result(timeout=policy.timeout_s)
        except FutureTimeoutError as exc:
            last_error = exc
        except Exception as exc:  # backend is caller-supplied; contain everything
            last_error = exc
        finally:
            executor.shutdown(wait=False, cancel_futures=True)
    raise BackendUnavailable(f"backend failed after {policy.retries + 1} attempts") from last_error


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_question_json(text: str) -> list[ClarificationQuestion]:
    """Parse model output into validated questions; appends "Other" when absent.

    Raises MalformedLLMOutput for anything that does not decode into the
    documented question list shape.
    """
    fenced = _FENCE_RE.search(text)
    payload = fenced.group(1) if fenced else text
    try:
        data = json.loads(payload.strip())
    except json.JSONDecodeError as exc:
        raise MalformedLLMOutput(f"no JSON question payload found: {exc.msg}") from exc
    if isinstance(data, dict):
        data = data.get("questions", data)
    if not isinstance(data, list) or not data:
        raise MalformedLLMOutput("question payload must be a non-empty list")
    questions: list[ClarificationQuestion] = []
    for entry in data:
        if not isinstance(entry, dict):
            raise MalformedLLMOutput(f"question entry must be an object, got {type(entry).__name__}")
        facet = entry.get("facet")
        if facet not in LIST_FACETS:
            raise MalformedLLMOutput(f"unknown question facet {facet!r}")
        text_value = entry.get("question") or entry.get("text")
        if not isinstance(text_value, str) or not text_value.strip():
            raise MalformedLLMOutput("question text missing")
        raw_candidates = entry.get("candidates") or entry.get("options")
        if not isinstance(raw_candidates, list):
            raise MalformedLLMOutput("question candidates missing")
        candidates: list[str] = []
        for candidate in raw_candidates:
            if not isinstance(candidate, str) or not candidate.strip():
                raise MalformedLLMOutput("candidates must be non-empty strings")
            cleaned = candidate.strip()
            if match_key(cleaned) == match_key(OTHER_OPTION):
                continue
            if cleaned not in candidates:
                candidates.append(cleaned)
        try:
            questions.append(
                ClarificationQuestion(
                    facet=facet,
                    text=text_value.strip(),
                    candidates=tuple(candidates) + (OTHER_OPTION,),
                )
            )
        except ValueError as exc:
            raise MalformedLLMOutput(str(exc)) from exc
    return questions


_SQL_RE = re.compile(
    r"^\s*SELECT\s+\*\s+FROM\s+item\s+WHERE\s+category\s*=\s*'([^']*)'"
    r"((?:\s+AND\s+[a-z_]+\s+LIKE\s+'[^']*')*)"
    r"\s+LIMIT\s+(\d+)\s*;?\s*$",
    re.IGNORECASE,
)
_SQL_CLAUSE_RE = re.compile(r"AND\s+([a-z_]+)\s+LIKE\s+'([^']*)'", re.IGNORECASE)


def validate_sql_like(text: str, *, max_number: int = 100) -> StructuredQuery | None:
    """Parse the restricted SELECT grammar into a StructuredQuery; None means invalid.

    Accepted shape: SELECT * FROM item WHERE category='...'
    [AND <facet> LIKE '%...%']* LIMIT n;
    """
    match = _SQL_RE.match(text.strip())
    if match is None:
        return None
    category = match.group(1).strip()
    if not category:
        return None
    limit = int(match.group(3))
    if limit < 1:
        return None
    values_by_facet: dict[str, list[str]] = {}
    order: list[str] = []
    for clause in _SQL_CLAUSE_RE.finditer(match.group(2)):
        facet = clause.group(1).lower()
        if facet not in LIST_FACETS:
            return None
        value = clause.group(2).strip("%").strip()
        if not value:
            return None
        bucket = values_by_facet.setdefault(facet, [])
        if facet not in order:
            order.append(facet)
        if value not in bucket:
            bucket.append(value)
    constraints = tuple(
        Constraint(facet=facet, values=tuple(values_by_facet[facet]), mode="substring")
        for facet in order
    )
    return StructuredQuery(category=category, constraints=constraints, limit=min(limit, max_number))


def classify_sql(text: str, catalog) -> tuple[str, StructuredQuery | None]:
    """Label model-emitted SQL: invalid (unparseable), trivial (zero rows), or valid."""
    from .catalog import execute_structured_query

    query = validate_sql_like(text)
    if query is None:
        return "invalid", None
    if not execute_structured_query(catalog, query):
        return "trivial", query
    return "valid", query


def simulate_user_reply(
    backend: ChatBackend,
    item: ProductItem,
    questions: Sequence[ClarificationQuestion],
    policy: BackendPolicy | None = None,
) -> list[str]:
    """LLM-driven answers, one line per question; count mismatch is malformed."""
    raw = call_backend(backend, build_simulator_prompt(item, questions), policy)
    lines = [line.strip().strip("\"'") for line in raw.strip().splitlines() if line.strip()]
    if len(lines) != len(questions):
        raise MalformedLLMOutput(
            f"expected {len(questions)} answer lines, got {len(lines)}"
        )
    return lines
