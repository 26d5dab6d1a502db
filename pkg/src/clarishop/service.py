"""HTTP session API over the clarification agent.

A thin adapter: payloads map one-to-one onto library calls, so an API-driven
session produces exactly the turn outputs a library-driven session would.
Sessions live in memory with an idle TTL; one lock per session serializes its
steps while distinct sessions proceed concurrently.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .agent import ClarifySession, ClarifyingSearchAgent, TurnOutput, UnknownCategoryError
from .catalog import LIST_FACETS

DEFAULT_SESSION_TTL_S = 30 * 60.0


class CreateSessionRequest(BaseModel):
    category: str


class AnswerItem(BaseModel):
    question_index: int
    selected: list[str] = Field(default_factory=list)
    free_text: str | None = None


class AnswersRequest(BaseModel):
    answers: list[AnswerItem]


@dataclass
class _SessionEntry:
    session: ClarifySession
    state: str = "awaiting_answers"
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)
    current: TurnOutput | None = None


class SessionStore:
    def __init__(self, ttl_s: float = DEFAULT_SESSION_TTL_S):
        self.ttl_s = ttl_s
        self._entries: dict[str, _SessionEntry] = {}
        self._lock = threading.Lock()

    def _sweep(self) -> None:
        now = time.monotonic()
        stale = [sid for sid, e in self._entries.items() if now - e.last_access > self.ttl_s]
        for sid in stale:
            del self._entries[sid]

    def add(self, entry: _SessionEntry) -> None:
        with self._lock:
            self._sweep()
            self._entries[entry.session.session_id] = entry

    def get(self, session_id: str) -> _SessionEntry:
        with self._lock:
            self._sweep()
            entry = self._entries.get(session_id)
            if entry is None:
                raise KeyError(session_id)
            entry.last_access = time.monotonic()
            return entry

    def __len__(self) -> int:
        with self._lock:
            self._sweep()
            return len(self._entries)


def answers_to_reply(answers: list[AnswerItem], expected: int) -> list[str]:
    """Flatten structured answers into the per-question strings the library takes."""
    if len(answers) != expected:
        raise HTTPException(
            status_code=422,
            detail=f"expected {expected} answers, got {len(answers)}",
        )
    indexes = sorted(a.question_index for a in answers)
    if indexes != list(range(expected)):
        raise HTTPException(
            status_code=422,
            detail=f"question_index values must cover 0..{expected - 1} exactly once",
        )
    by_index = {a.question_index: a for a in answers}
    reply: list[str] = []
    for i in range(expected):
        answer = by_index[i]
        parts = [s for s in answer.selected if s.strip()]
        if answer.free_text and answer.free_text.strip():
            parts.append(answer.free_text.strip())
        reply.append(", ".join(parts))
    return reply


def _session_view(agent: ClarifyingSearchAgent, entry: _SessionEntry) -> dict:
    session = entry.session
    output = entry.current
    items = []
    if output is not None:
        for doc_id, score in output.items.entries:
            item = agent.catalog.get(doc_id)
            facets = {
                facet: list(item.facet_values(facet))
                for facet in LIST_FACETS
                if item.facet_values(facet)
            }
            items.append(
                {
                    "id": item.id,
                    "title": item.title,
                    "category": item.category,
                    "score": score,
                    "facets": facets,
                }
            )
    return {
        "session_id": session.session_id,
        "state": entry.state,
        "turn": output.turn if output is not None else 0,
        "category": session.memory.category,
        "questions": [q.to_dict() for q in (output.questions if output else ())],
        "items": items,
        "demands": [d.to_dict() for d in session.memory.demands],
        "counters": {
            "structured_attempts": session.memory.structured_attempts,
            "invalid_query": session.memory.invalid_query,
            "trivial_query": session.memory.trivial_query,
        },
    }


def create_app(
    agent: ClarifyingSearchAgent,
    *,
    session_ttl_s: float = DEFAULT_SESSION_TTL_S,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="clarishop", version="0.1.0")
    store = SessionStore(ttl_s=session_ttl_s)

    def get_entry(session_id: str) -> _SessionEntry:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "categories": len(agent.catalog.categories),
            "items": len(agent.catalog),
            "sessions": len(store),
        }

    @app.get("/categories")
    def categories() -> dict:
        return {"categories": list(agent.catalog.categories)}

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict:
        session = agent.open_session(uuid.uuid4().hex)
        try:
            output = session.start(request.category)
        except UnknownCategoryError as exc:
            raise HTTPException(
                status_code=404,
                detail={
                    "error": f"unknown category {request.category!r}",
                    "available_categories": list(exc.available),
                },
            )
        entry = _SessionEntry(session=session, current=output)
        store.add(entry)
        return _session_view(agent, entry)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _session_view(agent, get_entry(session_id))

    @app.post("/sessions/{session_id}/answers")
    def submit_answers(session_id: str, request: AnswersRequest) -> dict:
        entry = get_entry(session_id)
        with entry.lock:
            if entry.state == "closed":
                raise HTTPException(status_code=409, detail="session is closed")
            expected = len(entry.session.pending_questions)
            reply = answers_to_reply(request.answers, expected)
            entry.current = entry.session.answer(reply)
            return _session_view(agent, entry)

    @app.delete("/sessions/{session_id}")
    def close_session(session_id: str) -> dict:
        entry = get_entry(session_id)
        with entry.lock:
            entry.state = "closed"
        return {"session_id": session_id, "state": "closed"}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
