"""Chat, voting and reporting over HTTP/JSON.

Endpoints: POST /session, POST /chat, POST /vote, GET /report,
GET /dialogues/{id}.  Request bodies are validated strictly (unknown fields
are rejected).  Model weights are read-only after load; the vote store is an
append-only JSON-lines file behind a single-writer lock, so a restart loses
nothing.

In A/B mode each chat line carries one candidate per model plus the
discriminator's tie flag; the conversation thread continues with the
human-chosen answer once a vote lands, or the adversarially chosen one
before that.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import ModelConfig
from .corpus import (
    Vocabulary,
    detokenize,
    encode_context,
    indices_to_tokens,
    tokenize,
)
from .errors import UsageError
from .evaluation import (
    ADVERSARIAL,
    HUMAN,
    TIE,
    VoteRecord,
    append_vote,
    load_votes,
    rank_answers,
    report,
)
from .model import DiscriminatorParams, GeneratorParams, answer_score, greedy_decode

DEFAULT_ADDR = "127.0.0.1:8080"
ADDR_ENV_VAR = "ADVCHAT_ADDR"


class NotFound(UsageError):
    """Unknown session or line id."""


@dataclass
class ChatLine:
    line_id: str
    session_id: str
    utterance: str
    candidates: dict[str, dict]  # model id -> {"text", "score", "tokens"}
    tie: bool
    chosen: str  # model id whose answer currently continues the thread


@dataclass
class ChatSession:
    session_id: str
    created: float
    history: list[list[str]] = field(default_factory=list)  # token lists
    line_ids: list[str] = field(default_factory=list)


class ChatService:
    """Session bookkeeping plus the chat/vote/report operations, independent
    of the HTTP plumbing so it can be driven directly from tests and the
    terminal REPL."""

    def __init__(
        self,
        generators: dict[str, GeneratorParams],
        disc: DiscriminatorParams | None,
        vocab: Vocabulary,
        config: ModelConfig,
        vote_store: Path | str,
    ) -> None:
        if not generators:
            raise UsageError("at least one generator is required")
        self.generators = dict(sorted(generators.items()))
        self.disc = disc
        self.vocab = vocab
        self.config = config
        self.vote_store = Path(vote_store)
        self.sessions: dict[str, ChatSession] = {}
        self.lines: dict[str, ChatLine] = {}
        self._lock = threading.Lock()
        self._session_counter = 0

    # -- sessions ----------------------------------------------------------

    def create_session(self) -> dict:
        with self._lock:
            self._session_counter += 1
            session_id = f"s{self._session_counter}"
            self.sessions[session_id] = ChatSession(session_id, time.time())
        return {"session_id": session_id}

    def _session(self, session_id: str) -> ChatSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise NotFound(f"unknown session id {session_id!r}") from None

    # -- chat ---------------------------------------------------------------

    def chat(self, session_id: str, utterance: str) -> dict:
        if not utterance or not utterance.strip():
            raise UsageError("utterance must not be empty")
        if not session_id:
            session_id = self.create_session()["session_id"]
        session = self._session(session_id)

        tokens = tokenize(utterance)
        session.history.append(tokens)
        context = encode_context(
            session.history[-self.config.n_u:], self.vocab, self.config.s_s
        )

        decoded = {
            model_id: greedy_decode(context, gen).answer
            for model_id, gen in self.generators.items()
        }
        candidates: dict[str, dict] = {}
        for model_id, answer in decoded.items():
            score = (
                answer_score(context, answer, self.disc)
                if self.disc is not None and answer.effective_length > 0
                else None
            )
            candidates[model_id] = {
                "text": detokenize(indices_to_tokens(answer, self.vocab)),
                "score": score,
                "tokens": indices_to_tokens(answer, self.vocab),
            }

        tie = False
        chosen = min(self.generators)
        if self.disc is not None and len(decoded) >= 2:
            ranking = rank_answers(context, sorted(decoded.items()), self.disc)
            tie = ranking.tie
            chosen = min(self.generators) if tie else ranking.winner

        with self._lock:
            line_id = f"{session_id}:l{len(session.line_ids)}"
            session.line_ids.append(line_id)
            self.lines[line_id] = ChatLine(
                line_id, session_id, utterance, candidates, tie, chosen
            )
            if self.disc is not None and len(decoded) >= 2:
                append_vote(
                    self.vote_store,
                    VoteRecord(line_id, TIE if tie else chosen, ADVERSARIAL),
                )
        session.history.append(candidates[chosen]["tokens"])
        return {
            "session_id": session_id,
            "line_id": line_id,
            "candidates": [
                {"model": model_id, "text": c["text"], "score": c["score"]}
                for model_id, c in sorted(candidates.items())
            ],
            "tie": tie,
        }

    # -- votes ---------------------------------------------------------------

    def vote(self, line_id: str, winner: str) -> dict:
        try:
            line = self.lines[line_id]
        except KeyError:
            raise NotFound(f"unknown line id {line_id!r}") from None
        if winner != TIE and winner not in line.candidates:
            raise UsageError(
                f"winner must be one of {sorted(line.candidates)} or {TIE!r}"
            )
        record = VoteRecord(line_id, winner, HUMAN)
        with self._lock:
            append_vote(self.vote_store, record)
            if winner != TIE:
                session = self.sessions[line.session_id]
                if session.line_ids and session.line_ids[-1] == line_id:
                    session.history[-1] = line.candidates[winner]["tokens"]
                    line.chosen = winner
        return {"line_id": line_id, "winner": winner, "source": HUMAN}

    # -- reporting -----------------------------------------------------------

    def report(self) -> dict:
        summary = report(load_votes(self.vote_store))
        return {
            "human": _tally_payload(summary["human"]),
            "adversarial": _tally_payload(summary["adversarial"]),
            "jaccard": summary["jaccard"],
        }

    def dialogue(self, session_id: str) -> dict:
        session = self._session(session_id)
        lines = []
        for line_id in session.line_ids:
            line = self.lines[line_id]
            lines.append(
                {
                    "line_id": line_id,
                    "utterance": line.utterance,
                    "candidates": [
                        {"model": m, "text": c["text"], "score": c["score"]}
                        for m, c in sorted(line.candidates.items())
                    ],
                    "tie": line.tie,
                    "chosen": line.chosen,
                }
            )
        return {"session_id": session_id, "lines": lines}


def _tally_payload(summary) -> dict:
    return {
        "counts": summary.counts,
        "percentages": summary.percentages,
        "contested": summary.contested,
    }


# ---------------------------------------------------------------------------
# HTTP plumbing
# ---------------------------------------------------------------------------

_SCHEMAS = {
    "/session": set(),
    "/chat": {"session_id", "utterance"},
    "/vote": {"line_id", "winner"},
}

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
}


def make_handler(service: ChatService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args) -> None:  # tests stay quiet
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_file(self, path: Path) -> None:
            body = path.read_bytes()
            self.send_response(200)
            self.send_header(
                "Content-Type",
                _CONTENT_TYPES.get(path.suffix, "application/octet-stream"),
            )
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self) -> None:
            route = self.path.rstrip("/") or "/"
            if route not in _SCHEMAS:
                self._send(404, {"error": f"no such endpoint {route}"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(raw.decode("utf-8")) if raw.strip() else {}
                if not isinstance(payload, dict):
                    raise UsageError("request body must be a JSON object")
                unknown = set(payload) - _SCHEMAS[route]
                if unknown:
                    raise UsageError(f"unknown fields: {sorted(unknown)}")
                if route == "/session":
                    self._send(200, service.create_session())
                elif route == "/chat":
                    self._send(
                        200,
                        service.chat(
                            payload.get("session_id", ""),
                            payload.get("utterance", ""),
                        ),
                    )
                else:
                    self._send(
                        200,
                        service.vote(
                            payload.get("line_id", ""), payload.get("winner", "")
                        ),
                    )
            except json.JSONDecodeError:
                self._send(400, {"error": "request body is not valid JSON"})
            except NotFound as exc:
                self._send(404, {"error": str(exc)})
            except UsageError as exc:
                self._send(400, {"error": str(exc)})

        def do_GET(self) -> None:
            path = self.path.split("?", 1)[0]
            if path == "/report":
                self._send(200, service.report())
                return
            if path.startswith("/dialogues/"):
                session_id = path[len("/dialogues/"):]
                try:
                    self._send(200, service.dialogue(session_id))
                except NotFound as exc:
                    self._send(404, {"error": str(exc)})
                return
            if ui_dir is not None:
                name = "index.html" if path in ("", "/") else path.lstrip("/")
                candidate = (ui_dir / name).resolve()
                if candidate.is_file() and str(candidate).startswith(str(ui_dir.resolve())):
                    self._send_file(candidate)
                    return
            self._send(404, {"error": f"no such endpoint {path}"})

    return Handler


def make_server(
    service: ChatService, addr: str = DEFAULT_ADDR, ui_dir: Path | str | None = None
) -> ThreadingHTTPServer:
    host, _, port = addr.partition(":")
    if not port:
        raise UsageError(f"listen address must be host:port, got {addr!r}")
    ui = Path(ui_dir) if ui_dir is not None else None
    return ThreadingHTTPServer((host, int(port)), make_handler(service, ui))
