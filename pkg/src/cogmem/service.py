"""JSON-over-HTTP service exposing the engine, plus a client with the same
method surface as :class:`Engine`. The framing is described in
docs/protocol.md.

One request is one library call. Engine errors come back as their stable
code with the exception's HTTP status; malformed requests are rejected with
400 before the engine is touched.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

from .conversation import Speaker, Turn
from .engine import Engine, MemoryDump
from .errors import AuthFailed, BadRequest, BindFailed, CogMemError, from_wire
from .gateway import AuthToken, Exchange, SessionHandle
from .interaction import LtmRecord
from .knowledge import KnowledgeAnswer
from .pipeline import ClosureReport

log = logging.getLogger(__name__)

PREFIX = "/v1/"
MAX_BODY = 1 << 20


def _need(body: dict, name: str, kind: type = str, default: Any = ...) -> Any:
    if name not in body:
        if default is ...:
            raise BadRequest(f"missing field {name!r}")
        return default
    value = body[name]
    # bool is an int subclass; a flag is not a count
    if not isinstance(value, kind) or (isinstance(value, bool) and kind is int):
        raise BadRequest(f"field {name!r} has the wrong type")
    return value


def _speaker(body: dict) -> Speaker:
    try:
        return Speaker.parse(_need(body, "speaker", str, "user"))
    except ValueError:
        raise BadRequest(f"unknown speaker {body.get('speaker')!r}") from None


class Endpoints:
    """Maps endpoint names to engine calls. Each returns a JSON-ready dict."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.routes: dict[str, Callable[[dict], dict]] = {
            "authenticate": self.authenticate,
            "open-session": self.open_session,
            "append-turn": self.append_turn,
            "close-session": self.close_session,
            "query-memory": self.query_memory,
            "resolve-knowledge": self.resolve_knowledge,
            "inspect": self.inspect,
        }

    def authenticate(self, body: dict) -> dict:
        return self.engine.authenticate(_need(body, "user"), _need(body, "credential")).to_dict()

    def open_session(self, body: dict) -> dict:
        return self.engine.open_session(_need(body, "token")).to_dict()

    def append_turn(self, body: dict) -> dict:
        session, text = _need(body, "session"), _need(body, "text")
        speaker = _speaker(body)
        route = _need(body, "route", bool, True)
        if speaker is Speaker.USER and route:
            return self.engine.converse(session, text).to_dict()
        return {"turn": self.engine.append_turn(session, speaker, text).to_dict()}

    def close_session(self, body: dict) -> dict:
        return self.engine.close_session(_need(body, "session")).to_dict()

    def query_memory(self, body: dict) -> dict:
        limit = _need(body, "limit", int, 10)
        if limit < 1:
            raise BadRequest("limit must be positive")
        records = self.engine.query_memory(_need(body, "token"), _need(body, "query"), limit)
        return {"records": [r.to_dict() for r in records]}

    def resolve_knowledge(self, body: dict) -> dict:
        return self.engine.resolve_knowledge(_need(body, "token"), _need(body, "query")).to_dict()

    def inspect(self, body: dict) -> dict:
        auth = self.engine.gateway.validate_token(_need(body, "token"))
        limit = _need(body, "trace_limit", int, 20)
        return self.engine.inspect(auth.user, limit).to_dict()


class _Handler(BaseHTTPRequestHandler):
    server: "CogMemServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, payload: dict) -> None:
        data = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, code: str, message: str, **extra) -> None:
        self._send(status, {"error": {"code": code, "message": message, **extra}})

    def do_GET(self):
        if self.path == PREFIX + "health":
            self._send(200, {"status": "ok", "mode": self.server.endpoints.engine.mode.value})
        else:
            self._error(404, "not_found", f"no such endpoint {self.path}")

    def do_POST(self):
        name = self.path[len(PREFIX):] if self.path.startswith(PREFIX) else None
        route = self.server.endpoints.routes.get(name) if name else None
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if not 0 <= length <= MAX_BODY:
            self._error(400, "bad_request", "missing or oversized Content-Length")
            return
        raw = self.rfile.read(length)
        if route is None:
            self._error(404, "not_found", f"no such endpoint {self.path}")
            return
        try:
            body = json.loads(raw.decode("utf-8")) if raw else None
            if not isinstance(body, dict):
                raise BadRequest("request body must be a JSON object")
            self._send(200, route(body))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._error(400, "bad_request", f"malformed JSON: {exc}")
        except CogMemError as exc:
            extra = {"line": exc.line} if hasattr(exc, "line") else {}
            self._error(exc.status, exc.code, str(exc), **extra)
        except Exception as exc:  # noqa: BLE001 - the wire must always answer
            log.exception("internal error on %s", self.path)
            self._error(500, "internal", f"{type(exc).__name__}: {exc}")


class CogMemServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, engine: Engine, address: tuple[str, int]):
        self.endpoints = Endpoints(engine)
        try:
            super().__init__(address, _Handler)
        except OSError as exc:
            raise BindFailed(f"cannot bind {address[0]}:{address[1]}: {exc}") from exc

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> threading.Thread:
        """Serve on a daemon thread (tests and embedding)."""
        thread = threading.Thread(
            target=self.serve_forever, kwargs={"poll_interval": 0.05}, name="cogmem-service", daemon=True
        )
        thread.start()
        return thread

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise BindFailed(f"bind address must be host:port, got {bind!r}")
    return host or "127.0.0.1", int(port)


class ServiceClient:
    """Talks to a running service; mirrors the Engine's library methods."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._tokens: dict[str, str] = {}

    def call(self, name: str, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            f"{self.base_url}{PREFIX}{name}", data=data, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            payload = json.loads(exc.read() or b"{}")
            raise from_wire(payload.get("error", {})) from None

    @staticmethod
    def _token(token: AuthToken | str) -> str:
        return token.token if isinstance(token, AuthToken) else token

    def authenticate(self, user: str, credential: str) -> AuthToken:
        token = AuthToken.from_dict(self.call("authenticate", {"user": user, "credential": credential}))
        self._tokens[user] = token.token
        return token

    def issue_token(self, user: str) -> AuthToken:
        raise AuthFailed("the service issues tokens only against credentials")

    def open_session(self, token: AuthToken | str) -> SessionHandle:
        return SessionHandle.from_dict(self.call("open-session", {"token": self._token(token)}))

    def append_turn(self, session: str, speaker: Speaker | str, text: str) -> Turn:
        body = {"session": session, "speaker": Speaker.parse(speaker).value, "text": text, "route": False}
        return Turn.from_dict(self.call("append-turn", body)["turn"])

    def converse(self, session: str, text: str) -> Exchange:
        return Exchange.from_dict(self.call("append-turn", {"session": session, "text": text}))

    def close_session(self, session: str) -> ClosureReport:
        return ClosureReport.from_dict(self.call("close-session", {"session": session}))

    def query_memory(self, token: AuthToken | str, query: str, limit: int = 10) -> list[LtmRecord]:
        raw = self.call("query-memory", {"token": self._token(token), "query": query, "limit": limit})
        return [LtmRecord.from_dict(r) for r in raw["records"]]

    def resolve_knowledge(self, token: AuthToken | str, query: str) -> KnowledgeAnswer:
        return KnowledgeAnswer.from_dict(
            self.call("resolve-knowledge", {"token": self._token(token), "query": query})
        )

    def inspect(self, user: str, trace_limit: int = 20) -> MemoryDump:
        if user not in self._tokens:
            raise AuthFailed(f"no token held for {user!r}; authenticate first")
        return MemoryDump.from_dict(self.call("inspect", {"token": self._tokens[user], "trace_limit": trace_limit}))
