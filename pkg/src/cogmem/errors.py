"""Exception hierarchy shared by every engine layer.

Each error carries a stable ``code`` string; the service maps codes to wire
errors and HTTP statuses, so renaming a code is a protocol change.
"""

from __future__ import annotations


class CogMemError(Exception):
    code = "internal"
    status = 500

    def to_wire(self) -> dict:
        return {"code": self.code, "message": str(self)}


class ConfigError(CogMemError):
    code = "config_error"
    status = 500


# gateway
class InvalidUser(CogMemError):
    code = "invalid_user"
    status = 400


class AuthFailed(CogMemError):
    code = "auth_failed"
    status = 401


class TokenInvalid(CogMemError):
    code = "token_invalid"
    status = 401


class TokenExpired(CogMemError):
    code = "token_expired"
    status = 401


class UnknownSession(CogMemError):
    code = "unknown_session"
    status = 404


class AlreadyClosed(CogMemError):
    code = "already_closed"
    status = 409


# conversation context
class SessionClosed(CogMemError):
    code = "session_closed"
    status = 409


class EmptyText(CogMemError):
    code = "empty_text"
    status = 400


# relevance
class InvalidWeights(CogMemError):
    code = "invalid_weights"
    status = 500


# storage
class StoreUnavailable(CogMemError):
    code = "store_unavailable"
    status = 503


class CorruptJournal(CogMemError):
    code = "corrupt_journal"
    status = 500


class QuotaExceeded(CogMemError):
    code = "quota_exceeded"
    status = 507


class UnknownRecord(CogMemError):
    code = "unknown_record"
    status = 404


# knowledge
class BadFactFile(CogMemError):
    code = "bad_fact_file"
    status = 500

    def __init__(self, line: int, reason: str = "malformed fact line"):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NoAnswer(CogMemError):
    """Neither knowledge layer matched. A signal for callers, not a fault."""

    code = "no_answer"
    status = 404


# service / cli
class BadTranscript(CogMemError):
    code = "bad_transcript"
    status = 400

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class BadRequest(CogMemError):
    code = "bad_request"
    status = 400


class BindFailed(CogMemError):
    code = "bind_failed"
    status = 500


_BY_CODE = {
    cls.code: cls
    for cls in (
        ConfigError, InvalidUser, AuthFailed, TokenInvalid, TokenExpired,
        UnknownSession, AlreadyClosed, SessionClosed, EmptyText, InvalidWeights,
        StoreUnavailable, CorruptJournal, QuotaExceeded, UnknownRecord,
        NoAnswer, BadRequest, BindFailed,
    )
}


def from_wire(payload: dict) -> CogMemError:
    """Rebuild a library exception from a wire error body."""
    code = payload.get("code", "internal")
    message = payload.get("message", "")
    if code == BadFactFile.code:
        return BadFactFile(int(payload.get("line", 0)), message)
    if code == BadTranscript.code:
        return BadTranscript(int(payload.get("line", 0)), message)
    cls = _BY_CODE.get(code, CogMemError)
    return cls(message)
