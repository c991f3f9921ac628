"""Exception hierarchy shared by every module.

Each error carries a stable machine ``code`` so the HTTP layer and the CLI
can map failures without string matching.
"""

from __future__ import annotations

from typing import Any, Optional


class QgenError(Exception):
    """Base class; ``code`` is stable, ``message`` is for humans."""

    code = "error"
    http_status = 400

    def __init__(self, message: str = "", details: Optional[dict[str, Any]] = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details or {}

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# --- corpus ---------------------------------------------------------------

class EmptyName(QgenError):
    code = "empty_name"
    http_status = 422


class DuplicateName(QgenError):
    code = "duplicate_name"
    http_status = 409


class NotFound(QgenError):
    code = "not_found"
    http_status = 404


class GroupNotFound(NotFound):
    code = "group_not_found"


class EmptyGroup(GroupNotFound):
    # a group with zero documents; surfaced with the same 404-class semantics
    code = "empty_group"


class DocNotFound(NotFound):
    code = "document_not_found"


class ParseError(QgenError):
    code = "parse_error"
    http_status = 422


class EmptyDocument(QgenError):
    code = "empty_document"
    http_status = 422


# --- llm gateway ----------------------------------------------------------

class DuplicateProvider(QgenError):
    code = "duplicate_provider"
    http_status = 409


class ProviderNotFound(NotFound):
    code = "provider_not_found"


class AuthError(QgenError):
    code = "auth_error"
    http_status = 502


class RateLimited(QgenError):
    code = "rate_limited"
    http_status = 502


class Timeout(QgenError):
    code = "timeout"
    http_status = 504


class ProtocolError(QgenError):
    code = "protocol_error"
    http_status = 502


class UpstreamError(QgenError):
    code = "upstream_error"
    http_status = 502


# --- promptkit ------------------------------------------------------------

class NoExamples(QgenError):
    code = "no_examples"
    http_status = 422


class UnparseableResponse(QgenError):
    code = "unparseable_response"
    http_status = 502


class AllChunksFailed(QgenError):
    code = "all_chunks_failed"
    http_status = 502


# --- metrics --------------------------------------------------------------

class EmptyCandidate(QgenError):
    code = "empty_candidate"
    http_status = 422


class EmptyReference(QgenError):
    code = "empty_reference"
    http_status = 422


class EmptyCorpus(QgenError):
    code = "empty_corpus"
    http_status = 422


class UnknownMetric(QgenError):
    code = "unknown_metric"
    http_status = 422


class EmptyChunk(QgenError):
    code = "empty_chunk"
    http_status = 422


# --- datastore ------------------------------------------------------------

class CorruptRecord(QgenError):
    code = "corrupt_record"
    http_status = 500


class WorkspaceLocked(QgenError):
    code = "workspace_locked"
    http_status = 409


class DatasetNotFound(NotFound):
    code = "dataset_not_found"


class TooFewPairs(QgenError):
    code = "too_few_pairs"
    http_status = 422


# --- trainjobs ------------------------------------------------------------

class UnknownPlaceholder(QgenError):
    code = "unknown_placeholder"
    http_status = 422


class MissingExport(QgenError):
    code = "missing_export"
    http_status = 422


class SpawnError(QgenError):
    code = "spawn_error"
    http_status = 500


class Conflict(QgenError):
    code = "conflict"
    http_status = 409


class IllegalTransition(QgenError):
    code = "illegal_transition"
    http_status = 409


# --- explorer -------------------------------------------------------------

class BothModelsFailed(QgenError):
    code = "both_models_failed"
    http_status = 502
