"""Document groups, documents, and structured-text ingestion.

Uploaded payloads are split into heading/paragraph elements with stable,
deterministic IDs. PDF/URL conversion is out of scope: a pre-converted
payload uses the same structured-json schema, so any external converter can
feed the system.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Optional

from .errors import (
    DocNotFound,
    DuplicateName,
    EmptyDocument,
    EmptyName,
    GroupNotFound,
    ParseError,
)

if TYPE_CHECKING:
    from .datastore import Workspace

CANONICAL_JOIN = "\n\n"

SOURCE_KINDS = ("structured-json", "markdown", "plain-text", "pre-converted")

_HEADING_RE = re.compile(r"^(#{1,6}) (.*)$")


def make_id(seed_text: str, counter: int) -> str:
    """12-hex-char id: truncated hash over (seed text, creation counter)."""
    digest = hashlib.sha256(f"{seed_text}\x00{counter}".encode("utf-8")).hexdigest()
    return digest[:12]


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Element:
    element_id: str
    kind: str  # "heading" | "paragraph"
    level: int  # heading depth, 0 for paragraphs
    text: str
    char_span: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "kind": self.kind,
            "level": self.level,
            "text": self.text,
            "char_span": list(self.char_span),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Element":
        return cls(
            element_id=d["element_id"],
            kind=d["kind"],
            level=d["level"],
            text=d["text"],
            char_span=tuple(d["char_span"]),
        )


@dataclass
class Document:
    doc_id: str
    group_id: str
    title: str
    source_kind: str
    elements: list[Element] = field(default_factory=list)
    created_at: str = field(default_factory=utc_now_iso)

    def canonical_text(self) -> str:
        return CANONICAL_JOIN.join(e.text for e in self.elements)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "group_id": self.group_id,
            "title": self.title,
            "source_kind": self.source_kind,
            "elements": [e.to_dict() for e in self.elements],
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(
            doc_id=d["doc_id"],
            group_id=d["group_id"],
            title=d["title"],
            source_kind=d["source_kind"],
            elements=[Element.from_dict(e) for e in d["elements"]],
            created_at=d["created_at"],
        )


@dataclass
class DocumentGroup:
    group_id: str
    name: str
    created_at: str = field(default_factory=utc_now_iso)
    document_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "name": self.name,
            "created_at": self.created_at,
            "document_ids": list(self.document_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentGroup":
        return cls(
            group_id=d["group_id"],
            name=d["name"],
            created_at=d["created_at"],
            document_ids=list(d["document_ids"]),
        )


# --- payload parsing ------------------------------------------------------

def parse_markdown(text: str) -> list[tuple[str, int, str]]:
    """(kind, level, text) blocks.

    Lines of 1-6 '#' plus a space are headings; maximal runs of non-blank,
    non-heading lines form one paragraph; blank lines separate paragraphs.
    """
    blocks: list[tuple[str, int, str]] = []
    para_lines: list[str] = []

    def flush_para():
        if para_lines:
            blocks.append(("paragraph", 0, "\n".join(para_lines)))
            para_lines.clear()

    for line in text.splitlines():
        m = _HEADING_RE.match(line)
        if m:
            flush_para()
            blocks.append(("heading", len(m.group(1)), m.group(2).strip()))
        elif not line.strip():
            flush_para()
        else:
            para_lines.append(line)
    flush_para()
    return blocks


def parse_plain_text(text: str) -> list[tuple[str, int, str]]:
    """Blank-line separated paragraphs, no headings."""
    blocks = []
    for raw in re.split(r"\n\s*\n", text):
        para = raw.strip("\n")
        if para.strip():
            blocks.append(("paragraph", 0, para))
    return blocks


def parse_structured_json(text: str) -> list[tuple[str, int, str]]:
    """JSON array of {"kind", "level"?, "text"} records."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", details={"line": exc.lineno, "offset": exc.colno}
        ) from exc
    if not isinstance(data, list):
        raise ParseError("structured-json payload must be a JSON array")
    blocks = []
    for i, record in enumerate(data):
        if not isinstance(record, dict):
            raise ParseError(f"record {i} is not an object")
        kind = record.get("kind")
        if kind not in ("heading", "paragraph"):
            raise ParseError(f"record {i}: kind must be 'heading' or 'paragraph'")
        text_value = record.get("text")
        if not isinstance(text_value, str) or not text_value.strip():
            raise ParseError(f"record {i}: text must be a nonempty string")
        if kind == "heading":
            level = record.get("level")
            if not isinstance(level, int) or level < 1:
                raise ParseError(f"record {i}: heading requires integer level >= 1")
        else:
            if "level" in record:
                raise ParseError(f"record {i}: level only allowed on headings")
            level = 0
        blocks.append((kind, level, text_value))
    return blocks


def parse_payload(source_kind: str, payload: bytes) -> list[tuple[str, int, str]]:
    if source_kind not in SOURCE_KINDS:
        raise ParseError(f"unknown source_kind: {source_kind}")
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"payload is not valid UTF-8 (byte {exc.start})") from exc
    if source_kind == "markdown":
        return parse_markdown(text)
    if source_kind == "plain-text":
        return parse_plain_text(text)
    # structured-json and pre-converted share the schema
    return parse_structured_json(text)


def build_elements(doc_id: str, blocks: list[tuple[str, int, str]]) -> list[Element]:
    """Assign doc-scoped ids and char spans over the canonical text."""
    elements = []
    offset = 0
    for i, (kind, level, text) in enumerate(blocks):
        if i > 0:
            offset += len(CANONICAL_JOIN)
        elements.append(
            Element(
                element_id=f"{doc_id}-e{i}",
                kind=kind,
                level=level,
                text=text,
                char_span=(offset, offset + len(text)),
            )
        )
        offset += len(text)
    return elements


# --- workspace-backed CRUD ------------------------------------------------

class CorpusStore:
    """Group/document CRUD on top of a workspace."""

    def __init__(self, workspace: "Workspace"):
        self.ws = workspace

    def create_group(self, name: str) -> DocumentGroup:
        name = name.strip()
        if not name:
            raise EmptyName("group name must be nonempty")
        with self.ws.writer_lock():
            for existing in self.ws.list_records("groups"):
                if existing["name"] == name:
                    raise DuplicateName(f"group named {name!r} already exists")
            group = DocumentGroup(group_id=make_id(name, self.ws.next_counter()), name=name)
            self.ws.save("groups", group.group_id, group.to_dict())
        return group

    def get_group(self, group_id: str) -> DocumentGroup:
        record = self.ws.load_optional("groups", group_id)
        if record is None:
            raise GroupNotFound(f"no group {group_id}")
        return DocumentGroup.from_dict(record)

    def list_groups(self) -> list[DocumentGroup]:
        return [DocumentGroup.from_dict(r) for r in self.ws.list_records("groups")]

    def delete_group(self, group_id: str) -> None:
        group = self.get_group(group_id)
        with self.ws.writer_lock():
            for doc_id in list(group.document_ids):
                self._delete_document_locked(doc_id)
            self.ws.delete("groups", group_id)

    def ingest_document(
        self, group_id: str, title: str, source_kind: str, payload: bytes
    ) -> Document:
        group = self.get_group(group_id)
        blocks = parse_payload(source_kind, payload)
        if not blocks:
            raise EmptyDocument("payload produced zero elements")
        with self.ws.writer_lock():
            doc_id = make_id(title, self.ws.next_counter())
            doc = Document(
                doc_id=doc_id,
                group_id=group_id,
                title=title,
                source_kind=source_kind,
                elements=build_elements(doc_id, blocks),
            )
            self.ws.save("documents", doc.doc_id, doc.to_dict())
            group.document_ids.append(doc.doc_id)
            self.ws.save("groups", group.group_id, group.to_dict())
        return doc

    def get_document(self, doc_id: str) -> Document:
        record = self.ws.load_optional("documents", doc_id)
        if record is None:
            raise DocNotFound(f"no document {doc_id}")
        return Document.from_dict(record)

    def list_documents(self, group_id: str) -> list[Document]:
        group = self.get_group(group_id)
        return [self.get_document(d) for d in group.document_ids]

    def delete_document(self, doc_id: str) -> None:
        self.get_document(doc_id)  # NotFound before taking the lock
        with self.ws.writer_lock():
            self._delete_document_locked(doc_id)

    def _delete_document_locked(self, doc_id: str) -> None:
        doc = self.get_document(doc_id)
        # drop group membership
        group_record = self.ws.load_optional("groups", doc.group_id)
        if group_record is not None and doc_id in group_record["document_ids"]:
            group_record["document_ids"].remove(doc_id)
            self.ws.save("groups", doc.group_id, group_record)
        # drop this document's example pairs
        for example in self.ws.list_records("examples"):
            if example["doc_id"] == doc_id:
                self.ws.delete("examples", example["example_id"])
        # datasets referencing the document are kept but flagged
        for dataset in self.ws.list_records("datasets"):
            if not dataset.get("orphaned") and any(
                pair["doc_id"] == doc_id for pair in dataset["pairs"]
            ):
                dataset["orphaned"] = True
                self.ws.save("datasets", dataset["dataset_id"], dataset)
        self.ws.delete("documents", doc_id)

    def canonical_text(self, doc_id: str) -> str:
        return self.get_document(doc_id).canonical_text()
