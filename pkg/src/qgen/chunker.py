"""Token-bounded document chunking.

Tokens are whitespace-separated units, not model tokenizer pieces: the same
definition backs chunk budgets, metric n-grams, and highlight matching, so
the numbers users see stay consistent across the pipeline.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import Iterable

from .corpus import Document, Element

_TOKEN_RE = re.compile(r"\S+")

# token-edge punctuation stripped during normalization (shared with metrics
# and attribution)
_EDGE_PUNCT = string.punctuation + "‘’“”–—"


def tokenize_ws(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Split on Unicode whitespace; spans are character offsets into *text*."""
    return [(m.group(), (m.start(), m.end())) for m in _TOKEN_RE.finditer(text)]


def normalize_token(token: str) -> str:
    """Lowercase and strip punctuation from the token edges."""
    return token.lower().strip(_EDGE_PUNCT)


def normalize_tokens(text: str) -> list[str]:
    """Normalized whitespace tokens; empty after stripping are dropped."""
    out = []
    for tok, _ in tokenize_ws(text):
        norm = normalize_token(tok)
        if norm:
            out.append(norm)
    return out


@dataclass(frozen=True)
class ChunkConfig:
    max_tokens: int = 300
    overlap_tokens: int = 30
    include_headings: bool = True

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.overlap_tokens < 0 or self.overlap_tokens >= self.max_tokens:
            raise ValueError("overlap_tokens must be in [0, max_tokens)")

    def to_dict(self) -> dict:
        return {
            "max_tokens": self.max_tokens,
            "overlap_tokens": self.overlap_tokens,
            "include_headings": self.include_headings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkConfig":
        return cls(
            max_tokens=d["max_tokens"],
            overlap_tokens=d["overlap_tokens"],
            include_headings=d["include_headings"],
        )


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    element_ids: list[str]
    text: str
    token_count: int
    char_span: tuple[int, int]
    oversized: bool = False

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "element_ids": list(self.element_ids),
            "text": self.text,
            "token_count": self.token_count,
            "char_span": list(self.char_span),
            "oversized": self.oversized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            element_ids=list(d["element_ids"]),
            text=d["text"],
            token_count=d["token_count"],
            char_span=tuple(d["char_span"]),
            oversized=d.get("oversized", False),
        )


@dataclass
class _Piece:
    """A contiguous slice of one paragraph element, measured in tokens."""

    element: Element
    text: str
    span: tuple[int, int]  # in canonical text
    token_count: int
    from_split: bool  # produced by splitting an oversized paragraph


def _split_oversized(element: Element, base_offset: int, config: ChunkConfig) -> list[_Piece]:
    """Split one paragraph exceeding max_tokens.

    Cuts prefer sentence boundaries; a stretch without a usable boundary
    falls back to a token sliding window with overlap_tokens.
    """
    from .attribution import split_sentences  # deferred: attribution imports us

    tokens = tokenize_ws(element.text)
    # sentence boundaries as token indices (first token at/after each
    # sentence end)
    boundary_set = set()
    for _, (_, s_end) in split_sentences(element.text):
        idx = sum(1 for _, (t_start, _) in tokens if t_start < s_end)
        boundary_set.add(idx)
    boundary_set.add(len(tokens))
    boundaries = sorted(boundary_set)

    pieces: list[_Piece] = []
    start = 0
    while start < len(tokens):
        fitting = [b for b in boundaries if start < b and b - start <= config.max_tokens]
        if fitting:
            end = max(fitting)
        else:
            end = min(start + config.max_tokens, len(tokens))
        char_start = tokens[start][1][0]
        char_end = tokens[end - 1][1][1]
        pieces.append(
            _Piece(
                element=element,
                text=element.text[char_start:char_end],
                span=(base_offset + char_start, base_offset + char_end),
                token_count=end - start,
                from_split=True,
            )
        )
        if end >= len(tokens):
            break
        next_start = end - config.overlap_tokens
        if next_start <= start:  # always make progress
            next_start = start + 1
        start = next_start
    return pieces


def chunk_document(doc: Document, config: ChunkConfig) -> list[Chunk]:
    """Greedy deterministic packing of paragraph elements into chunks.

    Whole paragraphs accumulate while the token budget holds; a paragraph
    that alone exceeds the budget is split (sentence boundaries first, then
    a sliding token window with overlap). When include_headings is set the
    nearest preceding heading is prefixed to the chunk text and counted in
    the budget.
    """
    if not doc.elements:
        return []

    # walk elements tracking the nearest preceding heading
    pieces: list[tuple[_Piece, Element | None]] = []
    current_heading: Element | None = None
    for element in doc.elements:
        if element.kind == "heading":
            current_heading = element
            continue
        n_tokens = len(tokenize_ws(element.text))
        if n_tokens > config.max_tokens:
            for piece in _split_oversized(element, element.char_span[0], config):
                pieces.append((piece, current_heading))
        else:
            pieces.append(
                (
                    _Piece(
                        element=element,
                        text=element.text,
                        span=element.char_span,
                        token_count=n_tokens,
                        from_split=False,
                    ),
                    current_heading,
                )
            )

    chunks: list[Chunk] = []
    group: list[_Piece] = []
    group_heading: Element | None = None

    def heading_cost(heading: Element | None) -> int:
        if not config.include_headings or heading is None:
            return 0
        return len(tokenize_ws(heading.text))

    def flush():
        nonlocal group
        if not group:
            return
        body = "\n\n".join(p.text for p in group)
        element_ids = []
        if config.include_headings and group_heading is not None:
            text = group_heading.text + "\n\n" + body
            element_ids.append(group_heading.element_id)
        else:
            text = body
        for p in group:
            if p.element.element_id not in element_ids:
                element_ids.append(p.element.element_id)
        token_count = len(tokenize_ws(text))
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}-c{len(chunks)}",
                doc_id=doc.doc_id,
                element_ids=element_ids,
                text=text,
                token_count=token_count,
                char_span=(group[0].span[0], group[-1].span[1]),
                oversized=token_count > config.max_tokens,
            )
        )
        group = []

    for piece, heading in pieces:
        if piece.from_split:
            # window pieces of an oversized paragraph become chunks of their own
            flush()
            group_heading = heading
            group.append(piece)
            flush()
            continue
        same_heading = heading is group_heading or not config.include_headings
        cost = (
            sum(p.token_count for p in group)
            + piece.token_count
            + heading_cost(group_heading if group else heading)
        )
        if group and same_heading and cost <= config.max_tokens:
            group.append(piece)
        else:
            flush()
            group_heading = heading
            group.append(piece)
    flush()
    return chunks
