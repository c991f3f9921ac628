"""Side-by-side comparison of two model endpoints over one document."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from . import llm_gateway, metrics
from .attribution import best_sentence
from .chunker import ChunkConfig, chunk_document, tokenize_ws
from .corpus import CorpusStore, make_id, utc_now_iso
from .datastore import Workspace
from .errors import BothModelsFailed, QgenError
from .llm_gateway import ChatMessage, ChatRequest, ProviderRegistry

CONTEXT_TOKEN_BUDGET = 2000

ANSWER_SYSTEM_PROMPT = (
    "Answer the user's question using only the provided document text. "
    "If the document does not contain the answer, say so."
)


@dataclass
class CompareOptions:
    score: bool = False
    temperature: float = 0.0
    max_output_tokens: int = 512


@dataclass
class ComparisonRecord:
    comparison_id: str
    doc_id: str
    question: str
    model_a: str
    model_b: str
    answer_a: Optional[str]
    answer_b: Optional[str]
    error_a: Optional[str] = None
    error_b: Optional[str] = None
    latency_a_ms: Optional[int] = None
    latency_b_ms: Optional[int] = None
    metric_report_a: Optional[metrics.MetricReport] = None
    metric_report_b: Optional[metrics.MetricReport] = None
    context_truncated: bool = False
    created_at: str = field(default_factory=utc_now_iso)

    def to_dict(self) -> dict:
        return {
            "comparison_id": self.comparison_id,
            "doc_id": self.doc_id,
            "question": self.question,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "answer_a": self.answer_a,
            "answer_b": self.answer_b,
            "error_a": self.error_a,
            "error_b": self.error_b,
            "latency_a_ms": self.latency_a_ms,
            "latency_b_ms": self.latency_b_ms,
            "metric_report_a": self.metric_report_a.to_dict() if self.metric_report_a else None,
            "metric_report_b": self.metric_report_b.to_dict() if self.metric_report_b else None,
            "context_truncated": self.context_truncated,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonRecord":
        return cls(
            comparison_id=d["comparison_id"],
            doc_id=d["doc_id"],
            question=d["question"],
            model_a=d["model_a"],
            model_b=d["model_b"],
            answer_a=d["answer_a"],
            answer_b=d["answer_b"],
            error_a=d["error_a"],
            error_b=d["error_b"],
            latency_a_ms=d["latency_a_ms"],
            latency_b_ms=d["latency_b_ms"],
            metric_report_a=(
                metrics.MetricReport.from_dict(d["metric_report_a"]) if d["metric_report_a"] else None
            ),
            metric_report_b=(
                metrics.MetricReport.from_dict(d["metric_report_b"]) if d["metric_report_b"] else None
            ),
            context_truncated=d["context_truncated"],
            created_at=d["created_at"],
        )


def _truncate_tokens(text: str, budget: int) -> tuple[str, bool]:
    tokens = tokenize_ws(text)
    if len(tokens) <= budget:
        return text, False
    end = tokens[budget - 1][1][1]
    return text[:end], True


def _best_chunk_for(doc, question: str, answer: str) -> Optional[str]:
    """Chunk whose best sentence scores highest for this QA pair."""
    chunks = chunk_document(doc, ChunkConfig())
    best_text = None
    best_score = -1.0
    for chunk in chunks:
        try:
            attribution = best_sentence(chunk.text, question, answer)
        except QgenError:
            continue
        if attribution.score > best_score:
            best_score = attribution.score
            best_text = chunk.text
    return best_text


def compare(
    workspace: Workspace,
    registry: ProviderRegistry,
    doc_id: str,
    question: str,
    model_a: str,
    model_b: str,
    opts: Optional[CompareOptions] = None,
    *,
    transport=None,
) -> ComparisonRecord:
    """Query both providers concurrently; one side failing never fails the
    other; both failing raises BothModelsFailed. Appends one record."""
    opts = opts or CompareOptions()
    question = question.strip()
    if not question:
        raise QgenError("question must be nonempty")
    corpus_store = CorpusStore(workspace)
    doc = corpus_store.get_document(doc_id)

    context, truncated = _truncate_tokens(doc.canonical_text(), CONTEXT_TOKEN_BUDGET)
    request = ChatRequest(
        messages=[
            ChatMessage(role="system", content=ANSWER_SYSTEM_PROMPT),
            ChatMessage(role="user", content=f"Document:\n{context}\n\nQuestion: {question}"),
        ],
        temperature=opts.temperature,
        max_output_tokens=opts.max_output_tokens,
    )

    def ask(provider_id: str):
        provider = registry.get(provider_id)
        start = time.monotonic()
        try:
            response = llm_gateway.chat(
                provider, request, transport=transport, semaphore=registry.semaphore(provider_id)
            )
            return response.text, None, response.latency_ms
        except QgenError as exc:
            return None, exc.code, int((time.monotonic() - start) * 1000)

    with ThreadPoolExecutor(max_workers=2) as pool:
        future_a = pool.submit(ask, model_a)
        future_b = pool.submit(ask, model_b)
        answer_a, error_a, latency_a = future_a.result()
        answer_b, error_b, latency_b = future_b.result()

    if answer_a is None and answer_b is None:
        raise BothModelsFailed(f"both providers failed: {error_a}, {error_b}")

    report_a = report_b = None
    if opts.score:
        if answer_a is not None:
            chunk_text = _best_chunk_for(doc, question, answer_a)
            if chunk_text:
                report_a = metrics.score_pair(
                    question, answer_a, chunk_text, metrics.corpus_stats([chunk_text])
                )
        if answer_b is not None:
            chunk_text = _best_chunk_for(doc, question, answer_b)
            if chunk_text:
                report_b = metrics.score_pair(
                    question, answer_b, chunk_text, metrics.corpus_stats([chunk_text])
                )

    with workspace.writer_lock():
        record = ComparisonRecord(
            comparison_id=make_id(question, workspace.next_counter()),
            doc_id=doc_id,
            question=question,
            model_a=model_a,
            model_b=model_b,
            answer_a=answer_a,
            answer_b=answer_b,
            error_a=error_a,
            error_b=error_b,
            latency_a_ms=latency_a,
            latency_b_ms=latency_b,
            metric_report_a=report_a,
            metric_report_b=report_b,
            context_truncated=truncated,
        )
        workspace.save("comparisons", record.comparison_id, record.to_dict())
    return record


def list_comparisons(workspace: Workspace) -> list[ComparisonRecord]:
    return [ComparisonRecord.from_dict(r) for r in workspace.list_records("comparisons")]
