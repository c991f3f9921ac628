"""Prompt construction, model-output parsing, and the generation pipeline.

One HTTP request per chunk asks for all questions_per_chunk pairs at once.
The output contract (a JSON array of question/answer objects) is versioned
so later template changes do not silently alter reproducibility.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import llm_gateway, metrics
from .attribution import best_sentence, highlight_spans
from .chunker import Chunk, ChunkConfig, chunk_document
from .corpus import CorpusStore, make_id, utc_now_iso
from .datastore import DatasetRecord, GenerationFailure, QAPair, Workspace
from .errors import (
    AllChunksFailed,
    EmptyGroup,
    NoExamples,
    NotFound,
    QgenError,
    UnparseableResponse,
)
from .llm_gateway import ChatMessage, ChatRequest, ProviderRegistry

PROMPT_TEMPLATE_VERSION = "1"

SYSTEM_PROMPT = (
    "You generate question-answer pairs from a provided passage. "
    "Respond with only a JSON array of objects, each with exactly two string "
    'fields "question" and "answer". Every answer must be supported by the '
    "passage. Do not add commentary outside the JSON array."
)


@dataclass
class ExamplePair:
    example_id: str
    doc_id: str
    question: str
    answer: str

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("question and answer must be nonempty")

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "doc_id": self.doc_id,
            "question": self.question,
            "answer": self.answer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExamplePair":
        return cls(
            example_id=d["example_id"],
            doc_id=d["doc_id"],
            question=d["question"],
            answer=d["answer"],
        )


@dataclass
class GenerationConfig:
    provider_id: str
    chunk_config: ChunkConfig = field(default_factory=ChunkConfig)
    questions_per_chunk: int = 2
    prompt_mode: str = "zero-shot"  # or "few-shot"
    num_examples: int = 0
    temperature: float = 0.7
    metrics: tuple[str, ...] = metrics.METRIC_NAMES
    seed: int = 0

    def __post_init__(self):
        if self.questions_per_chunk < 1:
            raise ValueError("questions_per_chunk must be >= 1")
        if self.prompt_mode not in ("zero-shot", "few-shot"):
            raise ValueError(f"unknown prompt_mode {self.prompt_mode!r}")
        if self.prompt_mode == "few-shot" and self.num_examples < 1:
            raise ValueError("few-shot mode requires num_examples >= 1")
        self.metrics = tuple(self.metrics)

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "chunk_config": self.chunk_config.to_dict(),
            "questions_per_chunk": self.questions_per_chunk,
            "prompt_mode": self.prompt_mode,
            "num_examples": self.num_examples,
            "temperature": self.temperature,
            "metrics": list(self.metrics),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        return cls(
            provider_id=d["provider_id"],
            chunk_config=ChunkConfig.from_dict(d["chunk_config"]),
            questions_per_chunk=d["questions_per_chunk"],
            prompt_mode=d["prompt_mode"],
            num_examples=d["num_examples"],
            temperature=d["temperature"],
            metrics=tuple(d["metrics"]),
            seed=d["seed"],
        )


@dataclass
class RawQAPair:
    question: str
    answer: str


# --- example pair CRUD ----------------------------------------------------

class ExampleStore:
    def __init__(self, workspace: Workspace):
        self.ws = workspace

    def add_example(self, doc_id: str, question: str, answer: str) -> ExamplePair:
        question = question.strip()
        answer = answer.strip()
        if not question or not answer:
            raise QgenError("question and answer must be nonempty")
        with self.ws.writer_lock():
            example = ExamplePair(
                example_id=make_id(question, self.ws.next_counter()),
                doc_id=doc_id,
                question=question,
                answer=answer,
            )
            self.ws.save("examples", example.example_id, example.to_dict())
        return example

    def list_examples(self, doc_id: str) -> list[ExamplePair]:
        examples = [
            ExamplePair.from_dict(r)
            for r in self.ws.list_records("examples")
            if r["doc_id"] == doc_id
        ]
        examples.sort(key=lambda e: e.example_id)
        return examples

    def delete_example(self, example_id: str) -> None:
        self.ws.delete("examples", example_id)


# --- prompt construction --------------------------------------------------

def build_prompt(
    chunk: Chunk, cfg: GenerationConfig, examples: list[ExamplePair]
) -> ChatRequest:
    """Deterministic generation prompt for one chunk.

    Few-shot mode renders up to num_examples examples (ordered by
    example_id) as JSON pairs; zero-shot renders no example block.
    """
    parts = [
        f"Generate exactly {cfg.questions_per_chunk} question-answer "
        f"pair{'s' if cfg.questions_per_chunk != 1 else ''} from the passage below.",
    ]
    if cfg.prompt_mode == "few-shot":
        if not examples:
            raise NoExamples("few-shot mode requires at least one example pair")
        chosen = sorted(examples, key=lambda e: e.example_id)[: cfg.num_examples]
        rendered = json.dumps(
            [{"question": e.question, "answer": e.answer} for e in chosen],
            ensure_ascii=False,
            indent=2,
        )
        parts.append("Follow the style of these example pairs:\n" + rendered)
    parts.append("Passage:\n" + chunk.text)
    return ChatRequest(
        messages=[
            ChatMessage(role="system", content=SYSTEM_PROMPT),
            ChatMessage(role="user", content="\n\n".join(parts)),
        ],
        temperature=cfg.temperature,
        max_output_tokens=1024,
    )


# --- response parsing -----------------------------------------------------

def _extract_json_array(text: str) -> Optional[str]:
    """First balanced '['..']' region, string-aware."""
    start = text.find("[")
    if start == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def parse_response(text: str) -> list[RawQAPair]:
    """JSON-array parse with a line-oriented Q:/A: fallback.

    Pairs with an empty question or answer are dropped; zero pairs from both
    paths raises UnparseableResponse.
    """
    pairs: list[RawQAPair] = []
    dropped = 0

    region = _extract_json_array(text)
    if region is not None:
        try:
            data = json.loads(region)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, list):
            for entry in data:
                if not isinstance(entry, dict):
                    dropped += 1
                    continue
                q = str(entry.get("question", "")).strip()
                a = str(entry.get("answer", "")).strip()
                if q and a:
                    pairs.append(RawQAPair(question=q, answer=a))
                else:
                    dropped += 1

    if not pairs:
        question: Optional[str] = None
        for line in text.splitlines():
            stripped = line.strip()
            if stripped[:2].upper() == "Q:":
                question = stripped[2:].strip()
            elif stripped[:2].upper() == "A:" and question:
                answer = stripped[2:].strip()
                if answer:
                    pairs.append(RawQAPair(question=question, answer=answer))
                question = None

    if not pairs:
        raise UnparseableResponse(f"no QA pairs found in model output ({dropped} dropped)")
    return pairs


# --- generation pipeline --------------------------------------------------

def generate_for_group(
    workspace: Workspace,
    registry: ProviderRegistry,
    group_id: str,
    cfg: GenerationConfig,
    *,
    transport=None,
    sleep=None,
    on_progress: Optional[Callable[[int, int, int], None]] = None,
) -> DatasetRecord:
    """Chunk every document of the group, generate, score, attribute, persist.

    Per-chunk failures become GenerationFailure entries and never abort the
    run; a run yielding zero pairs raises AllChunksFailed.
    """
    corpus_store = CorpusStore(workspace)
    example_store = ExampleStore(workspace)
    group = corpus_store.get_group(group_id)
    if not group.document_ids:
        raise EmptyGroup(f"group {group_id} has no documents")
    provider = registry.get(cfg.provider_id)

    documents = [corpus_store.get_document(d) for d in group.document_ids]
    chunks: list[Chunk] = []
    for doc in documents:
        chunks.extend(chunk_document(doc, cfg.chunk_config))
    examples_by_doc = {doc.doc_id: example_store.list_examples(doc.doc_id) for doc in documents}

    stats = metrics.corpus_stats(c.text for c in chunks)
    dataset_id = make_id(group.name, workspace.next_counter())

    chat_kwargs: dict = {"transport": transport}
    if sleep is not None:
        chat_kwargs["sleep"] = sleep
    semaphore = registry.semaphore(cfg.provider_id)

    results: dict[str, list[RawQAPair]] = {}
    failures: list[GenerationFailure] = []
    progress_lock = threading.Lock()
    done = 0

    def report_progress():
        if on_progress is not None:
            on_progress(done, len(failures), len(chunks))

    def run_chunk(chunk: Chunk):
        nonlocal done
        try:
            prompt = build_prompt(chunk, cfg, examples_by_doc[chunk.doc_id])
            response = llm_gateway.chat(provider, prompt, semaphore=semaphore, **chat_kwargs)
            parsed = parse_response(response.text)
        except QgenError as exc:
            with progress_lock:
                failures.append(
                    GenerationFailure(chunk_id=chunk.chunk_id, error_code=exc.code, message=exc.message)
                )
                report_progress()
            return
        with progress_lock:
            results[chunk.chunk_id] = parsed
            done += 1
            report_progress()

    with ThreadPoolExecutor(max_workers=provider.max_concurrency) as pool:
        list(pool.map(run_chunk, chunks))

    pairs: list[QAPair] = []
    for chunk in chunks:  # deterministic order independent of completion order
        for raw in results.get(chunk.chunk_id, []):
            pair_id = f"{dataset_id}-p{len(pairs)}"
            report = metrics.score_pair(raw.question, raw.answer, chunk.text, stats, cfg.metrics)
            attribution = best_sentence(chunk.text, raw.question, raw.answer)
            highlights = highlight_spans(chunk.text, raw.question, raw.answer)
            pairs.append(
                QAPair(
                    pair_id=pair_id,
                    dataset_id=dataset_id,
                    doc_id=chunk.doc_id,
                    chunk_id=chunk.chunk_id,
                    question=raw.question,
                    answer=raw.answer,
                    metric_report=report,
                    attribution=attribution,
                    highlights=highlights,
                )
            )

    if not pairs:
        raise AllChunksFailed(f"all {len(chunks)} chunks failed to produce pairs")

    dataset = DatasetRecord(
        dataset_id=dataset_id,
        group_id=group_id,
        config_snapshot=cfg.to_dict(),
        chunk_snapshot=chunks,
        corpus_stats=stats,
        pairs=pairs,
        failures=failures,
        prompt_template_version=PROMPT_TEMPLATE_VERSION,
    )
    workspace.save_dataset(dataset)
    return dataset
