"""Similarity scoring of QA pairs against their source chunk.

Sentence-level BLEU-n with add-one smoothing for higher-order zeros,
F1-flavored ROUGE-1/2/L, a WordNet-free METEOR (exact + Porter-stemmed
matching), tf-idf cosine over the document group's chunks, and a raw
count-vector cosine. All scores are computed on normalized tokens
(lowercase, whitespace split, edge punctuation stripped), shared with
attribution so highlights and scores agree.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .chunker import normalize_tokens
from .errors import (
    EmptyCandidate,
    EmptyCorpus,
    EmptyReference,
    UnknownMetric,
)
from .stemming import stem

METRIC_NAMES = (
    "bleu1", "bleu2", "bleu3", "bleu4",
    "rouge1_f", "rouge2_f", "rougeL_f",
    "meteor", "tfidf_cosine", "count_cosine",
)
FIELDS = ("question", "answer", "combined")
COMPARATORS = (">=", ">", "<=", "<")


@dataclass
class MetricReport:
    """Scores per field; metrics that were not requested are absent."""

    scores: dict[str, dict[str, float]] = field(default_factory=dict)

    def get(self, metric: str, field_name: str) -> Optional[float]:
        return self.scores.get(field_name, {}).get(metric)

    def to_dict(self) -> dict:
        return {f: dict(m) for f, m in self.scores.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(scores={f: dict(m) for f, m in d.items()})


@dataclass(frozen=True)
class MetricPredicate:
    metric: str
    field: str
    comparator: str  # one of COMPARATORS
    threshold: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise UnknownMetric(f"unknown metric {self.metric!r}")
        if self.field not in FIELDS:
            raise UnknownMetric(f"unknown field {self.field!r}")
        if self.comparator not in COMPARATORS:
            raise UnknownMetric(f"unknown comparator {self.comparator!r}")

    def matches(self, report: MetricReport) -> bool:
        value = report.get(self.metric, self.field)
        if value is None:
            return False
        if self.comparator == ">=":
            return value >= self.threshold
        if self.comparator == ">":
            return value > self.threshold
        if self.comparator == "<=":
            return value <= self.threshold
        return value < self.threshold


@dataclass(frozen=True)
class MetricFilter:
    predicates: tuple[MetricPredicate, ...] = ()
    sort_metric: Optional[str] = None
    sort_field: str = "combined"
    descending: bool = True

    def __post_init__(self):
        if self.sort_metric is not None and self.sort_metric not in METRIC_NAMES:
            raise UnknownMetric(f"unknown sort metric {self.sort_metric!r}")
        if self.sort_field not in FIELDS:
            raise UnknownMetric(f"unknown sort field {self.sort_field!r}")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _require_nonempty(candidate: list[str], reference: list[str]) -> None:
    if not candidate:
        raise EmptyCandidate("candidate has no tokens after normalization")
    if not reference:
        raise EmptyReference("reference has no tokens after normalization")


def bleu_n(candidate: str, reference: str, n: int) -> float:
    """Sentence BLEU: BP * geometric mean of clipped k-gram precisions.

    p1 == 0 scores 0; zero matches at k >= 2 with p1 > 0 get add-one
    smoothing (m+1)/(t+1).
    """
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    _require_nonempty(cand, ref)

    log_sum = 0.0
    for k in range(1, n + 1):
        cand_ngrams = _ngrams(cand, k)
        ref_ngrams = _ngrams(ref, k)
        total = sum(cand_ngrams.values())
        matches = sum(min(count, ref_ngrams[g]) for g, count in cand_ngrams.items())
        if k == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        elif matches == 0:
            p = (matches + 1) / (total + 1)
        else:
            p = matches / total
        log_sum += math.log(p)

    bp = min(1.0, math.exp(1 - len(ref) / len(cand)))
    return bp * math.exp(log_sum / n)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row DP
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b):
            row.append(prev[j] + 1 if x == y else max(row[-1], prev[j + 1]))
        prev = row
    return prev[-1]


def rouge(candidate: str, reference: str) -> tuple[float, float, float]:
    """(rouge1_f, rouge2_f, rougeL_f): n-gram overlap F1 and LCS F1."""
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    _require_nonempty(cand, ref)

    scores = []
    for k in (1, 2):
        cand_ngrams = _ngrams(cand, k)
        ref_ngrams = _ngrams(ref, k)
        overlap = sum(min(count, ref_ngrams[g]) for g, count in cand_ngrams.items())
        cand_total = sum(cand_ngrams.values())
        ref_total = sum(ref_ngrams.values())
        precision = overlap / cand_total if cand_total else 0.0
        recall = overlap / ref_total if ref_total else 0.0
        scores.append(_f1(precision, recall))

    lcs = _lcs_length(cand, ref)
    scores.append(_f1(lcs / len(cand), lcs / len(ref)))
    return tuple(scores)  # type: ignore[return-value]


def _greedy_align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """(cand_index, ref_index) matches: exact pass first, then stemmed."""
    matches: dict[int, int] = {}
    used_ref: set[int] = set()
    for exact in (True, False):
        cand_keys = cand if exact else [stem(t) for t in cand]
        ref_keys = ref if exact else [stem(t) for t in ref]
        for i, key in enumerate(cand_keys):
            if i in matches:
                continue
            for j, ref_key in enumerate(ref_keys):
                if j not in used_ref and key == ref_key:
                    matches[i] = j
                    used_ref.add(j)
                    break
    return sorted(matches.items())


def meteor_simple(candidate: str, reference: str) -> float:
    """Unigram-match harmonic mean with a fragmentation penalty.

    F_mean = 10PR / (R + 9P); penalty = 0.5 * (chunks / matches)^3;
    score = F_mean * (1 - penalty), 0 when nothing matches.
    """
    cand = normalize_tokens(candidate)
    ref = normalize_tokens(reference)
    _require_nonempty(cand, ref)

    alignment = _greedy_align(cand, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)

    chunks = 1
    for (ci, ri), (cj, rj) in zip(alignment, alignment[1:]):
        if cj != ci + 1 or rj != ri + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


def corpus_stats(corpus: Iterable[str]) -> dict:
    """Document-frequency table over the corpus chunks (for idf)."""
    df: Counter = Counter()
    n_docs = 0
    for text in corpus:
        n_docs += 1
        df.update(set(normalize_tokens(text)))
    return {"n_docs": n_docs, "df": dict(df)}


def _idf(term: str, stats: dict) -> float:
    return math.log((stats["n_docs"] + 1) / (stats["df"].get(term, 0) + 1)) + 1.0


def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
    dot = sum(w * b[t] for t, w in a.items() if t in b)
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return dot / (norm_a * norm_b)


def tfidf_cosine_from_stats(candidate: str, reference: str, stats: dict) -> float:
    if stats["n_docs"] == 0:
        raise EmptyCorpus("idf corpus has no chunks")
    cand_tf = Counter(normalize_tokens(candidate))
    ref_tf = Counter(normalize_tokens(reference))
    cand_vec = {t: c * _idf(t, stats) for t, c in cand_tf.items()}
    ref_vec = {t: c * _idf(t, stats) for t, c in ref_tf.items()}
    return _cosine(cand_vec, ref_vec)


def tfidf_cosine(candidate: str, reference: str, corpus: Sequence[str]) -> float:
    """Cosine of tf * idf vectors; idf = ln((N+1)/(df+1)) + 1 over corpus."""
    if not corpus:
        raise EmptyCorpus("idf corpus is empty")
    return tfidf_cosine_from_stats(candidate, reference, corpus_stats(corpus))


def count_cosine(candidate: str, reference: str) -> float:
    """Cosine of raw term-count vectors."""
    a = Counter(normalize_tokens(candidate))
    b = Counter(normalize_tokens(reference))
    return _cosine(dict(a), dict(b))


def score_pair(
    question: str,
    answer: str,
    chunk_text: str,
    stats: dict,
    requested: Iterable[str] = METRIC_NAMES,
) -> MetricReport:
    """Score question/answer/combined against the chunk for each requested
    metric; unrequested metrics stay absent."""
    requested = list(requested)
    for name in requested:
        if name not in METRIC_NAMES:
            raise UnknownMetric(f"unknown metric {name!r}")

    report = MetricReport(scores={f: {} for f in FIELDS})
    candidates = {
        "question": question,
        "answer": answer,
        "combined": question + " " + answer,
    }
    for field_name, candidate in candidates.items():
        bucket = report.scores[field_name]
        for name in requested:
            if name.startswith("bleu"):
                bucket[name] = bleu_n(candidate, chunk_text, int(name[-1]))
            elif name == "meteor":
                bucket[name] = meteor_simple(candidate, chunk_text)
            elif name == "tfidf_cosine":
                bucket[name] = tfidf_cosine_from_stats(candidate, chunk_text, stats)
            elif name == "count_cosine":
                bucket[name] = count_cosine(candidate, chunk_text)
        if any(name.startswith("rouge") for name in requested):
            r1, r2, rl = rouge(candidate, chunk_text)
            if "rouge1_f" in requested:
                bucket["rouge1_f"] = r1
            if "rouge2_f" in requested:
                bucket["rouge2_f"] = r2
            if "rougeL_f" in requested:
                bucket["rougeL_f"] = rl
    return report


def filter_sort(pairs: Sequence, f: MetricFilter) -> list:
    """Stable filter then stable sort of objects carrying a metric_report."""
    kept = [
        p for p in pairs
        if all(pred.matches(p.metric_report) for pred in f.predicates)
    ]
    if f.sort_metric is not None:
        missing = [p for p in kept if p.metric_report.get(f.sort_metric, f.sort_field) is None]
        present = [p for p in kept if p.metric_report.get(f.sort_metric, f.sort_field) is not None]
        present.sort(
            key=lambda p: p.metric_report.get(f.sort_metric, f.sort_field),
            reverse=f.descending,
        )
        kept = present + missing
    return kept
