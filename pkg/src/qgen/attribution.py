"""Sentence splitting, token highlighting, and source-sentence attribution.

The "most likely source sentence" is a content-token overlap heuristic:
answers weigh double because they are the extractive signal. The heuristic
is isolated behind best_sentence so it can be swapped out wholesale.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .chunker import normalize_token, tokenize_ws
from .errors import EmptyChunk

ANSWER_WEIGHT = 2
QUESTION_WEIGHT = 1
MIN_CONTENT_LEN = 2

# abbreviations that never end a sentence
ABBREVIATIONS = frozenset({"e.g.", "i.e.", "dr.", "mr.", "ms.", "vs.", "etc."})

# fixed 50-word stopword list; matching is on normalized tokens
STOPWORDS = frozenset(
    """a an and are as at be but by can do for from had has have he her his
    i if in is it its not of on or she so that the their them then there
    they this to was we were what when which who will with would""".split()
)
assert len(STOPWORDS) == 50

_SENTENCE_END_RE = re.compile(r"[.!?]")


@dataclass
class Highlight:
    char_span: tuple[int, int]
    source: str  # "question" | "answer" | "both"

    def to_dict(self) -> dict:
        return {"char_span": list(self.char_span), "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "Highlight":
        return cls(char_span=tuple(d["char_span"]), source=d["source"])


@dataclass
class Attribution:
    sentence_index: int
    sentence_span: tuple[int, int]
    score: float
    runner_up_score: float

    def to_dict(self) -> dict:
        return {
            "sentence_index": self.sentence_index,
            "sentence_span": list(self.sentence_span),
            "score": self.score,
            "runner_up_score": self.runner_up_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attribution":
        return cls(
            sentence_index=d["sentence_index"],
            sentence_span=tuple(d["sentence_span"]),
            score=d["score"],
            runner_up_score=d["runner_up_score"],
        )


def _is_abbreviation(text: str, dot_index: int) -> bool:
    """The token ending at dot_index (inclusive) is a known abbreviation."""
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start : dot_index + 1].lower() in ABBREVIATIONS


def split_sentences(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Rule-based splitting at '.', '!', '?'.

    A terminator splits when followed by whitespace plus an uppercase letter,
    or by end of text; a fixed abbreviation list suppresses splits. Spans
    tile the input minus inter-sentence whitespace.
    """
    boundaries = []
    for m in _SENTENCE_END_RE.finditer(text):
        i = m.start()
        if text[i] == "." and _is_abbreviation(text, i):
            continue
        j = i + 1
        # consume a run of closing terminators ("?!", "...")
        while j < len(text) and text[j] in ".!?":
            j += 1
        if j >= len(text):
            boundaries.append(j)
        else:
            k = j
            while k < len(text) and text[k].isspace():
                k += 1
            if k > j and k < len(text) and text[k].isupper():
                boundaries.append(j)

    sentences = []
    start = 0
    for b in sorted(set(boundaries)):
        if b <= start:
            continue
        segment = text[start:b]
        stripped = segment.strip()
        if stripped:
            lead = len(segment) - len(segment.lstrip())
            sentences.append((stripped, (start + lead, start + lead + len(stripped))))
        start = b
    tail = text[start:]
    if tail.strip():
        lead = len(tail) - len(tail.lstrip())
        stripped = tail.strip()
        sentences.append((stripped, (start + lead, start + lead + len(stripped))))
    return sentences


def content_tokens(text: str) -> set[str]:
    """Normalized tokens that are not stopwords and have length >= 2."""
    out = set()
    for tok, _ in tokenize_ws(text):
        norm = normalize_token(tok)
        if len(norm) >= MIN_CONTENT_LEN and norm not in STOPWORDS:
            out.add(norm)
    return out


def highlight_spans(chunk_text: str, question: str, answer: str) -> list[Highlight]:
    """Highlight chunk tokens matching question/answer content tokens.

    Overlapping or adjacent same-source highlights are merged; a token
    matching both sets is labeled "both"; stopwords never highlight.
    """
    q_tokens = content_tokens(question)
    a_tokens = content_tokens(answer)
    raw: list[Highlight] = []
    for tok, span in tokenize_ws(chunk_text):
        norm = normalize_token(tok)
        in_q = norm in q_tokens
        in_a = norm in a_tokens
        if not in_q and not in_a:
            continue
        source = "both" if in_q and in_a else ("question" if in_q else "answer")
        raw.append(Highlight(char_span=span, source=source))

    merged: list[Highlight] = []
    for h in raw:
        if merged and merged[-1].source == h.source and h.char_span[0] <= merged[-1].char_span[1]:
            merged[-1] = Highlight(
                char_span=(merged[-1].char_span[0], max(merged[-1].char_span[1], h.char_span[1])),
                source=h.source,
            )
        else:
            merged.append(h)
    return merged


def best_sentence(chunk_text: str, question: str, answer: str) -> Attribution:
    """Pick the sentence with the highest weighted content-token overlap.

    score(s) = 2 * |answer ∩ s| + 1 * |question ∩ s|; earliest sentence wins
    ties; the runner-up score is reported for confidence display.
    """
    sentences = split_sentences(chunk_text)
    if not sentences:
        raise EmptyChunk("chunk has no sentences")
    q_tokens = content_tokens(question)
    a_tokens = content_tokens(answer)

    scores = []
    for sentence, _ in sentences:
        s_tokens = content_tokens(sentence)
        scores.append(
            ANSWER_WEIGHT * len(a_tokens & s_tokens) + QUESTION_WEIGHT * len(q_tokens & s_tokens)
        )

    best_index = max(range(len(scores)), key=lambda i: (scores[i], -i))
    runner_up = max((s for i, s in enumerate(scores) if i != best_index), default=0)
    return Attribution(
        sentence_index=best_index,
        sentence_span=sentences[best_index][1],
        score=float(scores[best_index]),
        runner_up_score=float(runner_up),
    )
