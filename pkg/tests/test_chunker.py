import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgen.chunker import ChunkConfig, chunk_document, normalize_tokens, tokenize_ws
from qgen.corpus import build_elements, Document


def make_doc(blocks, doc_id="doc1"):
    return Document(
        doc_id=doc_id, group_id="g", title="t", source_kind="structured-json",
        elements=build_elements(doc_id, blocks),
    )


def para(n_tokens, prefix="w"):
    return " ".join(f"{prefix}{i}" for i in range(n_tokens))


class TestTokenize:
    def test_double_space(self):
        assert tokenize_ws("a  b") == [("a", (0, 1)), ("b", (3, 4))]

    def test_empty(self):
        assert tokenize_ws("") == []

    def test_unicode(self):
        tokens = tokenize_ws("héllo world")
        assert len(tokens) == 2
        assert tokens[0][1] == (0, 5)

    @given(st.text(max_size=80))
    def test_spans_index_input(self, text):
        for token, (start, end) in tokenize_ws(text):
            assert text[start:end] == token
            assert not any(ch.isspace() for ch in token)

    @given(st.text(max_size=80))
    def test_lossless_modulo_whitespace(self, text):
        joined = " ".join(t for t, _ in tokenize_ws(text))
        assert joined.split() == text.split()


class TestChunkConfig:
    def test_bad_max(self):
        with pytest.raises(ValueError):
            ChunkConfig(max_tokens=0)

    def test_bad_overlap(self):
        with pytest.raises(ValueError):
            ChunkConfig(max_tokens=10, overlap_tokens=10)


class TestChunkDocument:
    def test_single_small_paragraph(self):
        doc = make_doc([("paragraph", 0, para(40))])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=100, overlap_tokens=0))
        assert len(chunks) == 1
        assert chunks[0].text == doc.elements[0].text
        assert chunks[0].token_count == 40

    def test_two_paragraphs_force_boundary(self):
        # 60 + 60 > 100: greedy packing splits at the paragraph break
        doc = make_doc([("paragraph", 0, para(60, "a")), ("paragraph", 0, para(60, "b"))])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=100, overlap_tokens=0))
        assert len(chunks) == 2
        assert chunks[0].text == doc.elements[0].text
        assert chunks[1].text == doc.elements[1].text

    def test_two_paragraphs_pack_together(self):
        doc = make_doc([("paragraph", 0, para(40, "a")), ("paragraph", 0, para(40, "b"))])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=100, overlap_tokens=0))
        assert len(chunks) == 1
        assert chunks[0].token_count == 80

    def test_sliding_window_with_overlap(self):
        # 250 unpunctuated tokens, max 100, overlap 20 -> 100/100/90
        doc = make_doc([("paragraph", 0, para(250))])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=100, overlap_tokens=20))
        assert [c.token_count for c in chunks] == [100, 100, 90]
        tokens = [t for t, _ in tokenize_ws(doc.elements[0].text)]
        c0 = [t for t, _ in tokenize_ws(chunks[0].text)]
        c1 = [t for t, _ in tokenize_ws(chunks[1].text)]
        c2 = [t for t, _ in tokenize_ws(chunks[2].text)]
        assert c0 == tokens[0:100]
        assert c1 == tokens[80:180]
        assert c2 == tokens[160:250]
        assert c0[-20:] == c1[:20]

    def test_oversized_splits_at_sentence_boundary(self):
        sentences = " ".join(f"Sentence number {i} is here." for i in range(10))  # 50 tokens
        doc = make_doc([("paragraph", 0, sentences)])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=12, overlap_tokens=0))
        # every chunk ends at a sentence boundary (text ends with '.')
        for chunk in chunks:
            assert chunk.text.endswith(".")
            assert chunk.token_count <= 12

    def test_heading_prefix(self):
        doc = make_doc([("heading", 1, "My Topic"), ("paragraph", 0, "Some body text.")])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=50, include_headings=True))
        assert len(chunks) == 1
        assert chunks[0].text == "My Topic\n\nSome body text."
        assert doc.elements[0].element_id in chunks[0].element_ids

    def test_no_heading_prefix_when_disabled(self):
        doc = make_doc([("heading", 1, "My Topic"), ("paragraph", 0, "Some body text.")])
        chunks = chunk_document(doc, ChunkConfig(max_tokens=50, include_headings=False))
        assert chunks[0].text == "Some body text."

    def test_heading_counts_in_budget(self):
        doc = make_doc([
            ("heading", 1, "One two three"),  # 3 tokens
            ("paragraph", 0, para(5, "a")),
            ("paragraph", 0, para(5, "b")),
        ])
        # 3 + 5 + 5 = 13 > 10: paragraphs cannot share a chunk
        chunks = chunk_document(doc, ChunkConfig(max_tokens=10, overlap_tokens=0))
        assert len(chunks) == 2

    def test_determinism(self):
        doc = make_doc([("heading", 1, "H"), ("paragraph", 0, para(120)),
                        ("paragraph", 0, para(30, "x"))])
        config = ChunkConfig(max_tokens=50, overlap_tokens=10)
        runs = [chunk_document(doc, config) for _ in range(3)]
        as_dicts = [[c.to_dict() for c in run] for run in runs]
        assert as_dicts[0] == as_dicts[1] == as_dicts[2]

    def test_chunk_ids_stable(self):
        doc = make_doc([("paragraph", 0, para(10))])
        chunks = chunk_document(doc, ChunkConfig())
        assert chunks[0].chunk_id == "doc1-c0"

    def test_spans_point_into_canonical_text(self):
        doc = make_doc([("heading", 1, "Head"), ("paragraph", 0, para(30, "a")),
                        ("paragraph", 0, para(30, "b"))])
        text = doc.canonical_text()
        for chunk in chunk_document(doc, ChunkConfig(max_tokens=40, overlap_tokens=0)):
            start, end = chunk.char_span
            covered = text[start:end]
            # body tokens of the chunk appear in the covered slice
            for token in covered.split():
                assert token in chunk.text


@st.composite
def documents(draw):
    n = draw(st.integers(1, 6))
    blocks = []
    for i in range(n):
        kind = draw(st.sampled_from(["heading", "paragraph"]))
        words = draw(st.integers(1, 40))
        text = " ".join(f"t{i}w{j}" for j in range(words))
        blocks.append((kind, 1 if kind == "heading" else 0, text))
    if not any(k == "paragraph" for k, _, _ in blocks):
        blocks.append(("paragraph", 0, "fallback paragraph"))
    return make_doc(blocks)


class TestProperties:
    @given(documents(), st.integers(5, 60), st.integers(0, 4))
    @settings(max_examples=60, deadline=None)
    def test_coverage_and_bound(self, doc, max_tokens, overlap):
        config = ChunkConfig(max_tokens=max_tokens, overlap_tokens=overlap)
        chunks = chunk_document(doc, config)
        chunk_tokens = set()
        for chunk in chunks:
            chunk_tokens.update(normalize_tokens(chunk.text))
            if not chunk.oversized:
                assert chunk.token_count <= max_tokens
        # every paragraph token appears in at least one chunk
        for element in doc.elements:
            if element.kind == "paragraph":
                assert set(normalize_tokens(element.text)) <= chunk_tokens

    @given(documents(), st.integers(5, 60))
    @settings(max_examples=30, deadline=None)
    def test_ids_unique(self, doc, max_tokens):
        chunks = chunk_document(doc, ChunkConfig(max_tokens=max_tokens, overlap_tokens=0))
        ids = [c.chunk_id for c in chunks]
        assert len(ids) == len(set(ids))
