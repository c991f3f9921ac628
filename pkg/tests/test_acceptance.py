"""Acceptance gate: one test per contract criterion, each printing a
single pass line on success (run with -s or -rP to see them). A failing
assertion is the fail line.
"""

import json
import math
import random
import sys
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chat_body, qa_json, sequence_transport
from oracles import (
    oracle_bleu,
    oracle_count_cosine,
    oracle_meteor,
    oracle_rouge_l,
    oracle_rouge_n,
    oracle_tfidf_cosine,
)
from qgen.attribution import Attribution, Highlight, best_sentence
from qgen.chunker import ChunkConfig, chunk_document
from qgen.corpus import CorpusStore
from qgen.datastore import (
    DatasetRecord,
    GenerationFailure,
    QAPair,
    SplitSpec,
    Workspace,
)
from qgen.errors import AuthError, CorruptRecord, IllegalTransition
from qgen.llm_gateway import (
    ChatMessage,
    ChatRequest,
    ProviderConfig,
    ProviderRegistry,
    chat,
)
from qgen.metrics import (
    MetricFilter,
    MetricPredicate,
    MetricReport,
    bleu_n,
    count_cosine,
    filter_sort,
    meteor_simple,
    rouge,
    tfidf_cosine,
)
from qgen.promptkit import (
    ExamplePair,
    GenerationConfig,
    build_prompt,
    generate_for_group,
)
from qgen.trainjobs import (
    JobManager,
    LEGAL_TRANSITIONS,
    STATES,
    TrainingJob,
    TrainingParams,
)

NO_SLEEP = lambda _s: None

WORDS = ["cat", "dog", "sat", "ran", "mat", "tree", "river", "fast", "tall",
         "green", "the", "a", "on", "quiet", "valley", "stone", "bird", "cloud"]


def passed(label: str) -> None:
    print(f"[PASS] {label}")


def random_text(rng, lo=1, hi=12):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


class TestMetricOracleSuite:
    def test_metric_oracle_suite(self):
        start = time.monotonic()

        # hand-derived fixed examples, each within 1e-5
        assert bleu_n("the cat sat", "the cat sat on the mat", 2) == pytest.approx(
            math.exp(1 - 6 / 3), abs=1e-5)
        assert bleu_n("a cat sat", "the cat sat on the mat", 2) == pytest.approx(
            math.exp(-1) * math.sqrt((2 / 3) * (1 / 2)), abs=1e-5)
        assert rouge("the cat sat", "the cat sat on the mat")[2] == pytest.approx(
            2 * 1 * 0.5 / 1.5, abs=1e-5)
        three = "cat mat tree"
        m = meteor_simple(three, three)
        assert m == pytest.approx(1.0 - 0.5 / 27, abs=1e-5)  # 0.98148
        assert tfidf_cosine("cat ran", "cat sat", ["cat sat", "dog ran"]) == \
            pytest.approx(0.5, abs=1e-9)
        assert meteor_simple("sat cat the", "the cat sat") == pytest.approx(0.5, abs=1e-5)

        # 200 randomized short-text pairs vs the independent oracles, 1e-9
        rng = random.Random(42)
        corpus = [random_text(rng) for _ in range(8)]
        for _ in range(200):
            cand, ref = random_text(rng), random_text(rng)
            for n in (1, 2, 3, 4):
                assert bleu_n(cand, ref, n) == pytest.approx(
                    oracle_bleu(cand, ref, n), abs=1e-9), (cand, ref, n)
            r1, r2, rl = rouge(cand, ref)
            assert r1 == pytest.approx(oracle_rouge_n(cand, ref, 1), abs=1e-9)
            assert r2 == pytest.approx(oracle_rouge_n(cand, ref, 2), abs=1e-9)
            assert rl == pytest.approx(oracle_rouge_l(cand, ref), abs=1e-9)
            assert meteor_simple(cand, ref) == pytest.approx(
                oracle_meteor(cand, ref), abs=1e-9), (cand, ref)
            assert tfidf_cosine(cand, ref, corpus) == pytest.approx(
                oracle_tfidf_cosine(cand, ref, corpus), abs=1e-9)
            assert count_cosine(cand, ref) == pytest.approx(
                oracle_count_cosine(cand, ref), abs=1e-9)

        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"oracle suite took {elapsed:.2f}s"
        passed("metric oracle suite: fixed examples within 1e-5, "
               "200 random pairs within 1e-9, under 5s")


class TestFilterSemantics:
    def test_strictly_above_cutoff(self):
        def pair_with_bleu2(i, value):
            return QAPair(pair_id=f"p{i}", dataset_id="d", doc_id="doc",
                          chunk_id="c", question="q", answer="a",
                          metric_report=MetricReport(
                              scores={"combined": {"bleu2": value}}),
                          attribution=None, highlights=[])

        pairs = [pair_with_bleu2(i, v) for i, v in enumerate([0.9, 0.8, 0.3])]
        kept = filter_sort(pairs, MetricFilter(predicates=(
            MetricPredicate(metric="bleu2", field="combined",
                            comparator=">", threshold=0.8),)))
        assert [p.pair_id for p in kept] == ["p0"]
        passed("filter semantics: bleu2 above 0.8 keeps only the 0.9 pair")


class TestDeterminism:
    def test_ten_repeats_byte_stable(self, corpus_store, workspace):
        group = corpus_store.create_group("g")
        doc = corpus_store.ingest_document(
            group.group_id, "d", "markdown",
            ("# Heading\n\n" + " ".join(f"tok{i}" for i in range(120)) +
             "\n\nAnother paragraph with several more words inside it.").encode())
        cfg = ChunkConfig(max_tokens=40, overlap_tokens=5)
        chunk_runs = {json.dumps([c.to_dict() for c in chunk_document(doc, cfg)])
                      for _ in range(10)}
        assert len(chunk_runs) == 1

        gen_cfg = GenerationConfig(provider_id="p", prompt_mode="few-shot",
                                   num_examples=2)
        examples = [ExamplePair(example_id=f"e{i}", doc_id=doc.doc_id,
                                question=f"Q{i}?", answer=f"A{i}") for i in range(3)]
        chunk0 = chunk_document(doc, cfg)[0]
        prompt_runs = {
            json.dumps([(m.role, m.content)
                        for m in build_prompt(chunk0, gen_cfg, examples).messages])
            for _ in range(10)}
        assert len(prompt_runs) == 1

        workspace.save_dataset(_make_dataset(20))
        spec = SplitSpec(test_fraction=0.1, valid_fraction=0.1, shuffle=True, seed=9)
        export_runs = set()
        for _ in range(10):
            export_dir = workspace.export_training("ds1", spec)
            export_runs.add(tuple(
                (export_dir / f"{name}.jsonl").read_bytes()
                for name in ("train", "valid", "test")))
        assert len(export_runs) == 1
        passed("determinism: chunking, prompts, and seeded exports are "
               "byte-stable across 10 runs")


def _make_dataset(n_pairs, dataset_id="ds1"):
    from qgen.chunker import Chunk

    chunk = Chunk(chunk_id="d-c0", doc_id="d", element_ids=["d-e0"],
                  text="Chunk context text here.", token_count=4, char_span=(0, 24))
    pairs = [
        QAPair(pair_id=f"{dataset_id}-p{i}", dataset_id=dataset_id, doc_id="d",
               chunk_id="d-c0", question=f"Question {i}?", answer=f"Answer {i}",
               metric_report=MetricReport(scores={"combined": {"bleu1": 0.5}}),
               attribution=Attribution(sentence_index=0, sentence_span=(0, 5),
                                       score=1.0, runner_up_score=0.0),
               highlights=[Highlight(char_span=(0, 5), source="answer")],
               created_at="2026-01-01T00:00:00+00:00")
        for i in range(n_pairs)
    ]
    return DatasetRecord(dataset_id=dataset_id, group_id="g",
                         config_snapshot={"provider_id": "mock"},
                         chunk_snapshot=[chunk],
                         corpus_stats={"n_docs": 1, "df": {"chunk": 1}},
                         pairs=pairs, failures=[])


class TestSplitArithmetic:
    def test_floor_counts_and_partition(self, tmp_path):
        for n in (3, 10, 11, 100):
            for test_f, valid_f in ((0.1, 0.1), (0.2, 0.0)):
                ws = Workspace(tmp_path / f"ws-{n}-{test_f}-{valid_f}")
                ws.save_dataset(_make_dataset(n))
                export_dir = ws.export_training(
                    "ds1", SplitSpec(test_fraction=test_f, valid_fraction=valid_f,
                                     shuffle=True, seed=1))
                counts = json.loads(
                    (export_dir / "manifest.json").read_text())["counts"]
                assert counts["test"] == int(n * test_f)
                assert counts["valid"] == int(n * valid_f)
                assert counts["train"] == n - counts["test"] - counts["valid"]
                lines = []
                for name in ("train", "valid", "test"):
                    lines.extend(
                        (export_dir / f"{name}.jsonl").read_text().splitlines())
                expected = sorted(f"Q: Question {i}?\nA: Answer {i}"
                                  for i in range(n))
                assert sorted(json.loads(l)["text"] for l in lines) == expected
        passed("split arithmetic: floor-rule counts and exact partition for "
               "n in {3,10,11,100} x fractions {(0.1,0.1),(0.2,0.0)}")


class TestEndToEndMockLLM:
    TEXT = ("The cat sat on the mat near the door today. "
            "Dogs run fast in the park every single day.\n\n"
            "Rivers flow down the mountain into the valley below. "
            "Trees grow tall in the quiet green forest.")

    def _seed(self, corpus_store):
        group = corpus_store.create_group("g")
        corpus_store.ingest_document(group.group_id, "doc", "plain-text",
                                     self.TEXT.encode())
        return group

    def test_two_pairs_per_chunk(self, workspace, registry, corpus_store):
        start = time.monotonic()
        group = self._seed(corpus_store)
        cfg = GenerationConfig(provider_id="mock", questions_per_chunk=2,
                               chunk_config=ChunkConfig(max_tokens=20,
                                                        overlap_tokens=0))
        def handler(request):
            # answer out of whatever chunk the prompt carries
            if b"cat" in request.content:
                pairs = (("What sat on the mat?", "The cat sat"),
                         ("What runs fast?", "Dogs run fast"))
            else:
                pairs = (("What flows down?", "Rivers flow down"),
                         ("What grows tall?", "Trees grow tall"))
            return httpx.Response(200, json=chat_body(qa_json(*pairs)))

        transport = httpx.MockTransport(handler)
        dataset = generate_for_group(workspace, registry, group.group_id, cfg,
                                     transport=transport, sleep=NO_SLEEP)
        n_chunks = len(dataset.chunk_snapshot)
        assert len(dataset.pairs) == 2 * n_chunks
        chunk_ids = {c.chunk_id: c for c in dataset.chunk_snapshot}
        for pair in dataset.pairs:
            assert pair.chunk_id in chunk_ids
            for field_name in ("question", "answer", "combined"):
                assert pair.metric_report.get("bleu1", field_name) is not None
                assert pair.metric_report.get("meteor", field_name) is not None
            chunk = chunk_ids[pair.chunk_id]
            lo, hi = pair.attribution.sentence_span
            sentence = chunk.text[lo:hi].lower()
            answer_tokens = {t.strip(".?,").lower() for t in pair.answer.split()}
            assert answer_tokens & set(sentence.replace(".", " ").split()), \
                (pair.answer, sentence)
        elapsed = time.monotonic() - start
        assert elapsed < 10.0
        passed("end-to-end mock generation: 2 pairs per chunk, resolvable "
               "chunk ids, full reports, attribution sentence shares an "
               "answer token, under 10s")

    def test_garbage_chunk_isolated(self, workspace, corpus_store):
        group = self._seed(corpus_store)
        reg = ProviderRegistry()
        reg.register(ProviderConfig(provider_id="mock", base_url="http://t",
                                    model_name="m", max_concurrency=1))
        cfg = GenerationConfig(provider_id="mock", questions_per_chunk=2,
                               chunk_config=ChunkConfig(max_tokens=20,
                                                        overlap_tokens=0))
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] == 2:
                return httpx.Response(200, json=chat_body("no pairs in here"))
            return httpx.Response(
                200, json=chat_body(qa_json(("Q?", "The cat"), ("R?", "Dogs run"))))

        dataset = generate_for_group(workspace, reg, group.group_id, cfg,
                                     transport=httpx.MockTransport(handler),
                                     sleep=NO_SLEEP)
        assert len(dataset.failures) == 1
        assert len(dataset.pairs) == 2 * (len(dataset.chunk_snapshot) - 1)
        passed("end-to-end mock generation: one garbage response yields "
               "exactly one recorded failure, no run abort")


class TestAttributionCorrectness:
    def test_100_constructed_documents(self):
        rng = random.Random(7)
        filler = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
                  "golf", "hotel", "india", "juliet"]
        targets = ["xylophone", "quasar", "meridian", "thimble", "crescent"]
        hits = 0
        for _ in range(100):
            n_sentences = rng.randint(2, 8)
            k = rng.randrange(n_sentences)
            k_words = rng.sample(targets, 3)
            sentences = []
            for i in range(n_sentences):
                words = k_words if i == k else [f"{w}{i}"
                                                for w in rng.sample(filler, 4)]
                sentences.append(" ".join(words).capitalize() + ".")
            chunk = " ".join(sentences)
            question = f"Where is the {k_words[0]}?"
            answer = " ".join(k_words[1:])
            if best_sentence(chunk, question, answer).sentence_index == k:
                hits += 1
        assert hits == 100
        passed("attribution: 100/100 constructed documents pick sentence k")


class TestGatewayRetryContract:
    PROVIDER = ProviderConfig(provider_id="p", base_url="http://p.test",
                              model_name="m", max_retries=2)
    REQUEST = ChatRequest(messages=[ChatMessage(role="user", content="hi")])

    def _call(self, transport):
        return chat(self.PROVIDER, self.REQUEST, transport=transport,
                    sleep=NO_SLEEP)

    def test_sequences(self):
        ok = chat_body("fine")
        t = sequence_transport([(429, {}), (200, ok)])
        assert self._call(t).text == "fine"
        assert t.calls["n"] == 2

        t = sequence_transport([(500, {}), (500, {}), (200, ok)])
        assert self._call(t).text == "fine"
        assert t.calls["n"] == 3

        t = sequence_transport([(401, {})])
        with pytest.raises(AuthError):
            self._call(t)
        assert t.calls["n"] == 1
        passed("gateway retry contract: [429,200]->2 calls, "
               "[500,500,200]->3 calls, [401]->1 call AuthError")


class TestJobLifecycle:
    def _manager(self, workspace, tmp_path):
        export = tmp_path / "export"
        export.mkdir(exist_ok=True)
        (export / "train.jsonl").write_text('{"text":"Q: q\\nA: a"}\n')
        return JobManager(workspace), str(export)

    def _params(self, tmp_path, name):
        return TrainingParams(base_model="m", learning_rate=1e-5, iterations=10,
                              lora_layers=4, batch_size=2,
                              adapter_output_dir=str(tmp_path / name))

    def test_lifecycle(self, workspace, tmp_path):
        manager, export = self._manager(workspace, tmp_path)

        job = manager.create(export, self._params(tmp_path, "a"),
                             sys.executable + " -c 'pass'")
        manager.launch(job.job_id)
        assert manager.wait(job.job_id, timeout=10).state == "Completed"

        job = manager.create(export, self._params(tmp_path, "b"),
                             sys.executable + " -c 'import sys; sys.exit(3)'")
        manager.launch(job.job_id)
        final = manager.wait(job.job_id, timeout=10)
        assert (final.state, final.exit_code) == ("Failed", 3)

        job = manager.create(export, self._params(tmp_path, "c"),
                             sys.executable + " -c 'import time; time.sleep(30)'")
        manager.launch(job.job_id)
        time.sleep(0.2)
        manager.cancel(job.job_id)
        assert manager.status(job.job_id).state == "Canceled"
        passed("job lifecycle: no-op -> Completed, exit 3 -> Failed(3), "
               "cancel mid-run -> Canceled")

    @given(st.lists(st.sampled_from(STATES), max_size=6))
    @settings(max_examples=200, deadline=None)
    def test_no_illegal_transition_admitted(self, events):
        job = TrainingJob(job_id="j", dataset_export_dir="/tmp/x",
                          params=TrainingParams(
                              base_model="m", learning_rate=1e-5, iterations=1,
                              lora_layers=1, batch_size=1,
                              adapter_output_dir="/tmp/a"),
                          command_template="t")
        for event in events:
            if event in LEGAL_TRANSITIONS[job.state]:
                job.transition(event)
            else:
                before = job.state
                with pytest.raises(IllegalTransition):
                    job.transition(event)
                assert job.state == before
        assert job.state in STATES

    def test_property_pass_line(self):
        passed("job lifecycle: random event sequences admit no illegal "
               "state transition")


class TestPersistenceRoundTrip:
    def test_all_record_kinds_and_checksum(self, workspace, corpus_store):
        group = corpus_store.create_group("g")
        doc = corpus_store.ingest_document(
            group.group_id, "d", "markdown", b"# H\n\nBody paragraph text.")
        assert CorpusStore(workspace).get_group(group.group_id).to_dict() == \
            group.to_dict() | {"document_ids": [doc.doc_id]}
        assert CorpusStore(workspace).get_document(doc.doc_id).to_dict() == \
            doc.to_dict()

        dataset = _make_dataset(5)
        workspace.save_dataset(dataset)
        assert workspace.load_dataset("ds1").to_dict() == dataset.to_dict()

        for kind, record in (("examples", {"example_id": "e1", "doc_id": doc.doc_id,
                                           "question": "Q?", "answer": "A"}),
                             ("comparisons", {"comparison_id": "c1",
                                              "answer_a": "x", "answer_b": "y"}),
                             ("jobs", {"job_id": "j1", "state": "Pending"})):
            workspace.save(kind, record[f"{kind[:-1]}_id"], record)
            assert workspace.load(kind, record[f"{kind[:-1]}_id"]) == record

        path = workspace.root / "datasets" / "ds1.json"
        path.write_bytes(path.read_bytes()[:-6] + b"oops!]")
        with pytest.raises(CorruptRecord):
            workspace.load("datasets", "ds1")
        passed("persistence: structural round-trip for every record kind; "
               "corruption detected via checksum")
