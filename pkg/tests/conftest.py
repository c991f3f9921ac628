import json
import sys
from pathlib import Path

import httpx
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from qgen.corpus import CorpusStore
from qgen.datastore import Workspace
from qgen.llm_gateway import ProviderConfig, ProviderRegistry


@pytest.fixture
def workspace(tmp_path):
    return Workspace(tmp_path / "ws")


@pytest.fixture
def corpus_store(workspace):
    return CorpusStore(workspace)


@pytest.fixture
def registry():
    reg = ProviderRegistry()
    reg.register(
        ProviderConfig(
            provider_id="mock",
            base_url="http://mock.test",
            model_name="mock-model",
            max_retries=2,
        )
    )
    return reg


def chat_body(content: str) -> dict:
    return {"choices": [{"message": {"content": content}, "finish_reason": "stop"}]}


def qa_json(*pairs) -> str:
    return json.dumps([{"question": q, "answer": a} for q, a in pairs])


def make_transport(handler):
    return httpx.MockTransport(handler)


def canned_transport(content: str):
    """Every request gets a 200 chat response with the given content."""

    def handler(request):
        return httpx.Response(200, json=chat_body(content))

    return httpx.MockTransport(handler)


def sequence_transport(statuses_and_bodies):
    """Scripted responses: list of (status, json_body). Repeats the last."""
    calls = {"n": 0}

    def handler(request):
        idx = min(calls["n"], len(statuses_and_bodies) - 1)
        calls["n"] += 1
        status, body = statuses_and_bodies[idx]
        return httpx.Response(status, json=body)

    transport = httpx.MockTransport(handler)
    transport.calls = calls  # type: ignore[attr-defined]
    return transport
