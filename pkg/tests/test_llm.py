from __future__ import annotations

import json
import logging

import httpx
import pytest
from conftest import TRANSCRIPTS, run_trial

from bemllm.errors import AuthError, DimensionMismatch, EmbeddingFailed, RateLimited, ReplayMiss, TransportError
from bemllm.llm import (
    ChatRequest,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    StubEmbedder,
    Transcript,
    TranscriptEntry,
    complete,
    embed,
)


def test_temperature_bounds():
    with pytest.raises(ValueError):
        ChatRequest("x", temperature=1.5)
    with pytest.raises(ValueError):
        ChatRequest("x", temperature=-0.1)


def test_digest_covers_prompt_model_temperature():
    base = ChatRequest("hello")
    assert base.digest == ChatRequest("hello", tag="other").digest
    assert base.digest != ChatRequest("hello!").digest
    assert base.digest != ChatRequest("hello", model_id="another-model").digest
    assert base.digest != ChatRequest("hello", temperature=0.5).digest


def test_record_then_replay(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = RecordingBackend(ScriptedBackend(lambda r: "People,\n  TBD1234567890;"), Transcript(path))
    req = ChatRequest("Generate a People object", tag="agent2:1")
    first = complete(rec, req)
    replay = ReplayBackend(Transcript.load(path))
    assert complete(replay, req) == first
    assert complete(replay, req) == first
    with pytest.raises(ReplayMiss) as info:
        complete(replay, ChatRequest("Generate a People object.", tag="agent2:2"))
    assert info.value.tag == "agent2:2"


def test_duplicate_digest_overwrites_with_warning(tmp_path, caplog):
    path = tmp_path / "t.jsonl"
    answers = iter(["first", "second"])
    rec = RecordingBackend(ScriptedBackend(lambda r: next(answers)), Transcript(path))
    req = ChatRequest("same prompt")
    with caplog.at_level(logging.WARNING, logger="bemllm.llm"):
        complete(rec, req)
        complete(rec, req)
    assert any("recorded twice" in r.message for r in caplog.records)
    assert len(path.read_text().splitlines()) == 2
    assert ReplayBackend(Transcript.load(path)).complete(req) == "second"


def test_transcript_line_format(tmp_path):
    path = tmp_path / "t.jsonl"
    t = Transcript(path, stamp=False)
    t.append(TranscriptEntry("abc", "resp", prompt="p", tag="tag", model="m"))
    rec = json.loads(path.read_text())
    assert rec == {"digest": "abc", "kind": "chat", "tag": "tag", "model": "m", "temperature": 0.0,
                   "prompt": "p", "response": "resp"}
    stamped = Transcript(None)
    stamped.append(TranscriptEntry("d", "r"))
    assert stamped.get("d").timestamp is not None


def test_stub_embedder():
    stub = StubEmbedder(64)
    a, a2, b = embed(stub, ["a heat pump", "a heat pump", "chilled beams"])
    assert a == a2
    assert a != b and len(a) == len(b) == 64
    assert StubEmbedder(64, seed=1).vector("heat pump") != a
    assert stub.embedder_id == "stub-hash-64-s0"
    with pytest.raises(ValueError):
        embed(stub, [])


def test_embedding_record_replay(tmp_path):
    path = tmp_path / "e.jsonl"
    stub = StubEmbedder(32)
    stub.embedding_model = "stub"
    rec = RecordingBackend(stub, Transcript(path))
    vectors = embed(rec, ["one", "two"])
    replay = ReplayBackend(Transcript.load(path), embedding_model="stub")
    assert embed(replay, ["one", "two"]) == vectors
    with pytest.raises(ReplayMiss):
        embed(replay, ["three"])


class Ragged:
    embedder_id = "ragged"

    def embed(self, texts):
        return [[1.0, 2.0], [1.0]][: len(texts)]


def test_ragged_vectors():
    with pytest.raises(DimensionMismatch):
        embed(Ragged(), ["a", "b"])


# ---------------------------------------------------------------------------
# live backend against a mock transport


def live(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    delays = []
    backend = LiveBackend("https://llm.example/v1", "k", client=client, sleep=delays.append, **kw)
    return backend, delays


def test_live_chat_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    backend, _ = live(handler)
    assert backend.complete(ChatRequest("hi", max_tokens=5)) == "ok"
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["body"] == {"model": "gpt-4-0613", "messages": [{"role": "user", "content": "hi"}],
                            "temperature": 0.0, "max_tokens": 5}


def test_live_retries_then_succeeds():
    codes = iter([500, 429, 200])

    def handler(request):
        code = next(codes)
        if code == 200:
            return httpx.Response(200, json={"choices": [{"message": {"content": "done"}}]})
        headers = {"retry-after": "7"} if code == 429 else {}
        return httpx.Response(code, headers=headers)

    backend, delays = live(handler, backoff=0.5)
    assert backend.complete(ChatRequest("hi")) == "done"
    assert delays == [0.5, 7.0]


def test_live_gives_up_after_retries():
    backend, delays = live(lambda r: httpx.Response(429), retries=2)
    with pytest.raises(RateLimited):
        backend.complete(ChatRequest("hi"))
    assert len(delays) == 2


def test_live_auth_and_client_errors():
    backend, delays = live(lambda r: httpx.Response(401))
    with pytest.raises(AuthError):
        backend.complete(ChatRequest("hi"))
    assert delays == []
    backend, _ = live(lambda r: httpx.Response(400, text="bad"))
    with pytest.raises(TransportError):
        backend.complete(ChatRequest("hi"))


def test_live_connection_error():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend, delays = live(handler, retries=1)
    with pytest.raises(TransportError):
        backend.complete(ChatRequest("hi"))
    assert len(delays) == 1


def test_live_embeddings_sorted_by_index():
    def handler(request):
        return httpx.Response(200, json={"data": [{"index": 1, "embedding": [0, 1]}, {"index": 0, "embedding": [1, 0]}]})

    backend, _ = live(handler)
    assert backend.embed(["a", "b"]) == [[1.0, 0.0], [0.0, 1.0]]
    backend, _ = live(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(EmbeddingFailed):
        backend.embed(["a"])


def test_from_env_requires_credential(monkeypatch):
    monkeypatch.delenv("BEMLLM_TEST_KEY", raising=False)
    with pytest.raises(AuthError):
        LiveBackend.from_env("https://llm.example/v1", "BEMLLM_TEST_KEY")
    monkeypatch.setenv("BEMLLM_TEST_KEY", "secret")
    backend = LiveBackend.from_env("https://llm.example/v1", "BEMLLM_TEST_KEY")
    assert backend.client.headers["authorization"] == "Bearer secret"


# ---------------------------------------------------------------------------
# pipeline-level guarantees


def test_recorded_transcripts_are_temperature_zero():
    for path in sorted(TRANSCRIPTS.glob("*.jsonl")):
        for entry in Transcript.load(path).entries():
            assert entry.temperature == 0.0, (path.name, entry.tag)


def test_replay_run_sends_only_temperature_zero(schema, monkeypatch):
    def no_network(*args, **kwargs):
        raise AssertionError("network access during replay")

    monkeypatch.setattr(httpx.Client, "send", no_network)
    monkeypatch.setattr(httpx.AsyncClient, "send", no_network)
    captured = []
    original = ReplayBackend.complete

    def spy(self, request):
        captured.append(request)
        return original(self, request)

    monkeypatch.setattr(ReplayBackend, "complete", spy)
    _, runlog = run_trial(schema, 5)
    assert captured and all(r.temperature == 0.0 for r in captured)
