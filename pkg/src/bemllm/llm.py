"""Chat and embedding clients with record/replay transcripts.

Every exchange is keyed by a content digest of (model, temperature, prompt).
A transcript is a JSON-lines file, one exchange per line::

    {"digest": "...", "kind": "chat", "tag": "agent2:People", "model": "gpt-4-0613",
     "temperature": 0.0, "prompt": "...", "response": "...", "timestamp": "..."}

Embedding exchanges use ``"kind": "embed"``; the prompt is the JSON list of
input texts and the response the JSON list of vectors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .errors import (
    AuthError,
    DimensionMismatch,
    EmbeddingFailed,
    RateLimited,
    ReplayMiss,
    TransportError,
)

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4-0613"
DEFAULT_EMBEDDING_MODEL = "text-embedding-ada-002"


def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    temperature: float = 0.0
    model_id: str = DEFAULT_MODEL
    max_tokens: int | None = None
    tag: str = ""

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be within [0, 1], got {self.temperature}")

    @property
    def digest(self) -> str:
        return _digest("chat", self.model_id, repr(float(self.temperature)), self.prompt)


def embed_digest(model_id: str, texts: Sequence[str]) -> str:
    return _digest("embed", model_id, json.dumps(list(texts), ensure_ascii=False))


@dataclass(frozen=True)
class TranscriptEntry:
    digest: str
    response: str
    prompt: str = ""
    tag: str = ""
    model: str = ""
    temperature: float = 0.0
    kind: str = "chat"
    timestamp: str | None = None
    usage: dict | None = None

    def to_json(self) -> str:
        rec = {
            "digest": self.digest,
            "kind": self.kind,
            "tag": self.tag,
            "model": self.model,
            "temperature": self.temperature,
            "prompt": self.prompt,
            "response": self.response,
        }
        if self.timestamp is not None:
            rec["timestamp"] = self.timestamp
        if self.usage:
            rec["usage"] = self.usage
        return json.dumps(rec, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> TranscriptEntry:
        rec = json.loads(line)
        return cls(
            digest=rec["digest"],
            response=rec["response"],
            prompt=rec.get("prompt", ""),
            tag=rec.get("tag", ""),
            model=rec.get("model", ""),
            temperature=float(rec.get("temperature", 0.0)),
            kind=rec.get("kind", "chat"),
            timestamp=rec.get("timestamp"),
            usage=rec.get("usage"),
        )


class Transcript:
    """Digest-indexed exchanges, optionally mirrored to a JSON-lines file.

    Appends are serialized by a lock.  A second record under an existing
    digest replaces the first in the index (the file keeps both lines) and
    logs a warning.
    """

    def __init__(self, path: str | os.PathLike | None = None, stamp: bool = True):
        self.path = Path(path) if path is not None else None
        self.stamp = stamp
        self._entries: dict[str, TranscriptEntry] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | os.PathLike) -> Transcript:
        t = cls(None)
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, start=1):
                if line.strip():
                    t._index(TranscriptEntry.from_json(line), source=f"{path}:{n}")
        return t

    @classmethod
    def merged(cls, paths: Sequence[str | os.PathLike]) -> Transcript:
        t = cls(None)
        for p in paths:
            for e in cls.load(p).entries():
                t._index(e, source=str(p))
        return t

    def _index(self, entry: TranscriptEntry, source: str = "") -> None:
        if entry.digest in self._entries:
            log.warning("transcript digest %s recorded twice (%s); keeping the later response", entry.digest[:12], source or entry.tag)
        else:
            self._order.append(entry.digest)
        self._entries[entry.digest] = entry

    def append(self, entry: TranscriptEntry) -> None:
        if self.stamp and entry.timestamp is None:
            entry = TranscriptEntry(**{**entry.__dict__, "timestamp": datetime.now(timezone.utc).isoformat()})
        with self._lock:
            self._index(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")

    def get(self, digest: str) -> TranscriptEntry | None:
        return self._entries.get(digest)

    def entries(self) -> list[TranscriptEntry]:
        return [self._entries[d] for d in self._order]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def save(self, path: str | os.PathLike, key: Callable[[TranscriptEntry], object] | None = None) -> None:
        entries = self.entries() if key is None else sorted(self.entries(), key=key)
        with open(path, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(e.to_json() + "\n")


# ---------------------------------------------------------------------------
# backends


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class EmbedBackend(Protocol):
    embedder_id: str

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass
class CallLog:
    """What a backend was asked, for assertions about a run."""

    chats: list[ChatRequest] = field(default_factory=list)
    embeds: list[tuple[str, ...]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def chat(self, req: ChatRequest) -> None:
        with self._lock:
            self.chats.append(req)

    def embed(self, texts: Sequence[str]) -> None:
        with self._lock:
            self.embeds.append(tuple(texts))


class ReplayBackend:
    """Answers from a transcript only; never touches the network."""

    def __init__(self, transcript: Transcript, embedding_model: str = DEFAULT_EMBEDDING_MODEL):
        self.transcript = transcript
        self.embedding_model = embedding_model
        self.embedder_id = embedding_model
        self.calls = CallLog()

    def complete(self, request: ChatRequest) -> str:
        self.calls.chat(request)
        entry = self.transcript.get(request.digest)
        if entry is None:
            raise ReplayMiss(request.tag, request.digest)
        return entry.response

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls.embed(texts)
        d = embed_digest(self.embedding_model, texts)
        entry = self.transcript.get(d)
        if entry is None:
            raise ReplayMiss("embed", d)
        return json.loads(entry.response)


class ScriptedBackend:
    """Chat backend driven by a Python callable; used to author fixtures and in tests."""

    def __init__(self, respond: Callable[[ChatRequest], str]):
        self.respond = respond
        self.calls = CallLog()

    def complete(self, request: ChatRequest) -> str:
        self.calls.chat(request)
        return self.respond(request)


class RecordingBackend:
    """Wraps a backend and appends every exchange to a transcript."""

    def __init__(self, inner, transcript: Transcript):
        self.inner = inner
        self.transcript = transcript
        self.embedder_id = getattr(inner, "embedder_id", "")

    @property
    def calls(self) -> CallLog:
        return self.inner.calls

    def complete(self, request: ChatRequest) -> str:
        text = self.inner.complete(request)
        self.transcript.append(
            TranscriptEntry(
                digest=request.digest,
                response=text,
                prompt=request.prompt,
                tag=request.tag,
                model=request.model_id,
                temperature=request.temperature,
            )
        )
        return text

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        vectors = self.inner.embed(texts)
        model = getattr(self.inner, "embedding_model", self.embedder_id)
        self.transcript.append(
            TranscriptEntry(
                digest=embed_digest(model, texts),
                response=json.dumps(vectors),
                prompt=json.dumps(list(texts), ensure_ascii=False),
                tag="embed",
                model=model,
                kind="embed",
            )
        )
        return vectors


class LiveBackend:
    """OpenAI-compatible HTTP client (``/chat/completions`` and ``/embeddings``).

    Transient failures (connection errors, 5xx, 429) are retried up to
    ``retries`` times with exponential backoff; 429 honours ``Retry-After``.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None,
        embedding_model: str = DEFAULT_EMBEDDING_MODEL,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 1.0,
        client=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.embedding_model = embedding_model
        self.embedder_id = embedding_model
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)
        self.calls = CallLog()

    @classmethod
    def from_env(cls, base_url: str, credential_env: str, **kw) -> LiveBackend:
        key = os.environ.get(credential_env)
        if not key:
            raise AuthError(f"environment variable {credential_env} is not set")
        return cls(base_url, key, **kw)

    def _post(self, path: str, payload: dict) -> dict:
        import httpx

        url = f"{self.base_url}{path}"
        attempt = 0
        while True:
            try:
                resp = self.client.post(url, json=payload)
            except httpx.HTTPError as exc:
                err: TransportError = TransportError(f"{url}: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"{url}: HTTP {resp.status_code}")
                if resp.status_code == 429:
                    retry_after = _retry_after(resp.headers.get("retry-after"))
                    err = RateLimited(f"{url}: rate limited", retry_after)
                elif resp.status_code >= 500:
                    err = TransportError(f"{url}: HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return resp.json()
            if attempt >= self.retries:
                raise err
            delay = self.backoff * (2**attempt)
            if isinstance(err, RateLimited) and err.retry_after is not None:
                delay = max(delay, err.retry_after)
            log.warning("%s; retrying in %.1fs", err, delay)
            self.sleep(delay)
            attempt += 1

    def complete(self, request: ChatRequest) -> str:
        self.calls.chat(request)
        payload = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls.embed(texts)
        data = self._post("/embeddings", {"model": self.embedding_model, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            return [list(map(float, r["embedding"])) for r in rows]
        except (KeyError, TypeError) as exc:
            raise EmbeddingFailed(f"malformed embedding response: {exc}") from exc


def _retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# deterministic embedder

STOPWORDS = frozenset(
    """a an and are as at be by can do does for from has have how i in is it its of on or
    that the this to was what when where which who why will with you your""".split()
)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokens(text: str) -> set[str]:
    return {t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS}


class StubEmbedder:
    """Feature-hashing embedder: each distinct non-stopword token adds +-1 to one slot.

    Identical token sets give identical vectors, so cosine similarity tracks
    lexical overlap.  Deterministic across processes (blake2b, not ``hash``).
    """

    def __init__(self, dimension: int = 256, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self.embedder_id = f"stub-hash-{dimension}-s{seed}"
        self.calls = CallLog()

    def vector(self, text: str) -> list[float]:
        vec = [0.0] * self.dimension
        key = self.seed.to_bytes(8, "little")
        for tok in sorted(tokens(text)):
            h = hashlib.blake2b(tok.encode("utf-8"), digest_size=8, key=key).digest()
            n = int.from_bytes(h, "little")
            vec[n % self.dimension] += 1.0 if (n >> 63) & 1 else -1.0
        return vec

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls.embed(texts)
        return [self.vector(t) for t in texts]


# ---------------------------------------------------------------------------
# entry points


def complete(backend: ChatBackend, request: ChatRequest) -> str:
    return backend.complete(request)


def embed(backend: EmbedBackend, texts: Sequence[str]) -> list[list[float]]:
    if not texts:
        raise ValueError("nothing to embed")
    vectors = backend.embed(list(texts))
    if len(vectors) != len(texts):
        raise EmbeddingFailed(f"asked for {len(texts)} embeddings, got {len(vectors)}")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"backend returned vectors of lengths {sorted(dims)}")
    return vectors
