"""Documentation retrieval: chunking, a persistent vector index, and cited answers.

Index file format (UTF-8 JSON lines)::

    {"format": "bemllm-rag-index", "version": 1, "dimension": 256, "embedder_id": "...", "count": 20}
    {"id": "about.md#0", "source": "about.md", "text": "...", "vector": [0.0, 1.0, ...]}
    ...

Floats are written with ``repr`` precision, so save then load is bit-identical.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import DEFAULT_TEMPLATES, TemplateSet, render_rag_prompt
from .errors import DimensionMismatch, EmbedderMismatch
from .llm import DEFAULT_MODEL, ChatBackend, ChatRequest, EmbedBackend, embed

log = logging.getLogger(__name__)

DEFAULT_K = 4
DEFAULT_CHUNK_BUDGET = 2000
DEFAULT_BATCH = 16
INDEX_FORMAT = "bemllm-rag-index"
INDEX_VERSION = 1
CORPUS_SUFFIXES = (".txt", ".md")


@dataclass
class Chunk:
    id: str
    source: str
    text: str
    vector: list[float] | None = None


@dataclass
class VectorIndex:
    dimension: int
    embedder_id: str
    chunks: list[Chunk] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for c in self.chunks:
            if c.vector is None or len(c.vector) != self.dimension:
                raise DimensionMismatch(f"chunk {c.id} does not have a {self.dimension}-long vector")
            if c.id in seen:
                raise ValueError(f"duplicate chunk id {c.id}")
            seen.add(c.id)

    def __len__(self) -> int:
        return len(self.chunks)

    def matrix(self) -> np.ndarray:
        return np.array([c.vector for c in self.chunks], dtype=np.float64).reshape(len(self.chunks), self.dimension)

    def save(self, path: str | Path) -> None:
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "dimension": self.dimension,
            "embedder_id": self.embedder_id,
            "count": len(self.chunks),
        }
        lines = [json.dumps(header, sort_keys=True)]
        for c in self.chunks:
            lines.append(
                json.dumps({"id": c.id, "source": c.source, "text": c.text, "vector": c.vector}, ensure_ascii=False)
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> VectorIndex:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty index file")
        header = json.loads(lines[0])
        if header.get("format") != INDEX_FORMAT:
            raise ValueError(f"{path}: not a {INDEX_FORMAT} file")
        chunks = []
        for line in lines[1:]:
            if line.strip():
                rec = json.loads(line)
                chunks.append(Chunk(rec["id"], rec["source"], rec["text"], [float(x) for x in rec["vector"]]))
        if len(chunks) != header["count"]:
            raise ValueError(f"{path}: header says {header['count']} chunks, found {len(chunks)}")
        return cls(int(header["dimension"]), header["embedder_id"], chunks)


# ---------------------------------------------------------------------------
# chunking

_PARAGRAPH_BREAK = re.compile(r"\n\s*\n")
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def _normalize(text: str) -> str:
    return " ".join(text.split())


def _hard_split(text: str, budget: int) -> list[str]:
    """Split at word boundaries; words longer than the budget are cut."""
    out, cur = [], ""
    for word in text.split(" "):
        while len(word) > budget:
            if cur:
                out.append(cur)
                cur = ""
            out.append(word[:budget])
            word = word[budget:]
        if not cur:
            cur = word
        elif len(cur) + 1 + len(word) <= budget:
            cur += " " + word
        else:
            out.append(cur)
            cur = word
    if cur:
        out.append(cur)
    return out


def split_paragraph(text: str, budget: int = DEFAULT_CHUNK_BUDGET) -> list[str]:
    """Pack whole sentences into pieces of at most ``budget`` characters."""
    if budget < 1:
        raise ValueError("chunk budget must be positive")
    if len(text) <= budget:
        return [text]
    pieces, cur = [], ""
    for sentence in _SENTENCE_END.split(text):
        for part in _hard_split(sentence, budget) if len(sentence) > budget else [sentence]:
            if not cur:
                cur = part
            elif len(cur) + 1 + len(part) <= budget:
                cur += " " + part
            else:
                pieces.append(cur)
                cur = part
    if cur:
        pieces.append(cur)
    return pieces


def chunk_corpus(documents: Sequence[tuple[str, str]], budget: int = DEFAULT_CHUNK_BUDGET) -> list[Chunk]:
    """Split each (source, text) document on blank lines, then by sentences to fit the budget."""
    chunks = []
    for source, text in documents:
        ordinal = 0
        for para in _PARAGRAPH_BREAK.split(text):
            para = _normalize(para)
            if not para:
                continue
            for piece in split_paragraph(para, budget):
                chunks.append(Chunk(f"{source}#{ordinal}", source, piece))
                ordinal += 1
    return chunks


def read_corpus_dir(directory: str | Path) -> list[tuple[str, str]]:
    """Text and markdown files under ``directory``, sorted by relative path."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in CORPUS_SUFFIXES)
    return [(p.relative_to(root).as_posix(), p.read_text(encoding="utf-8")) for p in files]


# ---------------------------------------------------------------------------
# indexing and search


def build_index(chunks: Sequence[Chunk], backend: EmbedBackend, batch_size: int = DEFAULT_BATCH) -> VectorIndex:
    if not chunks:
        raise ValueError("cannot index an empty chunk list")
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    vectors: list[list[float]] = []
    for start in range(0, len(chunks), batch_size):
        batch = [c.text for c in chunks[start : start + batch_size]]
        vectors.extend(embed(backend, batch))
    dimension = len(vectors[0])
    if any(len(v) != dimension for v in vectors):
        raise DimensionMismatch("embedding backend returned vectors of different lengths across batches")
    embedded = [Chunk(c.id, c.source, c.text, [float(x) for x in v]) for c, v in zip(chunks, vectors)]
    log.info("indexed %d chunks, dimension %d", len(embedded), dimension)
    return VectorIndex(dimension, backend.embedder_id, embedded)


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine of each row against ``query``; any zero-norm side scores 0."""
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    dots = matrix @ query
    out = np.zeros(len(matrix), dtype=np.float64)
    nz = norms > 0
    out[nz] = dots[nz] / norms[nz]
    return out


def _check_embedder(index: VectorIndex, backend: EmbedBackend) -> None:
    if backend.embedder_id != index.embedder_id:
        raise EmbedderMismatch(f"index was built with {index.embedder_id!r}, query backend is {backend.embedder_id!r}")


def search(index: VectorIndex, query: str, k: int, backend: EmbedBackend) -> list[tuple[Chunk, float]]:
    if k < 1:
        raise ValueError("k must be at least 1")
    _check_embedder(index, backend)
    if not index.chunks:
        return []
    qvec = embed(backend, [query])[0]
    if len(qvec) != index.dimension:
        raise DimensionMismatch(f"query vector has length {len(qvec)}, index dimension is {index.dimension}")
    scores = cosine_scores(index.matrix(), np.asarray(qvec, dtype=np.float64))
    order = sorted(range(len(index.chunks)), key=lambda i: (-scores[i], index.chunks[i].id))
    return [(index.chunks[i], float(scores[i])) for i in order[:k]]


def answer(
    index: VectorIndex,
    question: str,
    k: int,
    embed_backend: EmbedBackend,
    chat: ChatBackend,
    model_id: str = DEFAULT_MODEL,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> tuple[str, list[str]]:
    """Answer ``question`` from the top-k chunks; returns (text, ids of the chunks supplied)."""
    hits = search(index, question, k, embed_backend)
    prompt = render_rag_prompt(question, [(c.id, c.text) for c, _ in hits], templates)
    text = chat.complete(ChatRequest(prompt=prompt, model_id=model_id, temperature=0.0, tag="rag:answer"))
    return text, [c.id for c, _ in hits]


# ---------------------------------------------------------------------------
# web ingestion


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style", "noscript", "head"}
    _BLOCK = {"p", "div", "li", "h1", "h2", "h3", "h4", "h5", "h6", "section", "article", "br", "tr", "pre"}

    def __init__(self):
        super().__init__()
        self.parts: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip += 1
        elif tag in self._BLOCK:
            self.parts.append("\n\n")

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip:
            self._skip -= 1
        elif tag in self._BLOCK:
            self.parts.append("\n\n")

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def html_to_text(html: str) -> str:
    """Visible text of an HTML page with block elements as paragraph breaks."""
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    paras = [_normalize(p) for p in _PARAGRAPH_BREAK.split("".join(parser.parts))]
    return "\n\n".join(p for p in paras if p)


def fetch_page(url: str, client=None, timeout: float = 30.0) -> str:
    """Download ``url`` and return its paragraph text."""
    import httpx

    if client is None:
        with httpx.Client(timeout=timeout, follow_redirects=True) as c:
            resp = c.get(url)
    else:
        resp = client.get(url)
    resp.raise_for_status()
    return html_to_text(resp.text)


__all__ = [
    "Chunk",
    "VectorIndex",
    "answer",
    "build_index",
    "chunk_corpus",
    "cosine_scores",
    "fetch_page",
    "html_to_text",
    "read_corpus_dir",
    "search",
    "split_paragraph",
]
