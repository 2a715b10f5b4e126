"""Initial entity and relation-cell embeddings.

Two sources for entity vectors: a learned token-embedding table with average
pooling over each mention span (optionally plus a learned per-entity indicator
embedding), or frozen vectors read from a binary embedding file produced by an
external contextual encoder. Relation cells start as an ordered-concatenation
FFN over the two argument entity vectors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, Document
from .numerics import (
    Tensor,
    concat,
    embedding_lookup,
    embedding_table,
    mean,
    relu,
    reshape,
    xavier_uniform,
    zeros,
)

UNK = 0
UNK_TOKEN = "<unk>"

EMB_MAGIC = b"ROREMB01"


class EmbeddingFormatError(ValueError):
    """An embedding file is malformed or does not match the corpus."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 1000
    dim: int = 512
    source: str = "learned"              # "learned" | "external_file"
    entity_indicator: str = "sentence_index"   # "sentence_index" | "none"
    max_entities: int = 32

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.source not in ("learned", "external_file"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.entity_indicator not in ("sentence_index", "none"):
            raise ValueError(f"unknown entity_indicator {self.entity_indicator!r}")


class Vocab:
    """Token to id map; id 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.id_of = {UNK_TOKEN: UNK}
        for t in tokens:
            if t not in self.id_of:
                self.id_of[t] = len(self.id_of)

    def __len__(self) -> int:
        return len(self.id_of)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.id_of.get(t, UNK) for t in tokens], dtype=np.int64)

    def to_json(self) -> str:
        ordered = sorted(self.id_of, key=self.id_of.get)
        return json.dumps({"tokens": ordered[1:]})

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        return cls(json.loads(text)["tokens"])


def build_vocab(corpus: Corpus) -> Vocab:
    """Deterministic: sorted unique tokens over the whole corpus."""
    seen = sorted({t for doc in corpus.documents for t in doc.tokens})
    return Vocab(seen)


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d = cfg.dim
    params = {
        "enc.tok": embedding_table((cfg.vocab_size, d), rng),
        "enc.rel.w1": xavier_uniform((2 * d, 2 * d), rng),
        "enc.rel.b1": zeros((2 * d,)),
        "enc.rel.w2": xavier_uniform((2 * d, d), rng),
        "enc.rel.b2": zeros((d,)),
    }
    if cfg.entity_indicator == "sentence_index":
        params["enc.ind"] = embedding_table((cfg.max_entities, d), rng)
    return params


def embed_entities(doc: Document, cfg: EncoderConfig, params: dict[str, Tensor],
                   vocab: Vocab | None = None,
                   emb_file: "EmbeddingFile | None" = None) -> Tensor:
    """M x d matrix of entity vectors: average pooling over each span."""
    if cfg.source == "external_file":
        if emb_file is None:
            raise EmbeddingFormatError("external source configured but no embedding file given")
        rows = emb_file.vectors(doc.doc_id)
        if rows.shape != (doc.m, cfg.dim):
            raise EmbeddingFormatError(
                f"{doc.doc_id}: embedding file has shape {rows.shape}, "
                f"expected ({doc.m}, {cfg.dim})")
        return Tensor(rows.astype(np.float64), requires_grad=False)
    if vocab is None:
        raise ValueError("learned source needs a vocabulary")
    if doc.m > cfg.max_entities and cfg.entity_indicator == "sentence_index":
        raise ValueError(f"{doc.doc_id}: {doc.m} entities exceed max_entities={cfg.max_entities}")
    ids = vocab.encode(doc.tokens)
    per_entity = []
    for e in doc.entities:
        span = embedding_lookup(params["enc.tok"], ids[e.start:e.end])
        pooled = mean(span, axis=0, keepdims=True)
        if cfg.entity_indicator == "sentence_index":
            pooled = pooled + embedding_lookup(params["enc.ind"],
                                               np.array([e.id], dtype=np.int64))
        per_entity.append(pooled)
    return concat(per_entity, axis=0)


def init_relations(ents: Tensor, params: dict[str, Tensor]) -> Tensor:
    """M x M x d cell embeddings: FFN over [e_i ; e_j], ordered concatenation."""
    m, d = ents.data.shape
    left = np.repeat(np.arange(m, dtype=np.int64), m)
    right = np.tile(np.arange(m, dtype=np.int64), m)
    pairs = concat([embedding_lookup(ents, left), embedding_lookup(ents, right)], axis=1)
    hidden = relu(pairs @ params["enc.rel.w1"] + params["enc.rel.b1"])
    flat = hidden @ params["enc.rel.w2"] + params["enc.rel.b2"]
    return reshape(flat, (m, m, d))


# ---------------------------------------------------------------------------
# binary embedding file

def write_embedding_file(path, dim: int,
                         entries: Sequence[tuple[str, np.ndarray]]) -> None:
    """Write doc-keyed f32 entity vectors: magic, u64 LE header length, JSON
    header {dim, docs: [{doc_id, n_entities, offset}]}, then per-doc
    n_entities x dim little-endian f32 rows at the stated payload offsets."""
    docs = []
    blobs = []
    offset = 0
    for doc_id, rows in entries:
        rows = np.ascontiguousarray(rows, dtype="<f4")
        if rows.ndim != 2 or rows.shape[1] != dim:
            raise EmbeddingFormatError(
                f"{doc_id}: rows must be (n, {dim}), got {rows.shape}")
        docs.append({"doc_id": doc_id, "n_entities": int(rows.shape[0]),
                     "offset": offset})
        blob = rows.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"dim": dim, "docs": docs}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


class EmbeddingFile:
    """Reader for the binary entity-embedding format."""

    def __init__(self, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(EMB_MAGIC))
            if magic != EMB_MAGIC:
                raise EmbeddingFormatError(f"bad magic {magic!r}")
            (header_len,) = struct.unpack("<Q", fh.read(8))
            try:
                header = json.loads(fh.read(header_len).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise EmbeddingFormatError(f"unreadable header: {exc}") from exc
            self.payload = fh.read()
        if "dim" not in header or "docs" not in header:
            raise EmbeddingFormatError("header missing dim/docs")
        self.dim = int(header["dim"])
        self.docs = {}
        for d in header["docs"]:
            self.docs[d["doc_id"]] = (int(d["n_entities"]), int(d["offset"]))

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def vectors(self, doc_id: str) -> np.ndarray:
        if doc_id not in self.docs:
            raise EmbeddingFormatError(f"doc {doc_id!r} not in embedding file")
        n, offset = self.docs[doc_id]
        nbytes = n * self.dim * 4
        chunk = self.payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise EmbeddingFormatError(f"doc {doc_id!r}: truncated payload")
        return np.frombuffer(chunk, dtype="<f4").reshape(n, self.dim).astype(np.float64)
