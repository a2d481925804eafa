"""On-disk embedding stores: line-oriented JSON and a compact binary layout.

Both formats store float32 vectors; arithmetic elsewhere runs in float64.
The JSONL format opens with a header object, the binary format with a magic
string, so either loader can reject the wrong file with a line/offset
diagnostic instead of garbage.
"""

from __future__ import annotations

import io
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DuplicateIdError, EmptyBatchError, FormatError
from .ioutil import atomic_write_bytes, read_jsonl

JSONL_FORMAT_NAME = "deo-emb"
JSONL_FORMAT_VERSION = 1
BINARY_MAGIC = b"DEOEMB1\x00"


@dataclass
class EmbeddingStore:
    """Ordered id -> float32 vector map with fixed dimension."""

    dim: int
    model: str = ""
    _ids: list[str] = field(default_factory=list, repr=False)
    _index: dict[str, int] = field(default_factory=dict, repr=False)
    _rows: list[np.ndarray] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._index

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, record_id: str, vector) -> None:
        if record_id in self._index:
            raise DuplicateIdError(f"id {record_id!r} already stored")
        row = np.asarray(vector, dtype=np.float32)
        if row.ndim != 1:
            raise FormatError(f"vector for {record_id!r} is not one-dimensional")
        if row.shape[0] != self.dim:
            raise FormatError(
                f"vector for {record_id!r} has dimension {row.shape[0]}, store has {self.dim}"
            )
        self._index[record_id] = len(self._ids)
        self._ids.append(record_id)
        self._rows.append(row)

    def get(self, record_id: str) -> np.ndarray:
        """Return the vector as float64 for downstream arithmetic."""
        try:
            pos = self._index[record_id]
        except KeyError:
            raise KeyError(f"id {record_id!r} not in store") from None
        return self._rows[pos].astype(np.float64)

    def items(self):
        for record_id in self._ids:
            yield record_id, self.get(record_id)

    # -- JSONL ---------------------------------------------------------

    def save_jsonl(self, path) -> None:
        buf = io.StringIO()
        header = {
            "format": JSONL_FORMAT_NAME,
            "version": JSONL_FORMAT_VERSION,
            "dim": self.dim,
            "model": self.model,
        }
        buf.write(json.dumps(header, separators=(",", ":")) + "\n")
        for record_id in self._ids:
            vec = self._rows[self._index[record_id]]
            line = json.dumps(
                {"id": record_id, "vector": [float(x) for x in vec]},
                separators=(",", ":"),
            )
            buf.write(line + "\n")
        atomic_write_bytes(path, buf.getvalue().encode("utf-8"))

    @classmethod
    def load_jsonl(cls, path) -> "EmbeddingStore":
        rows = read_jsonl(path)
        try:
            lineno, header = next(rows)
        except StopIteration:
            raise FormatError(f"{path}: empty embedding file") from None
        if not isinstance(header, dict) or header.get("format") != JSONL_FORMAT_NAME:
            raise FormatError(f"{path}:{lineno}: missing {JSONL_FORMAT_NAME!r} header")
        if header.get("version") != JSONL_FORMAT_VERSION:
            raise FormatError(
                f"{path}:{lineno}: unsupported version {header.get('version')!r}"
            )
        dim = header.get("dim")
        if not isinstance(dim, int) or dim <= 0:
            raise FormatError(f"{path}:{lineno}: header dim must be a positive integer")
        store = cls(dim=dim, model=str(header.get("model", "")))
        for lineno, obj in rows:
            if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
                raise FormatError(f"{path}:{lineno}: expected 'id' and 'vector' fields")
            vector = obj["vector"]
            if not isinstance(vector, list) or len(vector) != dim:
                raise FormatError(
                    f"{path}:{lineno}: vector length {len(vector) if isinstance(vector, list) else '?'}"
                    f" does not match header dim {dim}"
                )
            try:
                store.add(str(obj["id"]), vector)
            except DuplicateIdError:
                raise FormatError(f"{path}:{lineno}: duplicate id {obj['id']!r}") from None
        return store

    # -- binary --------------------------------------------------------

    def save_binary(self, path) -> None:
        buf = io.BytesIO()
        buf.write(BINARY_MAGIC)
        buf.write(struct.pack("<I", self.dim))
        buf.write(struct.pack("<Q", len(self._ids)))
        for record_id in self._ids:
            encoded = record_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise FormatError(f"id {record_id!r} exceeds 65535 encoded bytes")
            buf.write(struct.pack("<H", len(encoded)))
            buf.write(encoded)
            buf.write(self._rows[self._index[record_id]].astype("<f4").tobytes())
        atomic_write_bytes(path, buf.getvalue())

    @classmethod
    def load_binary(cls, path) -> "EmbeddingStore":
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(BINARY_MAGIC):
            raise FormatError(f"{path}: bad magic, not a binary embedding store")
        offset = len(BINARY_MAGIC)
        if len(data) < offset + 12:
            raise FormatError(f"{path}: truncated header at offset {len(data)}")
        (dim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        (count,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        if dim <= 0:
            raise FormatError(f"{path}: header dim must be positive")
        store = cls(dim=dim)
        vec_bytes = 4 * dim
        for i in range(count):
            if offset + 2 > len(data):
                raise FormatError(f"{path}: truncated record {i} at offset {offset}")
            (id_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            if offset + id_len + vec_bytes > len(data):
                raise FormatError(f"{path}: truncated record {i} at offset {offset}")
            record_id = data[offset : offset + id_len].decode("utf-8")
            offset += id_len
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += vec_bytes
            try:
                store.add(record_id, vec)
            except DuplicateIdError:
                raise FormatError(f"{path}: duplicate id {record_id!r} in record {i}") from None
        if offset != len(data):
            raise FormatError(f"{path}: {len(data) - offset} trailing bytes after records")
        return store


def load_store(path) -> EmbeddingStore:
    """Sniff the format from the first bytes and dispatch."""
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
    if head.startswith(BINARY_MAGIC):
        return EmbeddingStore.load_binary(path)
    return EmbeddingStore.load_jsonl(path)


def save_store(store: EmbeddingStore, path, fmt: str = "jsonl") -> None:
    if fmt == "jsonl":
        store.save_jsonl(path)
    elif fmt == "binary":
        store.save_binary(path)
    else:
        raise ValueError(f"unknown store format {fmt!r}")


def embed_texts(client, texts: list[str], batch_size: int = 64) -> list[np.ndarray]:
    """Embed texts through client.embed in batches, preserving order.

    Dimension consistency is enforced across the whole call, not just within
    a batch, since a flaky endpoint can change models mid-stream.
    """
    if not texts:
        raise EmptyBatchError("embed_texts requires at least one text")
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    out: list[np.ndarray] = []
    dim: int | None = None
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        vectors = client.embed(batch)
        if len(vectors) != len(batch):
            raise FormatError(
                f"endpoint returned {len(vectors)} vectors for {len(batch)} texts"
            )
        for vec in vectors:
            row = np.asarray(vec, dtype=np.float64)
            if dim is None:
                dim = row.shape[0]
            elif row.shape[0] != dim:
                raise DimensionMismatchError(
                    f"endpoint returned dimension {row.shape[0]} after {dim}"
                )
            out.append(row)
    return out


@dataclass(frozen=True)
class IngestReport:
    """Outcome of one corpus ingest: how much was embedded vs reused."""

    total: int
    embedded: int
    reused: int
    dim: int
    elapsed_seconds: float


def ingest_corpus(
    texts: dict[str, str],
    embed_fn,
    out_path,
    batch_size: int = 64,
    fmt: str = "jsonl",
    model: str = "",
    resume: bool = False,
) -> tuple[IngestReport, EmbeddingStore]:
    """Embed texts in batches and persist the store.

    embed_fn takes a list of strings and returns a list of vectors. With
    resume=True and an existing store at out_path, records already present
    (matching id) are not re-embedded. The store is written atomically once
    at the end.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    started = time.monotonic()
    existing: EmbeddingStore | None = None
    if resume and out_path is not None and os.path.exists(os.fspath(out_path)):
        existing = load_store(out_path)

    pending = [(doc_id, text) for doc_id, text in texts.items()
               if existing is None or doc_id not in existing]
    reused = len(texts) - len(pending)

    vectors: dict[str, np.ndarray] = {}
    for start in range(0, len(pending), batch_size):
        batch = pending[start : start + batch_size]
        embedded = embed_fn([text for _, text in batch])
        if len(embedded) != len(batch):
            raise FormatError(
                f"embedder returned {len(embedded)} vectors for {len(batch)} texts"
            )
        for (doc_id, _), vec in zip(batch, embedded):
            vectors[doc_id] = np.asarray(vec, dtype=np.float64)

    if existing is not None:
        dim = existing.dim
    elif vectors:
        dim = len(next(iter(vectors.values())))
    else:
        raise FormatError("nothing to ingest and no existing store to reuse")

    store = EmbeddingStore(dim=dim, model=model or (existing.model if existing else ""))
    for doc_id in texts:
        if existing is not None and doc_id in existing:
            store.add(doc_id, existing.get(doc_id))
        else:
            store.add(doc_id, vectors[doc_id])
    if out_path is not None:
        save_store(store, out_path, fmt=fmt)
    report = IngestReport(
        total=len(store),
        embedded=len(pending),
        reused=reused,
        dim=dim,
        elapsed_seconds=time.monotonic() - started,
    )
    return report, store
