"""Single-file binary persistence for :class:`SearchIndex`.

Layout, all little-endian:

    magic "PRAGIDX1" (7-byte tag + 1-byte format version)
    index config (dimension, BM25 and HNSW parameters, seed)
    embedder config (backend, model id, seed, cache path)
    documents in graph-ordinal order (id, title, category, content, vector)
    postings (term -> (doc ordinal, term frequency) pairs)
    HNSW adjacency (entry point, max level, per-node layers)
    CRC32 over everything above

A reloaded index answers every keyword, vector, and hybrid query identically
to the saved one: vectors round-trip as raw float32 bytes and the graph
adjacency is stored verbatim. Tombstoned documents are dropped by rebuilding
the index from its live documents before serialization.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..embedding import Embedder, EmbedderConfig, make_embedder
from ..errors import CorruptFile, DimensionMismatch, FormatVersionMismatch
from . import Category, DocumentRecord, IndexConfig, SearchIndex

MAGIC_TAG = b"PRAGIDX"
FORMAT_VERSION = b"1"
MAGIC = MAGIC_TAG + FORMAT_VERSION

_CATEGORIES = list(Category)


class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def raw(self, data: bytes) -> None:
        self.buf += data

    def pack(self, fmt: str, *values) -> None:
        self.buf += struct.pack("<" + fmt, *values)

    def text(self, value: str) -> None:
        data = value.encode("utf-8")
        self.pack("I", len(data))
        self.raw(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def raw(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise CorruptFile("index file ends mid-record")
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str) -> tuple:
        fmt = "<" + fmt
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))

    def text(self) -> str:
        (size,) = self.unpack("I")
        return self.raw(size).decode("utf-8")


def _live_only(index: SearchIndex) -> SearchIndex:
    """Return the index itself, or a rebuilt copy when tombstones exist."""
    if all(index.hnsw.alive):
        return index
    fresh = SearchIndex(index.embedder, index.config)
    for ordinal in range(len(index.hnsw)):
        if index.hnsw.alive[ordinal]:
            fresh.upsert_documents([index.docs[index.hnsw_key(ordinal)]])
    return fresh


def _serialize(index: SearchIndex) -> bytes:
    w = _Writer()
    w.raw(MAGIC)
    cfg = index.config
    w.pack("I", cfg.dimension)
    w.pack("dd", cfg.bm25_k1, cfg.bm25_b)
    w.pack("III", cfg.hnsw_m, cfg.hnsw_ef_construction, cfg.hnsw_ef_search)
    w.pack("q", cfg.seed)
    emb = index.embedder.config
    w.text(emb.backend)
    w.text(emb.model_id)
    w.pack("q", emb.seed)
    w.text(emb.cache_path or "")

    graph = index.hnsw
    ordinal_of: dict[str, int] = {}
    w.pack("I", len(index.docs))
    for ordinal in range(len(graph)):
        doc = index.docs[index.hnsw_key(ordinal)]
        ordinal_of[doc.id] = ordinal
        w.text(doc.id)
        w.text(doc.title)
        w.pack("B", _CATEGORIES.index(doc.category))
        w.text(doc.content)
        w.raw(np.asarray(doc.content_vector, dtype="<f4").tobytes())

    w.pack("I", len(index.postings))
    for term in sorted(index.postings):
        posting = index.postings[term]
        w.text(term)
        w.pack("I", len(posting))
        for doc_id, tf in posting:
            w.pack("II", ordinal_of[doc_id], tf)

    w.pack("i", -1 if graph.entry_point is None else graph.entry_point)
    w.pack("i", graph.max_level)
    for node in range(len(graph)):
        w.pack("B", graph.levels[node])
        for layer in graph.neighbors[node]:
            w.pack("H", len(layer))
            for other in layer:
                w.pack("I", other)
    return bytes(w.buf)


def save_index(index: SearchIndex, path: str | Path) -> None:
    """Write the index to one binary file, atomically."""
    payload = _serialize(_live_only(index))
    checksum = struct.pack("<I", zlib.crc32(payload))
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(payload + checksum)
    tmp.replace(target)


def load_index(path: str | Path, embedder: Embedder | None = None) -> SearchIndex:
    """Reload a saved index; reconstructs the embedder unless one is supplied."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4:
        raise CorruptFile("file too short to be an index")
    if data[: len(MAGIC_TAG)] != MAGIC_TAG:
        raise CorruptFile("not an index file (bad magic)")
    if data[len(MAGIC_TAG) : len(MAGIC)] != FORMAT_VERSION:
        found = data[len(MAGIC_TAG) : len(MAGIC)].decode("ascii", "replace")
        raise FormatVersionMismatch(
            f"index format version {found!r}, this build reads {FORMAT_VERSION.decode()!r}"
        )
    payload, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(payload) != stored:
        raise CorruptFile("checksum mismatch")
    try:
        return _parse(_Reader(payload), embedder)
    except CorruptFile:
        raise
    except (struct.error, UnicodeDecodeError, ValueError, IndexError, KeyError) as exc:
        raise CorruptFile(f"malformed index payload: {exc}") from exc


def _parse(r: _Reader, embedder: Embedder | None) -> SearchIndex:
    r.raw(len(MAGIC))
    (dimension,) = r.unpack("I")
    k1, b = r.unpack("dd")
    m, efc, efs = r.unpack("III")
    (seed,) = r.unpack("q")
    config = IndexConfig(
        dimension=dimension,
        bm25_k1=k1,
        bm25_b=b,
        hnsw_m=m,
        hnsw_ef_construction=efc,
        hnsw_ef_search=efs,
        seed=seed,
    )
    backend = r.text()
    model_id = r.text()
    (emb_seed,) = r.unpack("q")
    cache_path = r.text()
    if embedder is None:
        embedder = make_embedder(
            EmbedderConfig(
                backend=backend,
                model_id=model_id,
                dimension=dimension,
                cache_path=cache_path or None,
                seed=emb_seed,
            )
        )
    elif embedder.dimension != dimension:
        raise DimensionMismatch(
            f"supplied embedder dimension {embedder.dimension}, file has {dimension}"
        )
    index = SearchIndex(embedder, config)

    (ndocs,) = r.unpack("I")
    vectors = np.zeros((ndocs, dimension), dtype=np.float32)
    for ordinal in range(ndocs):
        doc_id = r.text()
        title = r.text()
        (cat,) = r.unpack("B")
        content = r.text()
        vector = np.frombuffer(r.raw(dimension * 4), dtype="<f4").copy()
        vectors[ordinal] = vector
        index.docs[doc_id] = DocumentRecord(
            id=doc_id,
            title=title,
            category=_CATEGORIES[cat],
            content=content,
            content_vector=vector,
        )
        index.doc_lengths[doc_id] = 0
        index.attach_ordinal(doc_id, ordinal)
    if len(index.docs) != ndocs:
        raise CorruptFile("duplicate document ids in index file")

    (nterms,) = r.unpack("I")
    id_list = [index.hnsw_key(o) for o in range(ndocs)]
    for _ in range(nterms):
        term = r.text()
        (nposts,) = r.unpack("I")
        posting = []
        for _ in range(nposts):
            ordinal, tf = r.unpack("II")
            doc_id = id_list[ordinal]
            posting.append((doc_id, tf))
            index.doc_lengths[doc_id] += tf
        index.postings[term] = posting

    (entry,) = r.unpack("i")
    (max_level,) = r.unpack("i")
    levels: list[int] = []
    neighbors: list[list[list[int]]] = []
    for _ in range(ndocs):
        (level,) = r.unpack("B")
        levels.append(level)
        node_layers = []
        for _ in range(level + 1):
            (count,) = r.unpack("H")
            node_layers.append([r.unpack("I")[0] for _ in range(count)])
        neighbors.append(node_layers)
    index.hnsw.restore(
        vectors=vectors,
        levels=levels,
        neighbors=neighbors,
        entry_point=None if entry < 0 else entry,
        max_level=max_level,
    )
    if r.pos != len(r.data):
        raise CorruptFile("trailing bytes after index payload")
    return index
