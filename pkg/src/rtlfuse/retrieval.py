"""Exact cosine top-k retrieval over fused sub-circuit embeddings.

The store is a full scan (desk-scale); persistence is a JSON manifest plus a
packed float32 embedding blob. Embeddings are stored unnormalized and cosine
similarity is computed at query time.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateId, EmptyStore, IoError, MetricMissing
from .metrics import QualityMetrics


@dataclass
class StoreEntry:
    id: str
    embedding: np.ndarray
    metrics: QualityMetrics
    design: str = ""
    register: str = ""

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError(f"entry {self.id}: embedding has non-finite values")


class VectorStore:
    """Many concurrent readers; writers serialize on an internal lock and
    queries run against an immutable snapshot of the entry list."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._entries: list[StoreEntry] = []
        self._ids: set[str] = set()
        self._matrix: np.ndarray | None = None
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, entry: StoreEntry) -> None:
        with self._lock:
            if entry.id in self._ids:
                raise DuplicateId(entry.id)
            if self.dim is None:
                self.dim = entry.embedding.shape[0]
            elif entry.embedding.shape[0] != self.dim:
                raise ValueError(
                    f"embedding dim {entry.embedding.shape[0]} != store dim {self.dim}")
            # copy-on-write so in-flight queries keep their snapshot
            self._entries = self._entries + [entry]
            self._ids.add(entry.id)
            self._matrix = None

    def _snapshot(self) -> tuple[list[StoreEntry], np.ndarray]:
        with self._lock:
            entries = self._entries
            if self._matrix is None and entries:
                self._matrix = np.stack([e.embedding for e in entries])
            return entries, self._matrix

    def query_topk(self, query, k: int) -> list[tuple[StoreEntry, float]]:
        """Exact top-k by cosine similarity, descending; ties break by id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        entries, matrix = self._snapshot()
        if not entries:
            raise EmptyStore("query against an empty store")
        q = np.asarray(query, dtype=np.float64)
        qn = np.linalg.norm(q)
        norms = np.linalg.norm(matrix, axis=1)
        denom = norms * qn
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0.0, (matrix @ q) / denom, 0.0)
        order = sorted(range(len(entries)),
                       key=lambda i: (-sims[i], entries[i].id))
        return [(entries[i], float(sims[i])) for i in order[:min(k, len(entries))]]

    def zero_shot_predict(self, query, metric: str, k: int = 1) -> float:
        """Top-1 neighbor's metric verbatim; k > 1 averages the top-k values."""
        hits = self.query_topk(query, k)
        values = []
        for entry, _sim in hits:
            v = entry.metrics.get(metric)
            if v is None:
                raise MetricMissing(metric, entry.id)
            values.append(float(v))
        return values[0] if k == 1 else float(np.mean(values))

    # -- persistence ---------------------------------------------------------

    def save(self, path_prefix: str) -> None:
        with self._lock:
            entries = list(self._entries)
            blob = bytearray()
            meta = []
            for e in entries:
                arr = np.ascontiguousarray(e.embedding, dtype=np.float32)
                meta.append({
                    "id": e.id,
                    "design": e.design,
                    "register": e.register,
                    "metrics": e.metrics.to_dict(),
                    "offset": len(blob),
                })
                blob.extend(arr.tobytes())
            manifest = {
                "dim": self.dim,
                "count": len(entries),
                "entries": meta,
                "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
            }
        with open(f"{path_prefix}.bin", "wb") as fh:
            fh.write(bytes(blob))
        with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path_prefix: str) -> "VectorStore":
        try:
            with open(f"{path_prefix}.json", "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
            with open(f"{path_prefix}.bin", "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise IoError(str(exc)) from exc
        if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
            raise IoError(f"store blob does not match manifest at {path_prefix}")
        store = cls(dim=manifest["dim"])
        dim = manifest["dim"]
        for m in manifest["entries"]:
            emb = np.frombuffer(blob, dtype=np.float32, count=dim,
                                offset=m["offset"]).astype(np.float64)
            store.add(StoreEntry(m["id"], emb,
                                 QualityMetrics.from_dict(m["metrics"]) or QualityMetrics(),
                                 m.get("design", ""), m.get("register", "")))
        return store


def index_add(store: VectorStore, entry: StoreEntry) -> None:
    store.add(entry)


def query_topk(store: VectorStore, query, k: int) -> list[tuple[StoreEntry, float]]:
    return store.query_topk(query, k)


def zero_shot_predict(store: VectorStore, query, metric: str, k: int = 1) -> float:
    return store.zero_shot_predict(query, metric, k)
