"""Exact nearest-neighbour search over embedding vectors.

Search is exhaustive cosine similarity over the whole collection (no
approximate structures), which keeps results reproducible to the bit given
identical inputs. Vectors are stored as float32, matching the on-disk blob
format, and similarity is computed in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ragmeta.corpus import Chunk, MetadataFilter, ScoredChunk


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clipped into [-1, 1]."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("degenerate vector: cosine similarity is undefined at zero norm")
    return max(-1.0, min(1.0, float(a @ b) / (norm_a * norm_b)))


@dataclass(frozen=True)
class VectorRecord:
    chunk_id: str
    vector: np.ndarray = field(repr=False)
    norm: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.vector, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"vector for {self.chunk_id!r} must be a non-empty 1-d array")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValueError(f"vector for {self.chunk_id!r} is zero or non-finite")
        object.__setattr__(self, "vector", arr)
        object.__setattr__(self, "norm", norm)


class VectorIndex:
    """Flat float32 vector store with exhaustive top-k cosine search."""

    def __init__(self, chunks: Mapping[str, Chunk] | None = None) -> None:
        # Chunk objects are only needed to evaluate metadata filters; a
        # filter-free index can run without them.
        self._chunk_lookup = chunks
        self._records: dict[str, VectorRecord] = {}
        self._dim: int | None = None
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._ids: list[str] = []

    def __len__(self) -> int:
        return len(self._records)

    @property
    def dim(self) -> int | None:
        return self._dim

    def add(self, record: VectorRecord) -> None:
        if record.chunk_id in self._records:
            raise ValueError(f"duplicate chunk_id {record.chunk_id!r}")
        if self._dim is None:
            self._dim = int(record.vector.size)
        elif record.vector.size != self._dim:
            raise ValueError(
                f"vector for {record.chunk_id!r} has dim {record.vector.size}, index has {self._dim}"
            )
        self._records[record.chunk_id] = record
        self._matrix = None  # invalidate cache

    def _ensure_matrix(self) -> None:
        if self._matrix is None:
            self._ids = list(self._records)
            self._matrix = np.stack([self._records[cid].vector for cid in self._ids])
            self._norms = np.array([self._records[cid].norm for cid in self._ids])

    def _chunk_for(self, chunk_id: str) -> Chunk:
        if self._chunk_lookup is None or chunk_id not in self._chunk_lookup:
            raise KeyError(f"no chunk object available for {chunk_id!r}; cannot filter")
        return self._chunk_lookup[chunk_id]

    def search(
        self,
        query_vector: np.ndarray,
        k: int,
        filter_: MetadataFilter | None = None,
    ) -> list[ScoredChunk]:
        """Exhaustive top-k by cosine similarity, ties broken by chunk id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._records:
            return []
        q = np.asarray(query_vector, dtype=np.float64).ravel()
        if q.size != self._dim:
            raise ValueError(f"query dim {q.size} does not match index dim {self._dim}")
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            raise ValueError("degenerate vector: cosine similarity is undefined at zero norm")
        self._ensure_matrix()
        assert self._matrix is not None and self._norms is not None
        sims = (self._matrix @ q) / (self._norms * q_norm)
        np.clip(sims, -1.0, 1.0, out=sims)
        scored = (
            (float(sims[i]), cid)
            for i, cid in enumerate(self._ids)
            if filter_ is None or filter_.matches(self._chunk_for(cid))
        )
        ranked = sorted(scored, key=lambda t: (-t[0], t[1]))
        return [
            ScoredChunk(chunk_id=cid, rank=i + 1, dense_score=s)
            for i, (s, cid) in enumerate(ranked[:k])
        ]
