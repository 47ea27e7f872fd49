"""Sparse symmetric co-occurrence matrices and per-document deltas.

Harmonic 1/distance weights are held internally as integer multiples of
1/720720 (the LCM of 1..16), so building, decomposing, removing, and
re-adding document contributions are exact integer operations: additivity
and removal round-trips hold bit-for-bit in any order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from biastrace.corpus import Corpus, Document, Vocabulary

SCALE = 720720  # lcm(1..16); 1/d is exactly SCALE//d units for window <= 16
MAX_WINDOW = 16
ZERO_EPS = 1e-9  # tolerance for float-space consumers; structural zeros are exact

_HEADER = struct.Struct("<4sIII")  # magic, version, V, record count
_RECORD = struct.Struct("<IId")
_MAGIC = b"COOC"
_VERSION = 1


class CoocError(Exception):
    pass


def _units_from_float(w: float) -> int:
    u = round(w * SCALE)
    if abs(u - w * SCALE) > 1e-6 * max(1.0, abs(w * SCALE)):
        raise CoocError(f"weight {w} is not a multiple of 1/{SCALE}")
    return int(u)


def _aggregate(keys: np.ndarray, units: np.ndarray, V: int):
    """Sum integer units per key; returns sorted (ii, jj, units) arrays."""
    if len(keys) == 0:
        return (
            np.empty(0, dtype=np.uint32),
            np.empty(0, dtype=np.uint32),
            np.empty(0, dtype=np.int64),
        )
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    units = units[order]
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    sums = np.add.reduceat(units, starts)
    uk = keys[starts]
    keep = sums != 0
    uk, sums = uk[keep], sums[keep]
    if np.any(sums < 0):
        bad = uk[sums < 0][0]
        raise CoocError(f"negative weight at ({bad // V}, {bad % V}) after subtraction")
    return (uk // V).astype(np.uint32), (uk % V).astype(np.uint32), sums


@dataclass(frozen=True)
class CoocMatrix:
    """Sparse V x V weighted co-occurrence counts, sorted by (i, j).

    Stores both (i, j) and (j, i); symmetry is a construction invariant.
    ``units`` are exact integer weights; ``ww`` the harmonic float weights.
    """

    V: int
    ii: np.ndarray  # uint32, row ids
    jj: np.ndarray  # uint32, column ids
    units: np.ndarray  # int64, weight in multiples of 1/SCALE
    ww: np.ndarray = field(init=False)  # float64 harmonic weights

    def __post_init__(self):
        object.__setattr__(self, "ww", self.units / SCALE)

    @classmethod
    def from_dict(cls, V: int, entries: dict[tuple[int, int], float]) -> "CoocMatrix":
        items = sorted((k, _units_from_float(w)) for k, w in entries.items() if w != 0)
        ii = np.fromiter((k[0] for k, _ in items), dtype=np.uint32, count=len(items))
        jj = np.fromiter((k[1] for k, _ in items), dtype=np.uint32, count=len(items))
        un = np.fromiter((u for _, u in items), dtype=np.int64, count=len(items))
        return cls(V, ii, jj, un)

    @property
    def nnz(self) -> int:
        return len(self.units)

    @property
    def total_weight(self) -> float:
        return float(self.units.sum()) / SCALE

    def _row_bounds(self, i: int) -> tuple[int, int]:
        lo = int(np.searchsorted(self.ii, i, side="left"))
        hi = int(np.searchsorted(self.ii, i, side="right"))
        return lo, hi

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column ids and harmonic weights of row i (views, do not mutate)."""
        lo, hi = self._row_bounds(i)
        return self.jj[lo:hi], self.ww[lo:hi]

    def row_units(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._row_bounds(i)
        return self.jj[lo:hi], self.units[lo:hi]

    def get(self, i: int, j: int) -> float:
        lo, hi = self._row_bounds(i)
        k = lo + int(np.searchsorted(self.jj[lo:hi], j))
        if k < hi and self.jj[k] == j:
            return float(self.ww[k])
        return 0.0

    def to_dict(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(w) for i, j, w in zip(self.ii, self.jj, self.ww)}

    def keys(self) -> np.ndarray:
        return self.ii.astype(np.int64) * self.V + self.jj.astype(np.int64)

    def add(self, other: "CoocMatrix") -> "CoocMatrix":
        if self.V != other.V:
            raise CoocError("matrix dimensions differ")
        keys = np.concatenate([self.keys(), other.keys()])
        units = np.concatenate([self.units, other.units])
        return CoocMatrix(self.V, *_aggregate(keys, units, self.V))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CoocMatrix)
            and self.V == other.V
            and np.array_equal(self.ii, other.ii)
            and np.array_equal(self.jj, other.jj)
            and np.array_equal(self.units, other.units)
        )


@dataclass(frozen=True)
class CoocDelta:
    """Sparse co-occurrence perturbation (a document's contribution, a sum of
    documents, or a synthetic float-weighted perturbation)."""

    V: int
    ii: np.ndarray
    jj: np.ndarray
    ww: np.ndarray  # float64 harmonic weights
    units: np.ndarray | None = None  # int64 when the delta is exactly representable
    provenance: str = "synthetic"

    @classmethod
    def from_units(cls, V, ii, jj, units, provenance="synthetic") -> "CoocDelta":
        return cls(V, ii, jj, units / SCALE, units, provenance)

    @classmethod
    def from_dict(
        cls, V: int, entries: dict[tuple[int, int], float], provenance: str = "synthetic"
    ) -> "CoocDelta":
        items = sorted(entries.items())
        ii = np.fromiter((k[0] for k, _ in items), dtype=np.uint32, count=len(items))
        jj = np.fromiter((k[1] for k, _ in items), dtype=np.uint32, count=len(items))
        ww = np.fromiter((v for _, v in items), dtype=np.float64, count=len(items))
        try:
            units = np.array([_units_from_float(w) for w in ww], dtype=np.int64)
        except CoocError:
            units = None
        return cls(V, ii, jj, ww, units, provenance)

    @property
    def nnz(self) -> int:
        return len(self.ww)

    @property
    def total_weight(self) -> float:
        if self.units is not None:
            return float(self.units.sum()) / SCALE
        return float(self.ww.sum())

    def to_dict(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(w) for i, j, w in zip(self.ii, self.jj, self.ww)}

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo = int(np.searchsorted(self.ii, i, side="left"))
        hi = int(np.searchsorted(self.ii, i, side="right"))
        return self.jj[lo:hi], self.ww[lo:hi]

    def row_ids(self) -> np.ndarray:
        return np.unique(self.ii)

    def keys(self) -> np.ndarray:
        return self.ii.astype(np.int64) * self.V + self.jj.astype(np.int64)

    def scaled(self, t: float) -> "CoocDelta":
        """Synthetic scaling for perturbation-size studies; drops exactness."""
        return CoocDelta(self.V, self.ii, self.jj, self.ww * t, None, self.provenance)


def _doc_pairs(ids: np.ndarray, window: int, V: int):
    """Unaggregated (key, unit) pairs of one document.

    OOV tokens (id -1) contribute nothing but occupy positions, so distances
    count them.
    """
    keys = []
    units = []
    n = len(ids)
    for d in range(1, min(window, n - 1) + 1):
        a = ids[:-d]
        b = ids[d:]
        m = (a >= 0) & (b >= 0)
        if not m.any():
            continue
        am, bm = a[m], b[m]
        u = np.full(len(am), SCALE // d, dtype=np.int64)
        keys.append(am * V + bm)
        keys.append(bm * V + am)
        units.append(u)
        units.append(u)
    if not keys:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(keys), np.concatenate(units)


def _doc_ids(doc: Document, vocab: Vocabulary) -> np.ndarray:
    idx = vocab.index
    return np.fromiter(
        (idx.get(t, -1) for t in doc.tokens), dtype=np.int64, count=len(doc.tokens)
    )


def extract_cooc(corpus: Corpus, vocab: Vocabulary, window: int = 8) -> CoocMatrix:
    """Symmetric-window co-occurrence counts with 1/distance weighting.

    Pairs never cross document boundaries.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > MAX_WINDOW:
        raise ValueError(f"window > {MAX_WINDOW} not supported by the exact-weight representation")
    V = len(vocab)
    keys, units = [], []
    for doc in corpus:
        k, u = _doc_pairs(_doc_ids(doc, vocab), window, V)
        keys.append(k)
        units.append(u)
    keys = np.concatenate(keys) if keys else np.empty(0, dtype=np.int64)
    units = np.concatenate(units) if units else np.empty(0, dtype=np.int64)
    return CoocMatrix(V, *_aggregate(keys, units, V))


def doc_cooc_rows(
    doc: Document,
    vocab: Vocabulary,
    window: int,
    row_words: set[int] | None = None,
) -> CoocDelta:
    """One document's co-occurrence matrix, restricted to ``row_words`` rows.

    Restriction keeps every entry whose row or column id lies in
    ``row_words``, so the delta stays symmetric; None keeps everything.
    """
    if window > MAX_WINDOW:
        raise ValueError(f"window > {MAX_WINDOW} not supported by the exact-weight representation")
    V = len(vocab)
    keys, units = _doc_pairs(_doc_ids(doc, vocab), window, V)
    ii, jj, un = _aggregate(keys, units, V)
    if row_words is not None:
        rw = np.fromiter(row_words, dtype=np.int64, count=len(row_words))
        m = np.isin(ii.astype(np.int64), rw) | np.isin(jj.astype(np.int64), rw)
        ii, jj, un = ii[m], jj[m], un[m]
    return CoocDelta.from_units(V, ii, jj, un, provenance=f"doc:{doc.doc_id}")


def combine_deltas(deltas: list[CoocDelta], V: int) -> CoocDelta:
    """Exact entrywise sum of unit-weighted deltas."""
    if not deltas:
        return CoocDelta.from_units(
            V, np.empty(0, np.uint32), np.empty(0, np.uint32), np.empty(0, np.int64), "empty"
        )
    for d in deltas:
        if d.units is None:
            raise CoocError("cannot exactly combine a synthetic float delta")
    keys = np.concatenate([d.keys() for d in deltas])
    units = np.concatenate([d.units for d in deltas])
    ii, jj, un = _aggregate(keys, units, V)
    return CoocDelta.from_units(V, ii, jj, un, "+".join(d.provenance for d in deltas))


def apply_removal(X: CoocMatrix, delta: CoocDelta) -> CoocMatrix:
    """X - delta, exactly; entries driven to zero disappear.

    A delta weight exceeding the stored weight is an error naming the entry.
    """
    if delta.units is None:
        raise CoocError("apply_removal requires an exactly representable delta")
    if delta.V != X.V:
        raise CoocError("dimension mismatch between matrix and delta")
    keys = np.concatenate([X.keys(), delta.keys()])
    units = np.concatenate([X.units, -delta.units])
    try:
        ii, jj, un = _aggregate(keys, units, X.V)
    except CoocError as e:
        raise CoocError(f"removal delta exceeds stored weight: {e}") from None
    return CoocMatrix(X.V, ii, jj, un)


def save_cooc(X: CoocMatrix, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, X.V, X.nnz))
        buf = np.empty(X.nnz, dtype=np.dtype([("i", "<u4"), ("j", "<u4"), ("w", "<f8")]))
        buf["i"], buf["j"], buf["w"] = X.ii, X.jj, X.ww
        f.write(buf.tobytes())


def load_cooc(path: str | Path) -> CoocMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CoocError(f"{path}: truncated header at byte {len(raw)}")
    magic, version, V, nrec = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CoocError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CoocError(f"{path}: unsupported version {version}")
    expect = _HEADER.size + nrec * _RECORD.size
    if len(raw) != expect:
        raise CoocError(
            f"{path}: expected {expect} bytes for {nrec} records, got {len(raw)} "
            f"(framing error at byte {min(len(raw), expect)})"
        )
    buf = np.frombuffer(raw, dtype=np.dtype([("i", "<u4"), ("j", "<u4"), ("w", "<f8")]),
                        count=nrec, offset=_HEADER.size)
    units = np.round(buf["w"] * SCALE).astype(np.int64)
    if not np.allclose(units / SCALE, buf["w"], rtol=1e-12, atol=0):
        raise CoocError(f"{path}: weights are not multiples of 1/{SCALE}")
    return CoocMatrix(V, buf["i"].astype(np.uint32), buf["j"].astype(np.uint32), units)
