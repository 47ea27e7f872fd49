"""Count-based PPMI baseline: representation, WEAT over PPMI rows, and a
per-document differential-bias scan in PPMI space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from biastrace.cooc import ZERO_EPS, CoocMatrix, doc_cooc_rows
from biastrace.corpus import Corpus, Vocabulary
from biastrace.influence import DiffBiasRecord
from biastrace.metrics import DegenerateWeatError, ResolvedWeat, WeatSpec


class PpmiError(Exception):
    pass


@dataclass
class PpmiMatrix:
    """Sparse PPMI entries plus the marginals of the underlying counts."""

    V: int
    ii: np.ndarray
    jj: np.ndarray
    pp: np.ndarray  # PPMI values (>= 0; explicit zeros allowed where X > 0)
    row_sums: np.ndarray
    col_sums: np.ndarray
    total: float

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo = int(np.searchsorted(self.ii, i, side="left"))
        hi = int(np.searchsorted(self.ii, i, side="right"))
        return self.jj[lo:hi], self.pp[lo:hi]

    def dense_row(self, i: int) -> np.ndarray:
        out = np.zeros(self.V)
        jj, pp = self.row(i)
        out[jj.astype(np.int64)] = pp
        return out


def build_ppmi(X: CoocMatrix, smooth_alpha: float | None = None) -> PpmiMatrix:
    """PPMI over the stored entries: max(0, log(X_ij N / (r_i c_j))).

    ``smooth_alpha`` enables context-distribution smoothing for sensitivity
    studies; the default is the plain estimator.
    """
    if X.nnz == 0:
        raise PpmiError("cannot build PPMI from an empty co-occurrence matrix")
    r = np.zeros(X.V)
    c = np.zeros(X.V)
    np.add.at(r, X.ii.astype(np.int64), X.ww)
    np.add.at(c, X.jj.astype(np.int64), X.ww)
    N = float(X.ww.sum())
    i = X.ii.astype(np.int64)
    j = X.jj.astype(np.int64)
    if smooth_alpha is None:
        pp = np.maximum(0.0, np.log(X.ww * N / (r[i] * c[j])))
    else:
        ca = np.power(c, smooth_alpha)
        pp = np.maximum(0.0, np.log((X.ww / N) / ((r[i] / N) * (ca[j] / ca.sum()))))
    return PpmiMatrix(X.V, X.ii, X.jj, pp, r, c, N)


def _effect_size_from_rows(vecs: dict[int, np.ndarray], spec: ResolvedWeat, std: str = "sample") -> float:
    norms = {}
    for i, v in vecs.items():
        n = float(np.linalg.norm(v))
        if n <= 0:
            raise PpmiError(f"zero-norm PPMI row for word {spec.word_of.get(i, i)!r}")
        norms[i] = n
    g = []
    for cid in spec.s_ids + spec.t_ids:
        ga = np.mean([vecs[cid] @ vecs[a] / (norms[cid] * norms[a]) for a in spec.a_ids])
        gb = np.mean([vecs[cid] @ vecs[b] / (norms[cid] * norms[b]) for b in spec.b_ids])
        g.append(ga - gb)
    g = np.asarray(g)
    m = len(spec.s_ids)
    sd = float(np.std(g, ddof=1 if std == "sample" else 0))
    if sd <= 1e-12:
        raise DegenerateWeatError("degenerate WEAT: all target associations equal")
    return float((np.mean(g[:m]) - np.mean(g[m:])) / sd)


def ppmi_weat(P: PpmiMatrix, spec: ResolvedWeat, std: str = "sample") -> float:
    """WEAT effect size with each word represented by its PPMI row."""
    vecs = {i: P.dense_row(i) for i in set(spec.all_ids())}
    return _effect_size_from_rows(vecs, spec, std)


def ppmi_diff_scan(
    corpus: Corpus,
    vocab: Vocabulary,
    X: CoocMatrix,
    spec: WeatSpec,
    window: int = 8,
    std: str = "sample",
) -> list[DiffBiasRecord]:
    """Per-document change in PPMI WEAT effect size under removal.

    Only WEAT-word rows are rebuilt, but the marginals (and hence every
    PPMI value in those rows) are perturbed exactly by the document's full
    co-occurrence delta.
    """
    resolved = spec.resolve(vocab)
    ids = sorted(set(resolved.all_ids()))
    pos = {i: k for k, i in enumerate(ids)}
    V = X.V

    r = np.zeros(V)
    c = np.zeros(V)
    np.add.at(r, X.ii.astype(np.int64), X.ww)
    np.add.at(c, X.jj.astype(np.int64), X.ww)
    N = float(X.ww.sum())
    XU = np.zeros((len(ids), V))
    for i in ids:
        jj, xx = X.row(i)
        XU[pos[i], jj.astype(np.int64)] = xx

    def effect_size(xu, rr, cc, nn):
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(xu) + np.log(nn) - np.log(rr[ids])[:, None] - np.log(cc)[None, :]
        P = np.where(xu > ZERO_EPS, np.maximum(0.0, logs), 0.0)
        vecs = {i: P[pos[i]] for i in ids}
        return _effect_size_from_rows(vecs, resolved, std)

    base = effect_size(XU, r, c, N)
    records = []
    for doc in corpus:
        delta = doc_cooc_rows(doc, vocab, window)
        if delta.nnz == 0:
            records.append(DiffBiasRecord(doc.doc_id, 0.0, (0.0,), 0.0, 0))
            continue
        di = delta.ii.astype(np.int64)
        dj = delta.jj.astype(np.int64)
        rr = r.copy()
        cc = c.copy()
        np.add.at(rr, di, -delta.ww)
        np.add.at(cc, dj, -delta.ww)
        rr[np.abs(rr) <= ZERO_EPS] = 0.0
        cc[np.abs(cc) <= ZERO_EPS] = 0.0
        nn = N - delta.total_weight
        touched = 0
        xu = XU
        mask = np.isin(di, ids)
        if mask.any():
            xu = XU.copy()
            rows = np.array([pos[i] for i in di[mask]])
            xu[rows, dj[mask]] -= delta.ww[mask]
            xu[xu <= ZERO_EPS] = 0.0
            touched = len(np.unique(rows))
        try:
            if nn <= ZERO_EPS:
                raise PpmiError("removal empties the co-occurrence matrix")
            b = effect_size(xu, rr, cc, nn)
            records.append(DiffBiasRecord(doc.doc_id, base - b, (base - b,), 0.0, touched))
        except (PpmiError, DegenerateWeatError) as e:
            records.append(
                DiffBiasRecord(doc.doc_id, float("nan"), (), float("nan"), touched, str(e))
            )
    return records
