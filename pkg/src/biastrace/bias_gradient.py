"""Sensitivity of the WEAT effect size to each nonzero co-occurrence.

Chains the effect-size gradient through the influence approximation of the
word vectors, yielding sparse gradient rows for the WEAT words only.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from biastrace.cooc import CoocDelta, CoocMatrix
from biastrace.corpus import Vocabulary
from biastrace.glove import GloveModel, weight_f, weight_f_prime
from biastrace.influence import word_hessian
from biastrace.metrics import WeatSpec, weat_gradient


class BiasGradientError(Exception):
    pass


def model_checksum(model: GloveModel) -> str:
    h = hashlib.sha256()
    h.update(model.w.tobytes())
    return h.hexdigest()[:16]


@dataclass
class BiasGradient:
    """Sparse rows of dB/dX_ij for each WEAT word i, defined on stored entries."""

    rows: dict[int, tuple[np.ndarray, np.ndarray]]  # i -> (jj, values)
    model_ref: str

    def value(self, i: int, j: int) -> float:
        if i not in self.rows:
            return 0.0
        jj, vals = self.rows[i]
        k = int(np.searchsorted(jj, j))
        if k < len(jj) and jj[k] == j:
            return float(vals[k])
        raise BiasGradientError(
            f"bias gradient undefined at zero co-occurrence ({i}, {j})"
        )


def bias_gradient(
    X: CoocMatrix,
    model: GloveModel,
    spec: WeatSpec,
    vocab: Vocabulary,
    damping: float = 1e-8,
    std: str = "sample",
) -> BiasGradient:
    """dB/dX_ij over the stored entries of every WEAT-word row.

    For row i with residual r_ij = w_i.u_j + b_i + c_j - log X_ij:
        dB/dX_ij = 2 [ f(X_ij)/X_ij - f'(X_ij) r_ij ] (v_i . u_j)
    where v_i solves (H_i + lambda I) v_i = grad_{w_i} B.
    """
    model.require_context()
    resolved = spec.resolve(vocab)
    wgrads = weat_gradient(model.w, resolved, std=std)
    rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for i in sorted(set(resolved.all_ids())):
        jj, xx = X.row(i)
        if len(jj) == 0:
            rows[i] = (jj.astype(np.int64), np.zeros(0))
            continue
        system = word_hessian(jj, xx, model.u, model.hyper, i, damping)
        v_i = system.solve(wgrads[i])
        j = jj.astype(np.int64)
        uj = model.u[j]
        r = uj @ model.w[i] + model.b[i] + model.c[j] - np.log(xx)
        coeff = 2.0 * (weight_f(xx, model.hyper) / xx - weight_f_prime(xx, model.hyper) * r)
        rows[i] = (j, coeff * (uj @ v_i))
    return BiasGradient(rows, model_checksum(model))


def taylor_delta(grad: BiasGradient, delta: CoocDelta) -> float:
    """First-order prediction of B(w(X)) - B(w(X - delta)).

    Linear in the delta; rows outside the WEAT word set contribute nothing.
    Touching a zero co-occurrence in a WEAT row is an error (the gradient is
    undefined there).
    """
    total = 0.0
    for i, j, w in zip(delta.ii, delta.jj, delta.ww):
        i = int(i)
        if i in grad.rows:
            total += grad.value(i, int(j)) * float(w)
    return total


def save_gradient_csv(grad: BiasGradient, path: str | Path) -> None:
    """Dump `i,j,dB_dXij` sorted by magnitude, largest first."""
    triples = []
    for i, (jj, vals) in grad.rows.items():
        for j, v in zip(jj, vals):
            triples.append((int(i), int(j), float(v)))
    triples.sort(key=lambda t: -abs(t[2]))
    with open(path, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f)
        wr.writerow(["i", "j", "dB_dXij"])
        for i, j, v in triples:
            wr.writerow([i, j, repr(v)])
