"""Influence-function approximation of per-document differential bias.

Freezing context vectors and biases makes the loss Hessian block diagonal:
each word vector solves an independent D x D system, so the effect of any
co-occurrence perturbation on any word vector is one cached factorization
plus a sparse gradient difference.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from biastrace.cooc import ZERO_EPS, CoocDelta, CoocMatrix, combine_deltas, doc_cooc_rows
from biastrace.corpus import Corpus, Vocabulary
from biastrace.glove import GloveModel, Hyperparams, weight_f
from biastrace.metrics import DegenerateWeatError, ResolvedWeat, WeatSpec, weat_effect_size


class InfluenceError(Exception):
    pass


@dataclass
class WordSystem:
    """Per-word D x D Hessian block with a cached Cholesky factorization."""

    word_id: int
    hessian: np.ndarray
    factorization: tuple
    damping_lambda: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factorization, rhs)


@dataclass
class DiffBiasRecord:
    doc_id: int
    delta_b: float
    per_seed: tuple[float, ...] = ()
    std: float = float("nan")
    weat_words_touched: int = 0
    error: str | None = None


def pointwise_grad(
    jj: np.ndarray,
    xx: np.ndarray,
    w_i: np.ndarray,
    u: np.ndarray,
    b_i: float,
    c: np.ndarray,
    hyper: Hyperparams,
) -> np.ndarray:
    """Gradient of the per-word loss at row (jj, xx): sum 2 f(x) (residual) u_j.

    Uses the V-normalized form; the V factors of the raw point-wise loss
    cancel against the 1/V of the influence update.
    """
    if len(jj) == 0:
        return np.zeros_like(w_i)
    j = jj.astype(np.int64)
    uj = u[j]
    r = uj @ w_i + b_i + c[j] - np.log(xx)
    d = 2.0 * weight_f(xx, hyper) * r
    return d @ uj


def word_hessian(
    jj: np.ndarray,
    xx: np.ndarray,
    u: np.ndarray,
    hyper: Hyperparams,
    word_id: int,
    damping: float = 1e-8,
) -> WordSystem:
    """H_i = sum_j 2 f(X_ij) u_j u_j^T, factorized with diagonal damping."""
    if damping < 0:
        raise ValueError("damping must be >= 0")
    D = u.shape[1]
    if len(jj) == 0:
        H = np.zeros((D, D))
    else:
        j = jj.astype(np.int64)
        uj = u[j]
        H = uj.T @ (2.0 * weight_f(xx, hyper)[:, None] * uj)
        H = 0.5 * (H + H.T)  # exact symmetry for the factorization
    lam = max(damping, 1e-8 * float(np.trace(H)) / D)
    if lam == 0.0:
        lam = 1e-12
    for _ in range(4):
        try:
            fact = cho_factor(H + lam * np.eye(D), lower=True)
            return WordSystem(word_id, H, fact, lam)
        except LinAlgError:
            lam *= 10.0
    raise InfluenceError(f"Hessian for word {word_id} not positive definite after damping")


def approx_perturbed_vector(
    system: WordSystem,
    w_star: np.ndarray,
    grad_before: np.ndarray,
    grad_after: np.ndarray,
) -> np.ndarray:
    """Influence update: w~ = w* - (H + lambda I)^-1 (grad_after - grad_before)."""
    diff = grad_after - grad_before
    if not diff.any():
        return w_star.copy()
    return w_star - system.solve(diff)


def _grad_diff_for_row(
    i: int,
    delta_jj: np.ndarray,
    delta_ww: np.ndarray,
    X: CoocMatrix,
    model: GloveModel,
) -> np.ndarray:
    """grad(X~_i) - grad(X_i), summed over the entries the delta touches.

    Entries driven to (near-)zero vanish entirely from the perturbed
    gradient, matching the loss convention that only stored co-occurrences
    contribute.
    """
    w_i = model.w[i]
    out = np.zeros(model.D)
    for j, dw in zip(delta_jj, delta_ww):
        j = int(j)
        x_old = X.get(i, j)
        if x_old <= 0.0:
            raise InfluenceError(
                f"removal delta touches zero co-occurrence ({i}, {j})"
            )
        u_j = model.u[j]
        r_old = float(w_i @ u_j + model.b[i] + model.c[j]) - np.log(x_old)
        term = -2.0 * float(weight_f(x_old, model.hyper)) * r_old * u_j
        x_new = x_old - float(dw)
        if x_new > ZERO_EPS:
            r_new = float(w_i @ u_j + model.b[i] + model.c[j]) - np.log(x_new)
            term += 2.0 * float(weight_f(x_new, model.hyper)) * r_new * u_j
        out += term
    return out


@dataclass
class ModelContext:
    """Everything reusable across documents for one baseline model."""

    model: GloveModel
    spec: ResolvedWeat
    systems: dict[int, WordSystem]
    base_bias: float


def prepare_model(
    X: CoocMatrix,
    model: GloveModel,
    spec: ResolvedWeat,
    damping: float = 1e-8,
    std: str = "sample",
) -> ModelContext:
    """Build and cache the per-WEAT-word Hessian systems for one model."""
    model.require_context()
    systems = {}
    for i in set(spec.all_ids()):
        jj, xx = X.row(i)
        systems[i] = word_hessian(jj, xx, model.u, model.hyper, i, damping)
    base = weat_effect_size(model.w, spec, std=std)
    return ModelContext(model, spec, systems, base)


def delta_bias_for_model(
    ctx: ModelContext, X: CoocMatrix, delta: CoocDelta, std: str = "sample"
) -> tuple[float, int]:
    """Approximated B(w*) - B(w~) for one removal delta under one model.

    Returns the differential bias and the number of WEAT word vectors that
    moved.
    """
    weat_ids = set(ctx.spec.all_ids())
    overrides: dict[int, np.ndarray] = {}
    for i in delta.row_ids():
        i = int(i)
        if i not in weat_ids:
            continue
        jj, ww = delta.row(i)
        diff = _grad_diff_for_row(i, jj, ww, X, ctx.model)
        if diff.any():
            overrides[i] = ctx.model.w[i] - ctx.systems[i].solve(diff)
    if not overrides:
        return 0.0, 0
    perturbed = weat_effect_size(ctx.model.w, ctx.spec, std=std, overrides=overrides)
    return ctx.base_bias - perturbed, len(overrides)


def differential_bias_scan(
    corpus: Corpus,
    vocab: Vocabulary,
    X: CoocMatrix,
    models: list[GloveModel],
    spec: WeatSpec,
    window: int = 8,
    damping: float = 1e-8,
    std: str = "sample",
) -> list[DiffBiasRecord]:
    """Approximate the differential bias of removing each document, for each
    baseline model, and average across models."""
    resolved = spec.resolve(vocab)
    weat_ids = set(resolved.all_ids())
    contexts = [prepare_model(X, m, resolved, damping, std) for m in models]
    records = []
    for doc in corpus:
        delta = doc_cooc_rows(doc, vocab, window, row_words=weat_ids)
        if delta.nnz == 0:
            records.append(DiffBiasRecord(doc.doc_id, 0.0, (0.0,) * len(models), 0.0, 0))
            continue
        per_seed = []
        touched = 0
        err = None
        for ctx in contexts:
            try:
                d, t = delta_bias_for_model(ctx, X, delta, std)
            except DegenerateWeatError as e:
                err = str(e)
                break
            per_seed.append(d)
            touched = max(touched, t)
        if err is not None:
            records.append(DiffBiasRecord(doc.doc_id, float("nan"), (), float("nan"), touched, err))
        else:
            arr = np.array(per_seed)
            std_v = float(arr.std(ddof=1)) if len(arr) > 1 else float("nan")
            records.append(
                DiffBiasRecord(doc.doc_id, float(arr.mean()), tuple(per_seed), std_v, touched)
            )
    return records


def differential_bias_of_set(
    doc_ids: set[int],
    corpus: Corpus,
    vocab: Vocabulary,
    X: CoocMatrix,
    models: list[GloveModel],
    spec: WeatSpec,
    window: int = 8,
    damping: float = 1e-8,
    std: str = "sample",
) -> tuple[float, float, tuple[float, ...]]:
    """Differential bias of removing a document set together.

    Gradient differences are accumulated across the whole set before the
    single solve per WEAT word; this is not the sum of per-document deltas.
    Returns (mean, std, per-model values).
    """
    n = len(corpus)
    for d in doc_ids:
        if not 0 <= d < n:
            raise InfluenceError(f"doc id {d} out of range [0, {n})")
    if len(doc_ids) > 0.05 * n:
        warnings.warn(
            f"perturbation set covers {len(doc_ids)}/{n} documents; the "
            "small-perturbation assumption may not hold",
            stacklevel=2,
        )
    resolved = spec.resolve(vocab)
    weat_ids = set(resolved.all_ids())
    deltas = [doc_cooc_rows(corpus[d], vocab, window, row_words=weat_ids) for d in sorted(doc_ids)]
    delta = combine_deltas(deltas, len(vocab))
    per_model = []
    for m in models:
        ctx = prepare_model(X, m, resolved, damping, std)
        d, _ = delta_bias_for_model(ctx, X, delta, std)
        per_model.append(d)
    arr = np.array(per_model) if per_model else np.zeros(0)
    mean = float(arr.mean()) if len(arr) else 0.0
    std_v = float(arr.std(ddof=1)) if len(arr) > 1 else float("nan")
    return mean, std_v, tuple(per_model)


SCAN_FIELDS = ["doc_id", "delta_b_mean", "delta_b_std", "n_seeds", "weat_words_touched", "method"]


def save_scan_csv(records: list[DiffBiasRecord], path: str | Path, method: str = "influence") -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f)
        wr.writerow(SCAN_FIELDS)
        for r in records:
            wr.writerow(
                [r.doc_id, repr(r.delta_b), repr(r.std), len(r.per_seed), r.weat_words_touched, method]
            )


def load_scan_csv(path: str | Path) -> list[DiffBiasRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(
                DiffBiasRecord(
                    doc_id=int(row["doc_id"]),
                    delta_b=float(row["delta_b_mean"]),
                    std=float(row["delta_b_std"]),
                    per_seed=(float(row["delta_b_mean"]),) * int(row["n_seeds"]),
                    weat_words_touched=int(row["weat_words_touched"]),
                )
            )
    return records


def save_histogram_csv(
    records: list[DiffBiasRecord], path: str | Path, bins: int = 50
) -> None:
    """Bin the per-document deltas for a histogram-style summary."""
    vals = np.array([r.delta_b for r in records if np.isfinite(r.delta_b)])
    counts, edges = np.histogram(vals, bins=bins)
    with open(path, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f)
        wr.writerow(["bin_left", "bin_right", "count"])
        for k in range(len(counts)):
            wr.writerow([repr(edges[k]), repr(edges[k + 1]), int(counts[k])])
