"""GloVe training on a sparse co-occurrence matrix.

Minimizes sum_ij f(X_ij) (w_i.u_j + b_i + c_j - log X_ij)^2 over the stored
(nonzero) entries by per-entry adaptive-gradient descent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from numba import njit

from biastrace.cooc import CoocMatrix

_SIDECAR_MAGIC = b"GLVE"
_SIDECAR_VERSION = 1


class GloveError(Exception):
    pass


@dataclass(frozen=True)
class Hyperparams:
    D: int = 25
    alpha: float = 0.75
    x_max: float = 100.0
    epochs: int = 50
    learning_rate: float = 0.05
    seed: int = 0
    window: int = 8  # provenance only; co-occurrence already extracted

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.x_max <= 0:
            raise ValueError("x_max must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")

    def with_seed(self, seed: int) -> "Hyperparams":
        return Hyperparams(
            self.D, self.alpha, self.x_max, self.epochs,
            self.learning_rate, seed, self.window,
        )


@dataclass
class GloveModel:
    w: np.ndarray  # (V, D) word vectors
    u: np.ndarray | None  # (V, D) context vectors; None if sidecar not loaded
    b: np.ndarray | None  # (V,) word biases
    c: np.ndarray | None  # (V,) context biases
    hyper: Hyperparams
    vocab_hash: str = ""
    epoch_losses: tuple = field(default_factory=tuple)

    @property
    def V(self) -> int:
        return self.w.shape[0]

    @property
    def D(self) -> int:
        return self.w.shape[1]

    def require_context(self) -> None:
        if self.u is None or self.b is None or self.c is None:
            raise GloveError(
                "context parameters unavailable: load the sidecar file "
                "before running influence computations"
            )


def weight_f(x: float | np.ndarray, hyper: Hyperparams):
    """GloVe importance weighting: min((x / x_max)^alpha, 1); f(0) = 0."""
    return np.minimum(np.power(np.asarray(x, dtype=np.float64) / hyper.x_max, hyper.alpha), 1.0)


def weight_f_prime(x: float | np.ndarray, hyper: Hyperparams):
    """Derivative of weight_f; 0 in the clamped region x >= x_max."""
    x = np.asarray(x, dtype=np.float64)
    inner = (hyper.alpha / hyper.x_max) * np.power(x / hyper.x_max, hyper.alpha - 1.0)
    return np.where(x < hyper.x_max, inner, 0.0)


def _residuals(X: CoocMatrix, w, u, b, c) -> np.ndarray:
    ii = X.ii.astype(np.int64)
    jj = X.jj.astype(np.int64)
    return np.einsum("kd,kd->k", w[ii], u[jj]) + b[ii] + c[jj] - np.log(X.ww)


def loss(X: CoocMatrix, model: GloveModel) -> float:
    """Total GloVe loss over the stored entries of X."""
    if X.nnz == 0:
        return 0.0
    model.require_context()
    fx = weight_f(X.ww, model.hyper)
    r = _residuals(X, model.w, model.u, model.b, model.c)
    return float(np.sum(fx * r * r))


def loss_gradients(X: CoocMatrix, model: GloveModel):
    """Analytic gradient of the loss for each parameter block (w, u, b, c)."""
    model.require_context()
    w, u, b, c = model.w, model.u, model.b, model.c
    gw = np.zeros_like(w)
    gu = np.zeros_like(u)
    gb = np.zeros_like(b)
    gc = np.zeros_like(c)
    if X.nnz == 0:
        return gw, gu, gb, gc
    ii = X.ii.astype(np.int64)
    jj = X.jj.astype(np.int64)
    d = 2.0 * weight_f(X.ww, model.hyper) * _residuals(X, w, u, b, c)
    np.add.at(gw, ii, d[:, None] * u[jj])
    np.add.at(gu, jj, d[:, None] * w[ii])
    np.add.at(gb, ii, d)
    np.add.at(gc, jj, d)
    return gw, gu, gb, gc


@njit(cache=True)
def _adagrad_epoch(order, ii, jj, fx, logx, w, u, b, c, aw, au, ab, ac, lr):
    """One serial pass of per-entry adagrad updates. Returns the epoch loss
    evaluated at the pre-update parameters of each entry."""
    D = w.shape[1]
    total = 0.0
    for k in range(order.shape[0]):
        e = order[k]
        i = ii[e]
        j = jj[e]
        dot = b[i] + c[j] - logx[e]
        for d in range(D):
            dot += w[i, d] * u[j, d]
        f = fx[e]
        total += f * dot * dot
        g = 2.0 * f * dot
        for d in range(D):
            gw = g * u[j, d]
            gu = g * w[i, d]
            w[i, d] -= lr * gw / np.sqrt(aw[i, d])
            u[j, d] -= lr * gu / np.sqrt(au[j, d])
            aw[i, d] += gw * gw
            au[j, d] += gu * gu
        b[i] -= lr * g / np.sqrt(ab[i])
        c[j] -= lr * g / np.sqrt(ac[j])
        ab[i] += g * g
        ac[j] += g * g
    return total


def train(X: CoocMatrix, hyper: Hyperparams, vocab_hash: str = "") -> GloveModel:
    """Train a GloVe model on X. Serial and bit-reproducible under a fixed seed."""
    if X.nnz == 0:
        raise GloveError("cannot train on an empty co-occurrence matrix")
    V, D = X.V, hyper.D
    rng = np.random.default_rng(hyper.seed)
    scale = 0.5 / D
    w = rng.uniform(-scale, scale, size=(V, D))
    u = rng.uniform(-scale, scale, size=(V, D))
    b = rng.uniform(-scale, scale, size=V)
    c = rng.uniform(-scale, scale, size=V)
    aw = np.ones((V, D))
    au = np.ones((V, D))
    ab = np.ones(V)
    ac = np.ones(V)

    ii = X.ii.astype(np.int64)
    jj = X.jj.astype(np.int64)
    fx = weight_f(X.ww, hyper)
    logx = np.log(X.ww)

    losses = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(X.nnz)
        total = _adagrad_epoch(
            order, ii, jj, fx, logx, w, u, b, c, aw, au, ab, ac, hyper.learning_rate
        )
        if not np.isfinite(total):
            raise GloveError(f"non-finite loss at epoch {epoch}")
        losses.append(float(total))
    return GloveModel(w, u, b, c, hyper, vocab_hash, tuple(losses))


def save_embeddings(model: GloveModel, words: list[str] | tuple, path: str | Path) -> None:
    """Write `word v1 ... vD` text plus a binary sidecar with u, b, c and config."""
    path = Path(path)
    if len(words) != model.V:
        raise GloveError(f"{len(words)} words for a model with V={model.V}")
    with open(path, "w", encoding="utf-8") as f:
        for word, vec in zip(words, model.w):
            f.write(word + " " + " ".join(f"{v:.17g}" for v in vec) + "\n")
    model.require_context()
    meta = json.dumps({"hyper": asdict(model.hyper), "vocab_hash": model.vocab_hash}).encode()
    with open(sidecar_path(path), "wb") as f:
        f.write(struct.pack("<4sIII", _SIDECAR_MAGIC, _SIDECAR_VERSION, model.V, model.D))
        f.write(model.u.astype("<f8").tobytes())
        f.write(model.b.astype("<f8").tobytes())
        f.write(model.c.astype("<f8").tobytes())
        f.write(struct.pack("<I", len(meta)))
        f.write(meta)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".ctx")


def load_embeddings(
    path: str | Path, expect_vocab_hash: str | None = None
) -> tuple[GloveModel, list[str]]:
    """Load a text embedding file and, when present, its sidecar.

    Without the sidecar the model carries w only; influence computations
    will refuse it.
    """
    path = Path(path)
    words, rows = [], []
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split(" ")
            words.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    w = np.asarray(rows, dtype=np.float64)
    if w.ndim != 2:
        raise GloveError(f"{path}: inconsistent vector dimensions")
    V, D = w.shape

    u = b = c = None
    hyper = Hyperparams(D=D)
    vocab_hash = ""
    side = sidecar_path(path)
    if side.exists():
        raw = side.read_bytes()
        magic, version, sv, sd = struct.unpack_from("<4sIII", raw)
        if magic != _SIDECAR_MAGIC or version != _SIDECAR_VERSION:
            raise GloveError(f"{side}: bad sidecar header")
        if (sv, sd) != (V, D):
            raise GloveError(
                f"{side}: sidecar dimensions ({sv}, {sd}) do not match embedding ({V}, {D})"
            )
        off = 16
        u = np.frombuffer(raw, "<f8", V * D, off).reshape(V, D).copy()
        off += 8 * V * D
        b = np.frombuffer(raw, "<f8", V, off).copy()
        off += 8 * V
        c = np.frombuffer(raw, "<f8", V, off).copy()
        off += 8 * V
        (mlen,) = struct.unpack_from("<I", raw, off)
        meta = json.loads(raw[off + 4 : off + 4 + mlen])
        hyper = Hyperparams(**meta["hyper"])
        vocab_hash = meta["vocab_hash"]
    if expect_vocab_hash is not None and vocab_hash and vocab_hash != expect_vocab_hash:
        raise GloveError(
            f"vocabulary mismatch: model built for {vocab_hash}, got {expect_vocab_hash}"
        )
    return GloveModel(w, u, b, c, hyper, vocab_hash), words
