"""WEAT bias metrics: differential association, effect size, projection onto
an attribute axis, and the analytic effect-size gradient."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from biastrace.corpus import Vocabulary


class WeatError(Exception):
    pass


class DegenerateWeatError(WeatError):
    """All target associations equal; the effect size denominator vanishes."""


@dataclass(frozen=True)
class WeatSpec:
    """Two target word sets (S, T) and two attribute word sets (A, B)."""

    name: str
    S: tuple[str, ...]
    T: tuple[str, ...]
    A: tuple[str, ...]
    B: tuple[str, ...]

    def __post_init__(self):
        if len(self.S) != len(self.T) or len(self.S) < 2:
            raise WeatError("target sets must be equal-sized with at least 2 words")
        if len(self.A) != len(self.B) or len(self.A) < 1:
            raise WeatError("attribute sets must be equal-sized and non-empty")
        if set(self.S) & set(self.T):
            raise WeatError("target sets overlap")
        if set(self.A) & set(self.B):
            raise WeatError("attribute sets overlap")

    def all_words(self) -> tuple[str, ...]:
        return self.S + self.T + self.A + self.B

    def resolve(self, vocab: Vocabulary) -> "ResolvedWeat":
        missing = [w for w in self.all_words() if w not in vocab]
        if missing:
            raise WeatError(
                f"{self.name}: words not in vocabulary: {', '.join(missing)}"
            )
        ids = {w: vocab.id_of(w) for w in self.all_words()}
        return ResolvedWeat(
            self.name,
            tuple(ids[w] for w in self.S),
            tuple(ids[w] for w in self.T),
            tuple(ids[w] for w in self.A),
            tuple(ids[w] for w in self.B),
            {v: k for k, v in ids.items()},
        )


@dataclass(frozen=True)
class ResolvedWeat:
    """A WeatSpec with every word mapped to a vocabulary id."""

    name: str
    s_ids: tuple[int, ...]
    t_ids: tuple[int, ...]
    a_ids: tuple[int, ...]
    b_ids: tuple[int, ...]
    word_of: dict[int, str]

    def all_ids(self) -> tuple[int, ...]:
        return self.s_ids + self.t_ids + self.a_ids + self.b_ids

    def swapped_targets(self) -> "ResolvedWeat":
        return ResolvedWeat(self.name, self.t_ids, self.s_ids, self.a_ids, self.b_ids, self.word_of)

    def swapped_attributes(self) -> "ResolvedWeat":
        return ResolvedWeat(self.name, self.s_ids, self.t_ids, self.b_ids, self.a_ids, self.word_of)


def _norm(v: np.ndarray, label: str) -> float:
    n = float(np.linalg.norm(v))
    if n <= 0.0 or not np.isfinite(n):
        raise WeatError(f"zero-norm vector for {label}")
    return n


def cosine(a: np.ndarray, b: np.ndarray, label_a: str = "a", label_b: str = "b") -> float:
    return float(a @ b / (_norm(a, label_a) * _norm(b, label_b)))


def _assoc_vector(w: np.ndarray, spec: ResolvedWeat, overrides: dict[int, np.ndarray] | None = None):
    """g(c, A, B) for every c in S u T, honoring per-word vector overrides."""

    def vec(i: int) -> np.ndarray:
        if overrides is not None and i in overrides:
            return overrides[i]
        return w[i]

    a_vecs = [vec(i) for i in spec.a_ids]
    b_vecs = [vec(i) for i in spec.b_ids]
    g = np.empty(len(spec.s_ids) + len(spec.t_ids))
    for k, cid in enumerate(spec.s_ids + spec.t_ids):
        wc = vec(cid)
        label = spec.word_of.get(cid, str(cid))
        ga = np.mean([cosine(wc, av, label, spec.word_of.get(a, str(a)))
                      for a, av in zip(spec.a_ids, a_vecs)])
        gb = np.mean([cosine(wc, bv, label, spec.word_of.get(b, str(b)))
                      for b, bv in zip(spec.b_ids, b_vecs)])
        g[k] = ga - gb
    return g


def weat_assoc(c: int, spec: ResolvedWeat, w: np.ndarray) -> float:
    """Differential association of word c with the attribute sets."""
    label = spec.word_of.get(c, str(c))
    ga = np.mean([cosine(w[c], w[a], label, spec.word_of.get(a, str(a))) for a in spec.a_ids])
    gb = np.mean([cosine(w[c], w[b], label, spec.word_of.get(b, str(b))) for b in spec.b_ids])
    return float(ga - gb)


def weat_effect_size(
    w: np.ndarray,
    spec: ResolvedWeat,
    std: str = "sample",
    overrides: dict[int, np.ndarray] | None = None,
) -> float:
    """WEAT effect size: (mean_S g - mean_T g) / std-dev_{S u T} g.

    ``std`` selects the sample (n-1, default) or population estimator.
    ``overrides`` substitutes individual word vectors without copying w.
    """
    g = _assoc_vector(w, spec, overrides)
    m = len(spec.s_ids)
    num = float(np.mean(g[:m]) - np.mean(g[m:]))
    ddof = 1 if std == "sample" else 0
    sd = float(np.std(g, ddof=ddof))
    if sd <= 1e-12:
        raise DegenerateWeatError("degenerate WEAT: all target associations equal")
    return num / sd


def projection_bias(
    w: np.ndarray, spec: ResolvedWeat, targets: tuple[int, ...]
) -> dict[int, float]:
    """Cosine of each target vector with the normalized A-minus-B attribute axis."""
    a_mean = np.mean([w[a] / _norm(w[a], spec.word_of.get(a, str(a))) for a in spec.a_ids], axis=0)
    b_mean = np.mean([w[b] / _norm(w[b], spec.word_of.get(b, str(b))) for b in spec.b_ids], axis=0)
    axis = a_mean - b_mean
    n = float(np.linalg.norm(axis))
    if n <= 1e-12:
        raise WeatError("attribute sets indistinguishable: zero-norm axis")
    axis /= n
    return {t: cosine(w[t], axis, spec.word_of.get(t, str(t)), "axis") for t in targets}


def _dcos_dx(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of cos(x, y) with respect to x."""
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    cs = (x @ y) / (nx * ny)
    return y / (nx * ny) - cs * x / (nx * nx)


def weat_gradient(
    w: np.ndarray, spec: ResolvedWeat, std: str = "sample"
) -> dict[int, np.ndarray]:
    """Analytic gradient of the effect size for every involved word vector.

    Words outside S u T u A u B have identically zero gradient and are
    omitted from the result.
    """
    g = _assoc_vector(w, spec)
    m = len(spec.s_ids)
    n = len(g)
    p = len(spec.a_ids)
    num = float(np.mean(g[:m]) - np.mean(g[m:]))
    ddof = 1 if std == "sample" else 0
    sd = float(np.std(g, ddof=ddof))
    if sd <= 1e-12:
        raise DegenerateWeatError("degenerate WEAT: all target associations equal")
    gbar = float(np.mean(g))
    denom = n - ddof
    # dB/dg_c = coef_c / sd - num * (g_c - gbar) / (denom * sd^3)
    coef = np.concatenate([np.full(m, 1.0 / m), np.full(m, -1.0 / m)])
    dB_dg = coef / sd - num * (g - gbar) / (denom * sd**3)

    grads: dict[int, np.ndarray] = {i: np.zeros(w.shape[1]) for i in set(spec.all_ids())}
    for k, cid in enumerate(spec.s_ids + spec.t_ids):
        wc = w[cid]
        for a in spec.a_ids:
            d = _dcos_dx(wc, w[a]) / p
            grads[cid] += dB_dg[k] * d
            grads[a] += dB_dg[k] * _dcos_dx(w[a], wc) / p
        for b in spec.b_ids:
            grads[cid] -= dB_dg[k] * _dcos_dx(wc, w[b]) / p
            grads[b] -= dB_dg[k] * _dcos_dx(w[b], wc) / p
    return grads


def save_weat_spec(spec: WeatSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"name: {spec.name}\n")
        for label, words in (("S", spec.S), ("T", spec.T), ("A", spec.A), ("B", spec.B)):
            f.write(f"{label}: {' '.join(words)}\n")


def load_weat_spec(path: str | Path) -> WeatSpec:
    fields = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(":")
            fields[key.strip()] = rest.strip()
    try:
        return WeatSpec(
            name=fields["name"],
            S=tuple(fields["S"].split()),
            T=tuple(fields["T"].split()),
            A=tuple(fields["A"].split()),
            B=tuple(fields["B"].split()),
        )
    except KeyError as e:
        raise WeatError(f"{path}: missing field {e}") from None


def builtin_spec_path(name: str) -> Path:
    """Path to a word-list file shipped with the package (weat1, weat2)."""
    p = Path(__file__).parent / "data" / f"{name.lower()}.txt"
    if not p.exists():
        raise WeatError(f"no built-in WEAT spec named {name!r}")
    return p
