"""Experimental protocol: baseline ensembles, perturbation sets, ground-truth
retraining, and the statistics used to assess the influence approximation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import stats as sps

from biastrace.cooc import CoocMatrix, extract_cooc
from biastrace.corpus import Corpus, Vocabulary
from biastrace.glove import GloveModel, Hyperparams, train
from biastrace.influence import DiffBiasRecord, differential_bias_of_set, differential_bias_scan
from biastrace.metrics import WeatSpec, weat_effect_size


class HarnessError(Exception):
    pass


@dataclass(frozen=True)
class PerturbationSet:
    """A named set of documents to remove together."""

    name: str
    kind: str  # increase | random | decrease
    doc_ids: tuple[int, ...]
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("increase", "random", "decrease"):
            raise HarnessError(f"unknown perturbation kind {self.kind!r}")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise HarnessError(f"{self.name}: duplicate doc ids")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> "PerturbationSet":
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        return cls(d["name"], d["kind"], tuple(d["doc_ids"]), d.get("seed"))


def train_baselines(
    X: CoocMatrix, hyper: Hyperparams, n_seeds: int, vocab_hash: str = ""
) -> list[GloveModel]:
    """Models identical in hyperparameters, differing only in seed."""
    if n_seeds < 1:
        raise HarnessError("n_seeds must be >= 1")
    return [train(X, hyper.with_seed(hyper.seed + k), vocab_hash) for k in range(n_seeds)]


def make_perturbation_sets(
    records: list[DiffBiasRecord],
    sizes: list[int],
    n_random: int,
    seed: int,
) -> list[PerturbationSet]:
    """Targeted (increase / decrease) and random document sets.

    Removal convention: a positive scan delta means removal lowers bias, so
    ``decrease-s`` takes the s most positive deltas and ``increase-s`` the s
    most negative. Ties break by ascending doc id; random sets are drawn
    uniformly without replacement.
    """
    n = len(records)
    usable = [(r.delta_b, r.doc_id) for r in records if np.isfinite(r.delta_b)]
    for s in sizes:
        if s > n:
            raise HarnessError(f"set size {s} exceeds corpus size {n}")
        if s == n:
            warnings.warn(f"perturbation set of size {s} covers the whole corpus", stacklevel=2)
    by_desc = sorted(usable, key=lambda t: (-t[0], t[1]))
    by_asc = sorted(usable, key=lambda t: (t[0], t[1]))
    sets = []
    for s in sizes:
        sets.append(
            PerturbationSet(f"decrease-{s}", "decrease", tuple(d for _, d in by_desc[:s]))
        )
        sets.append(
            PerturbationSet(f"increase-{s}", "increase", tuple(d for _, d in by_asc[:s]))
        )
    rng = np.random.default_rng(seed)
    all_ids = np.array([r.doc_id for r in records])
    for k in range(n_random):
        s = sizes[k % len(sizes)]
        picked = rng.choice(all_ids, size=s, replace=False)
        sets.append(
            PerturbationSet(f"random-{s}-{k}", "random", tuple(int(d) for d in np.sort(picked)), seed)
        )
    return sets


def ground_truth(
    corpus: Corpus,
    pset: PerturbationSet,
    vocab: Vocabulary,
    hyper: Hyperparams,
    n_seeds: int,
    spec: WeatSpec,
    window: int = 8,
    std: str = "sample",
) -> tuple[float, float, tuple[float, ...]]:
    """Retrain on the corpus minus the set; the measured biases are the oracle.

    The vocabulary stays frozen from the unperturbed corpus, and the
    co-occurrence matrix is re-extracted from scratch rather than obtained by
    delta subtraction.
    """
    perturbed = corpus.without(set(pset.doc_ids))
    Xt = extract_cooc(perturbed, vocab, window)
    resolved = spec.resolve(vocab)
    biases = []
    for k in range(n_seeds):
        m = train(Xt, hyper.with_seed(hyper.seed + k), vocab.checksum())
        biases.append(weat_effect_size(m.w, resolved, std=std))
    arr = np.array(biases)
    sd = float(arr.std(ddof=1)) if n_seeds > 1 else float("nan")
    return float(arr.mean()), sd, tuple(biases)


def welch_t(a, b) -> tuple[float, float]:
    """Unequal-variance t statistic and two-sided p value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise HarnessError("welch_t needs at least 2 samples per group")
    if a.std(ddof=1) == 0 and b.std(ddof=1) == 0:
        if np.allclose(a.mean(), b.mean()):
            return 0.0, 1.0
        raise HarnessError("welch_t: degenerate zero-variance samples")
    t, p = sps.ttest_ind(a, b, equal_var=False)
    return float(t), float(p)


def r_squared(x, y) -> float:
    """Squared Pearson correlation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise HarnessError("r_squared needs two equal-length samples of size >= 2")
    if np.all(x == x[0]):
        raise HarnessError("r_squared undefined for constant x")
    r = float(np.corrcoef(x, y)[0, 1])
    return r * r


def analogy_eval(
    model: GloveModel, words: list[str], questions: list[tuple[str, str, str, str]]
) -> tuple[float, int, int]:
    """Top-1 accuracy on `a b c d` analogy questions.

    Answers are argmax cosine(w_b - w_a + w_c, .) over normalized vectors,
    excluding a, b, c. Questions with out-of-vocabulary words are skipped.
    Returns (accuracy, attempted, skipped).
    """
    index = {w: i for i, w in enumerate(words)}
    norms = np.linalg.norm(model.w, axis=1)
    norms[norms == 0] = 1.0
    wn = model.w / norms[:, None]
    attempted = 0
    correct = 0
    skipped = 0
    for a, b, c, d in questions:
        ids = [index.get(t) for t in (a, b, c, d)]
        if any(i is None for i in ids):
            skipped += 1
            continue
        ia, ib, ic, idd = ids
        query = wn[ib] - wn[ia] + wn[ic]
        scores = wn @ query
        scores[[ia, ib, ic]] = -np.inf
        attempted += 1
        if int(np.argmax(scores)) == idd:
            correct += 1
    if attempted == 0:
        raise HarnessError("no analogy question could be attempted (all OOV)")
    return correct / attempted, attempted, skipped


def load_analogy_file(path: str | Path) -> list[tuple[str, str, str, str]]:
    questions = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith(":"):
                continue  # section header in the standard analogy file
            parts = line.lower().split()
            if len(parts) == 4:
                questions.append(tuple(parts))
    return questions


@dataclass
class SetResult:
    pset: PerturbationSet
    approx_per_model: tuple[float, ...]  # approximated differential bias per baseline
    approx_bias_mean: float  # mean over models of B(model) - delta
    approx_bias_std: float
    truth_mean: float
    truth_std: float
    truth_per_seed: tuple[float, ...]
    welch_t: float
    welch_p: float


@dataclass
class ExperimentReport:
    baseline_mean: float
    baseline_std: float
    baseline_per_seed: tuple[float, ...]
    results: list[SetResult]
    r2: float

    def to_dict(self) -> dict:
        return {
            "baseline": {
                "mean": self.baseline_mean,
                "std": self.baseline_std,
                "per_seed": list(self.baseline_per_seed),
            },
            "r_squared": self.r2,
            "sets": [
                {
                    "name": r.pset.name,
                    "kind": r.pset.kind,
                    "size": len(r.pset.doc_ids),
                    "approx_bias_mean": r.approx_bias_mean,
                    "approx_bias_std": r.approx_bias_std,
                    "truth_mean": r.truth_mean,
                    "truth_std": r.truth_std,
                    "truth_per_seed": list(r.truth_per_seed),
                    "welch_t": r.welch_t,
                    "welch_p": r.welch_p,
                }
                for r in self.results
            ],
        }


def run_protocol(
    corpus: Corpus,
    vocab: Vocabulary,
    X: CoocMatrix,
    hyper: Hyperparams,
    spec: WeatSpec,
    sizes: list[int],
    n_random: int = 4,
    n_baseline_seeds: int = 5,
    n_retrain_seeds: int = 3,
    window: int = 8,
    seed: int = 1234,
    std: str = "sample",
    records: list[DiffBiasRecord] | None = None,
    baselines: list[GloveModel] | None = None,
) -> ExperimentReport:
    """End-to-end accuracy protocol: baselines, scan, sets, retraining, stats."""
    resolved = spec.resolve(vocab)
    if baselines is None:
        baselines = train_baselines(X, hyper, n_baseline_seeds, vocab.checksum())
    base_biases = [weat_effect_size(m.w, resolved, std=std) for m in baselines]
    if records is None:
        records = differential_bias_scan(corpus, vocab, X, baselines, spec, window, std=std)
    psets = make_perturbation_sets(records, sizes, n_random, seed)

    results = []
    for pset in psets:
        mean_d, _, per_model = differential_bias_of_set(
            set(pset.doc_ids), corpus, vocab, X, baselines, spec, window, std=std
        )
        approx_biases = np.array(base_biases) - np.array(per_model)
        t_mean, t_std, t_seeds = ground_truth(
            corpus, pset, vocab, hyper, n_retrain_seeds, spec, window, std
        )
        tv, pv = welch_t(t_seeds, base_biases)
        results.append(
            SetResult(
                pset,
                tuple(per_model),
                float(approx_biases.mean()),
                float(approx_biases.std(ddof=1)) if len(approx_biases) > 1 else float("nan"),
                t_mean,
                t_std,
                t_seeds,
                tv,
                pv,
            )
        )
    r2 = r_squared([r.approx_bias_mean for r in results], [r.truth_mean for r in results])
    base = np.array(base_biases)
    return ExperimentReport(
        float(base.mean()),
        float(base.std(ddof=1)) if len(base) > 1 else float("nan"),
        tuple(base_biases),
        results,
        r2,
    )
