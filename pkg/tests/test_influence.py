import numpy as np
import pytest

from biastrace.cooc import CoocDelta, CoocMatrix, doc_cooc_rows, extract_cooc
from biastrace.corpus import build_vocabulary
from biastrace.glove import GloveModel, Hyperparams, train, weight_f
from biastrace.influence import (
    InfluenceError,
    WordSystem,
    approx_perturbed_vector,
    delta_bias_for_model,
    differential_bias_of_set,
    differential_bias_scan,
    load_scan_csv,
    pointwise_grad,
    prepare_model,
    save_histogram_csv,
    save_scan_csv,
    word_hessian,
)
from biastrace.metrics import WeatSpec, weat_effect_size
from conftest import make_corpus, random_cooc, random_model

H = Hyperparams(D=3, epochs=1)


class TestPointwiseGrad:
    def test_empty_row_zero(self):
        g = pointwise_grad(np.empty(0, np.uint32), np.empty(0), np.ones(3),
                           np.ones((2, 3)), 0.0, np.zeros(2), H)
        assert np.array_equal(g, np.zeros(3))

    def test_single_entry_hand_value(self):
        # f = 1 (x = x_max), residual forced to 1 via the word bias
        u = np.zeros((2, 3))
        u[1] = [1.0, 0.0, 0.0]
        c = np.zeros(2)
        w_i = np.zeros(3)
        b_i = 1.0 + np.log(100.0)
        g = pointwise_grad(np.array([1], np.uint32), np.array([100.0]), w_i, u, b_i, c, H)
        assert g == pytest.approx([2.0, 0.0, 0.0])

    def test_zero_at_exact_fit(self, rng):
        m = random_model(rng, 4, 3)
        jj = np.array([1, 2], dtype=np.uint32)
        xx = np.exp(m.u[jj] @ m.w[0] + m.b[0] + m.c[jj])
        g = pointwise_grad(jj, xx, m.w[0], m.u, m.b[0], m.c, m.hyper)
        assert np.allclose(g, 0.0, atol=1e-12)

    def test_matches_autodiff_style_fd(self, rng):
        m = random_model(rng, 5, 3)
        jj = np.array([0, 2, 4], dtype=np.uint32)
        xx = np.array([3.0, 40.0, 110.0])

        def f(w_i):
            r = m.u[jj] @ w_i + m.b[1] + m.c[jj] - np.log(xx)
            return float(np.sum(weight_f(xx, m.hyper) * r * r))

        g = pointwise_grad(jj, xx, m.w[1], m.u, m.b[1], m.c, m.hyper)
        eps = 1e-6
        for d in range(3):
            w2 = m.w[1].copy()
            w2[d] += eps
            fp = f(w2)
            w2[d] -= 2 * eps
            fm = f(w2)
            assert g[d] == pytest.approx((fp - fm) / (2 * eps), rel=1e-6)


class TestWordHessian:
    def test_single_entry_rank_one(self):
        u = np.zeros((2, 3))
        u[1] = [1.0, 0.0, 0.0]
        sys = word_hessian(np.array([1], np.uint32), np.array([100.0]), u, H, 0)
        expect = np.zeros((3, 3))
        expect[0, 0] = 2.0
        assert np.allclose(sys.hessian, expect)

    def test_orthogonal_contexts_diagonal(self):
        u = np.eye(3)
        sys = word_hessian(np.array([0, 1], np.uint32), np.array([100.0, 100.0]), u, H, 0)
        assert np.allclose(sys.hessian, np.diag([2.0, 2.0, 0.0]))

    def test_empty_row_solvable_via_damping(self):
        sys = word_hessian(np.empty(0, np.uint32), np.empty(0), np.eye(3), H, 7)
        x = sys.solve(np.ones(3))
        assert np.all(np.isfinite(x))
        assert sys.damping_lambda > 0

    def test_matches_fd_hessian_of_pointwise_loss(self, rng):
        # independent check: H equals the finite-difference Hessian of the
        # per-word loss in w_i (u, b, c fixed), since the loss is quadratic
        m = random_model(rng, 6, 4)
        jj = np.array([0, 2, 3, 5], dtype=np.uint32)
        xx = np.array([5.0, 80.0, 120.0, 1.5])
        sys = word_hessian(jj, xx, m.u, m.hyper, 1)
        eps = 1e-5
        fd = np.zeros((4, 4))
        for d in range(4):
            wp = m.w[1].copy(); wp[d] += eps
            wm = m.w[1].copy(); wm[d] -= eps
            gp = pointwise_grad(jj, xx, wp, m.u, m.b[1], m.c, m.hyper)
            gm = pointwise_grad(jj, xx, wm, m.u, m.b[1], m.c, m.hyper)
            fd[d] = (gp - gm) / (2 * eps)
        assert np.allclose(sys.hessian, fd, rtol=1e-4, atol=1e-6)

    def test_negative_damping_rejected(self):
        with pytest.raises(ValueError, match="damping"):
            word_hessian(np.empty(0, np.uint32), np.empty(0), np.eye(3), H, 0, damping=-1.0)


class TestApproxPerturbedVector:
    def test_identical_grads_returns_w_star(self, rng):
        sys = word_hessian(np.empty(0, np.uint32), np.empty(0), np.eye(3), H, 0)
        w = rng.normal(size=3)
        g = rng.normal(size=3)
        out = approx_perturbed_vector(sys, w, g, g.copy())
        assert np.array_equal(out, w)
        assert out is not w  # a copy, not the same array

    def test_identity_system_newton_step(self):
        from scipy.linalg import cho_factor

        ident = WordSystem(0, np.eye(3), cho_factor(np.eye(3), lower=True), 0.0)
        w = np.array([1.0, 2.0, 3.0])
        out = approx_perturbed_vector(ident, w, np.zeros(3), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(out, [0.0, 2.0, 3.0])


def quadratic_exact_minimizer(jj, xx, u, b_i, c, hyper):
    """Independent oracle: argmin_w of the frozen per-word quadratic loss."""
    j = jj.astype(np.int64)
    uj = u[j]
    f = weight_f(xx, hyper)
    A = uj.T @ (2.0 * f[:, None] * uj)
    rhs = (2.0 * f * (np.log(xx) - b_i - c[j])) @ uj
    return np.linalg.solve(A + 1e-10 * np.eye(u.shape[1]), rhs)


def weat_corpus(seed=3, n_pairs_doc=25, n_docs_each=12):
    """A small corpus with planted attribute-target structure, enough data
    that training converges tightly."""
    rng = np.random.default_rng(seed)
    male, female = ["he", "him"], ["she", "her"]
    sci, art = ["physics", "chemistry"], ["poetry", "dance"]
    lists = []
    for _ in range(n_docs_each):
        for attrs, targs in ((male, sci), (female, art)):
            doc = []
            for _ in range(n_pairs_doc):
                doc += [str(rng.choice(attrs)), str(rng.choice(targs))]
            lists.append(doc)
        for attrs, targs in ((female, sci), (male, art)):
            doc = []
            for _ in range(n_pairs_doc // 2):
                doc += [str(rng.choice(attrs)), str(rng.choice(targs))]
            lists.append(doc)
    for _ in range(30):
        lists.append([f"f{k}" for k in rng.integers(0, 12, size=20)])
    corpus = make_corpus(lists)
    vocab = build_vocabulary(corpus)
    spec = WeatSpec("mini", ("physics", "chemistry"), ("poetry", "dance"),
                    ("he", "him"), ("she", "her"))
    return corpus, vocab, spec


@pytest.fixture(scope="module")
def mini():
    corpus, vocab, spec = weat_corpus()
    X = extract_cooc(corpus, vocab, window=8)
    h = Hyperparams(D=8, epochs=150, learning_rate=0.3, seed=0)
    models = [train(X, h.with_seed(s), vocab.checksum()) for s in (0, 1)]
    return corpus, vocab, spec, X, models


class TestEquation:
    def test_influence_matches_frozen_quadratic_oracle(self, mini):
        corpus, vocab, spec, X, models = mini
        model = models[0]
        resolved = spec.resolve(vocab)
        ctx = prepare_model(X, model, resolved)
        checked = 0
        for doc in corpus:
            if checked >= 8:
                break
            delta = doc_cooc_rows(doc, vocab, 8, set(resolved.all_ids()))
            for i in delta.row_ids():
                i = int(i)
                if i not in ctx.systems:
                    continue
                jj, xx = X.row(i)
                djj, dww = delta.row(i)
                if dww.sum() > 0.01 * xx.sum():
                    continue  # oracle guarantee only for small removals
                # exact minimizer on the perturbed row
                xd = dict(zip(jj.tolist(), xx.tolist()))
                for j, dw in zip(djj.tolist(), dww.tolist()):
                    xd[j] = xd[j] - dw
                    if xd[j] <= 1e-9:
                        del xd[j]
                njj = np.array(sorted(xd), dtype=np.uint32)
                nxx = np.array([xd[j] for j in sorted(xd)])
                exact = quadratic_exact_minimizer(njj, nxx, model.u, model.b[i], model.c, model.hyper)
                g_before = pointwise_grad(jj, xx, model.w[i], model.u, model.b[i], model.c, model.hyper)
                g_after = pointwise_grad(njj, nxx, model.w[i], model.u, model.b[i], model.c, model.hyper)
                approx = approx_perturbed_vector(ctx.systems[i], model.w[i], g_before, g_after)
                rel = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
                assert rel <= 0.05
                checked += 1
        assert checked >= 4

    def test_linear_in_perturbation_scale(self, mini):
        corpus, vocab, spec, X, models = mini
        resolved = spec.resolve(vocab)
        ctx = prepare_model(X, models[0], resolved)
        doc = next(d for d in corpus if "physics" in d.tokens)
        delta = doc_cooc_rows(doc, vocab, 8, set(resolved.all_ids()))
        ts = np.linspace(0.05, 0.5, 8)
        ys = [delta_bias_for_model(ctx, X, delta.scaled(t))[0] for t in ts]
        # least-squares line through the origin should explain the response
        slope = float(np.dot(ts, ys) / np.dot(ts, ts))
        resid = np.array(ys) - slope * ts
        ss_tot = float(np.sum((np.array(ys) - np.mean(ys)) ** 2))
        assert 1.0 - float(np.sum(resid**2)) / ss_tot >= 0.999


class TestGradDiffErrors:
    def test_zero_cooccurrence_touch_rejected(self, mini):
        corpus, vocab, spec, X, models = mini
        resolved = spec.resolve(vocab)
        ctx = prepare_model(X, models[0], resolved)
        i = resolved.s_ids[0]
        # find a j with X[i, j] == 0
        jj, _ = X.row(i)
        j_zero = next(j for j in range(len(vocab)) if j not in set(jj.tolist()) and j != i)
        bad = CoocDelta.from_dict(len(vocab), {(i, j_zero): 1.0})
        with pytest.raises(InfluenceError, match="zero co-occurrence"):
            delta_bias_for_model(ctx, X, bad)


class TestScan:
    def test_untouched_doc_is_exact_zero(self, mini):
        corpus, vocab, spec, X, models = mini
        records = differential_bias_scan(corpus, vocab, X, models, spec)
        filler_ids = [d.doc_id for d in corpus if d.tokens[0].startswith("f")]
        for fid in filler_ids[:5]:
            r = records[fid]
            assert r.delta_b == 0.0
            assert r.weat_words_touched == 0

    def test_per_seed_matches_model_count(self, mini):
        corpus, vocab, spec, X, models = mini
        records = differential_bias_scan(corpus, vocab, X, models, spec)
        assert all(len(r.per_seed) == len(models) for r in records if r.error is None)

    def test_singleton_set_equals_scan_bitwise(self, mini):
        corpus, vocab, spec, X, models = mini
        records = differential_bias_scan(corpus, vocab, X, models, spec)
        target = next(r for r in records if r.delta_b != 0.0)
        mean, _, per_model = differential_bias_of_set(
            {target.doc_id}, corpus, vocab, X, models, spec
        )
        assert per_model == target.per_seed
        assert mean == target.delta_b

    def test_empty_set_is_zero(self, mini):
        corpus, vocab, spec, X, models = mini
        mean, _, per_model = differential_bias_of_set(set(), corpus, vocab, X, models, spec)
        assert mean == 0.0
        assert per_model == (0.0,) * len(models)

    def test_out_of_range_doc_id(self, mini):
        corpus, vocab, spec, X, models = mini
        with pytest.raises(InfluenceError, match="out of range"):
            differential_bias_of_set({len(corpus)}, corpus, vocab, X, models, spec)

    def test_large_set_warns(self, mini):
        corpus, vocab, spec, X, models = mini
        many = set(range(len(corpus) // 2))
        with pytest.warns(UserWarning, match="small-perturbation"):
            differential_bias_of_set(many, corpus, vocab, X, models[:1], spec)

    def test_scan_approximates_retraining_direction(self, mini):
        # the top bias-increasing doc must really lower bias when removed
        corpus, vocab, spec, X, models = mini
        records = differential_bias_scan(corpus, vocab, X, models, spec)
        best = max(records, key=lambda r: r.delta_b if np.isfinite(r.delta_b) else -np.inf)
        assert best.delta_b > 0
        # removing it and retraining moves bias in the predicted direction
        resolved = spec.resolve(vocab)
        h = models[0].hyper
        base = np.mean([weat_effect_size(m.w, resolved) for m in models])
        pruned = corpus.without({best.doc_id})
        X2 = extract_cooc(pruned, vocab, 8)
        after = np.mean(
            [weat_effect_size(train(X2, h.with_seed(s), vocab.checksum()).w, resolved) for s in (0, 1)]
        )
        assert base - after > 0


class TestScanCsv:
    def test_roundtrip(self, tmp_path, mini):
        corpus, vocab, spec, X, models = mini
        records = differential_bias_scan(corpus, vocab, X, models, spec)
        p = tmp_path / "scan.csv"
        save_scan_csv(records, p, method="influence")
        loaded = load_scan_csv(p)
        assert len(loaded) == len(records)
        for a, b in zip(records, loaded):
            if a.error is None:
                assert (a.doc_id, a.weat_words_touched) == (b.doc_id, b.weat_words_touched)
                assert b.delta_b == a.delta_b  # repr round-trips exactly
        header = p.read_text().splitlines()[0]
        assert header == "doc_id,delta_b_mean,delta_b_std,n_seeds,weat_words_touched,method"

    def test_histogram_counts(self, tmp_path):
        from biastrace.influence import DiffBiasRecord

        records = [DiffBiasRecord(i, float(v), (float(v),), 0.0, 0)
                   for i, v in enumerate([-1.0, 0.0, 0.5, 1.0])]
        p = tmp_path / "h.csv"
        save_histogram_csv(records, p, bins=4)
        rows = p.read_text().splitlines()
        assert rows[0] == "bin_left,bin_right,count"
        counts = [int(r.split(",")[2]) for r in rows[1:]]
        assert sum(counts) == 4
