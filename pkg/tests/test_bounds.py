import itertools

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

import dosebound as db
from dosebound.bounds import step_mu_w_exact_gaussian
from dosebound.mixture import sample

STANDARD_NORMAL = db.MixtureDensity(np.array([1.0]), np.array([0.0]), np.array([1.0]))


def random_mixture(rng, max_components=4, spread=2.0):
    k = rng.integers(1, max_components + 1)
    return db.MixtureDensity(
        rng.dirichlet(np.ones(k)),
        rng.normal(0, spread, size=k),
        rng.uniform(0.2, 1.5, size=k) ** 2,
    )


def brute_force_discrete(values, probs, mu_tilde, lam):
    """Exhaustive optimum of the bound objective over every binary weighting
    of a finite support (independent oracle for the step-optimality lemma)."""
    best_lo, best_hi = np.inf, -np.inf
    resid = values - mu_tilde
    for bits in itertools.product((0.0, 1.0), repeat=len(values)):
        w = np.asarray(bits)
        n = float(np.dot(probs, w * resid))
        d = float(np.dot(probs, w))
        value = mu_tilde + n / (lam.gamma + d)
        best_lo = min(best_lo, value)
        best_hi = max(best_hi, value)
    return best_lo, best_hi


class TestLambda:
    def test_gamma(self):
        assert db.Lambda(np.sqrt(2.0)).gamma == pytest.approx(1.0)
        assert db.Lambda(2.0).gamma == pytest.approx(1 / 3)
        assert np.isinf(db.Lambda(1.0).gamma)

    def test_identity_detection(self):
        assert db.Lambda(1.0).is_identity
        assert db.Lambda(1.0 + 1e-10).is_identity
        assert not db.Lambda(1.01).is_identity

    def test_rejects_below_one(self):
        with pytest.raises(db.InputError):
            db.Lambda(0.99)


class TestMuW:
    def test_zero_weighting_returns_point_estimate(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            mix = random_mixture(rng)
            mu_t = rng.normal()
            lam = db.Lambda(rng.uniform(1.1, 3))
            got = db.mu_w(lambda y: np.zeros_like(y), mix, mu_t, lam)
            assert got == mu_t

    def test_full_weighting_at_huge_lambda_recovers_sample_mean(self):
        spec = db.BoundGridSpec(mc_samples=4096, seed=3)
        mix = db.MixtureDensity(np.array([1.0]), np.array([2.0]), np.array([1.0]))
        mu_t = 2.0
        got = db.mu_w(lambda y: np.ones_like(y), mix, mu_t, db.Lambda(1e8), spec)
        ys = sample(mix, 4096, np.random.default_rng(3))
        assert got == pytest.approx(mu_t + (ys.mean() - mu_t) / (db.Lambda(1e8).gamma + 1), abs=1e-12)
        assert got == pytest.approx(2.0, abs=0.1)

    def test_identity_lambda_rejected(self):
        with pytest.raises(db.InputError):
            db.mu_w(lambda y: np.ones_like(y), STANDARD_NORMAL, 0.0, db.Lambda(1.0))

    def test_half_normal_closed_form_exact(self):
        # Step above the mean, sensitivity^2 = 2: correction is
        # phi(0) / (1 + 1/2) in closed form.
        w = db.StepWeight(threshold=0.0, direction=db.bounds.NON_DECREASING)
        got = step_mu_w_exact_gaussian(w, 0.0, 1.0, 0.0, db.Lambda(np.sqrt(2.0)))
        want = (1 / np.sqrt(2 * np.pi)) / 1.5
        assert got == pytest.approx(want, abs=1e-9)

    def test_half_normal_mc_agreement(self):
        m = 1_000_000
        spec = db.BoundGridSpec(mc_samples=m, seed=11)
        lam = db.Lambda(np.sqrt(2.0))
        w = db.StepWeight(threshold=0.0, direction=db.bounds.NON_DECREASING)
        got = db.mu_w(w, STANDARD_NORMAL, 0.0, lam, spec)
        want = (1 / np.sqrt(2 * np.pi)) / 1.5
        # Delta-method standard error of the ratio estimator.
        ys = sample(STANDARD_NORMAL, m, np.random.default_rng(11))
        wv = w(ys)
        n_hat, d_hat = np.mean(wv * ys), np.mean(wv)
        denom = lam.gamma + d_hat
        infl = (wv * ys - n_hat) / denom - n_hat * (wv - d_hat) / denom**2
        se = infl.std() / np.sqrt(m)
        assert abs(got - want) <= 3 * se

    def test_weight_range_validated(self):
        with pytest.raises(db.InputError):
            db.mu_w(lambda y: 2 * np.ones_like(y), STANDARD_NORMAL, 0.0, db.Lambda(1.5))

    def test_gh_engine_on_smooth_weighting(self):
        w = db.SigmoidWeight(y_star=0.2, s=0.0, direction=db.bounds.NON_DECREASING)
        lam = db.Lambda(1.5)
        mc = db.mu_w(w, STANDARD_NORMAL, 0.0, lam, db.BoundGridSpec(mc_samples=500_000, seed=5))
        gh = db.mu_w(w, STANDARD_NORMAL, 0.0, lam, db.BoundGridSpec(engine="gh", gh_order=64))
        assert gh == pytest.approx(mc, abs=5e-3)


class TestGridSearch:
    def test_collapse_at_identity(self, small_model):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.uniform(0.1, 2.0, size=1)
            t = rng.integers(0, 101) / 100
            b = db.capo_bounds_grid(small_model, x, t, db.Lambda(1.0))
            assert b.lower == b.upper == b.mu_tilde
            assert b.width == 0.0

    def test_matches_exhaustive_on_shared_samples(self):
        # Ten unique draws; every one of the 2^10 binary weightings scored
        # directly must not beat the threshold search.
        rng = np.random.default_rng(2)
        for trial in range(5):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            lam = db.Lambda(1.5)
            spec = db.BoundGridSpec(mc_samples=10, seed=100 + trial)
            got = db.mixture_bounds_grid(mix, mu_t, lam, spec)
            ys = sample(mix, 10, np.random.default_rng(spec.seed))
            masses = np.full(10, 0.1)
            want_lo, want_hi = brute_force_discrete(ys, masses, mu_t, lam)
            assert got.lower == pytest.approx(want_lo, abs=1e-10)
            assert got.upper == pytest.approx(want_hi, abs=1e-10)

    def test_discrete_exact_matches_exhaustive(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            k = int(rng.integers(2, 13))
            values = np.sort(rng.normal(0, 2, size=k))
            probs = rng.dirichlet(np.ones(k))
            mu_t = float(np.dot(probs, values))
            lam = db.Lambda(float(rng.uniform(1.05, 3.0)))
            got = db.grid_bounds_discrete(values, probs, mu_t, lam)
            want_lo, want_hi = brute_force_discrete(values, probs, mu_t, lam)
            assert got.lower == pytest.approx(want_lo, abs=1e-10)
            assert got.upper == pytest.approx(want_hi, abs=1e-10)

    def test_nesting_in_lambda(self, small_model):
        rng = np.random.default_rng(4)
        spec = db.BoundGridSpec(mc_samples=512, seed=9)
        for _ in range(10):
            x = rng.uniform(0.1, 2.0, size=1)
            t = rng.integers(0, 101) / 100
            bounds = [
                db.capo_bounds_grid(small_model, x, t, db.Lambda(v), spec)
                for v in (1.1, 1.2, 1.6)
            ]
            for tight, loose in zip(bounds, bounds[1:]):
                assert loose.lower < tight.lower
                assert loose.upper > tight.upper

    def test_sandwich(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            lam = db.Lambda(rng.uniform(1.01, 5.0))
            b = db.mixture_bounds_grid(mix, mu_t, lam, db.BoundGridSpec(mc_samples=256, seed=trial))
            assert b.lower <= b.mu_tilde <= b.upper

    def test_translation_equivariance(self):
        rng = np.random.default_rng(6)
        spec = db.BoundGridSpec(mc_samples=512, seed=21)
        for shift in (-3.0, 0.5, 10.0):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            lam = db.Lambda(1.4)
            base = db.mixture_bounds_grid(mix, mu_t, lam, spec)
            moved = db.mixture_bounds_grid(mix.shift(shift), mu_t + shift, lam, spec)
            assert moved.lower == pytest.approx(base.lower + shift, abs=1e-9)
            assert moved.upper == pytest.approx(base.upper + shift, abs=1e-9)

    def test_exact_gaussian_grid_against_truncated_moments(self):
        # Fine-threshold grid on a dense discretized Gaussian approaches the
        # closed-form optimum of the truncated-moment objective.
        lam = db.Lambda(np.sqrt(2.0))
        grid = np.linspace(-8, 8, 100_001)
        pdf = norm.pdf(grid)
        probs = pdf / pdf.sum()
        got = db.grid_bounds_discrete(grid, probs, 0.0, lam)
        thresholds = np.linspace(-6, 6, 20_001)
        values = [
            step_mu_w_exact_gaussian(
                db.StepWeight(c, db.bounds.NON_DECREASING), 0.0, 1.0, 0.0, lam
            )
            for c in thresholds
        ]
        assert got.upper == pytest.approx(max(values), abs=1e-6)


class TestLineSearch:
    def test_identity_collapse(self, small_model):
        b = db.capo_bounds_line(small_model, np.array([1.0]), 0.5, db.Lambda(1.0))
        assert b.lower == b.upper == b.mu_tilde

    def test_matches_grid_on_unimodal_objective(self):
        # Single-Gaussian threshold objectives are unimodal, so the early
        # stop is exact.
        rng = np.random.default_rng(7)
        for trial in range(10):
            mu = rng.normal(0, 2)
            mix = db.MixtureDensity(np.array([1.0]), np.array([mu]), np.array([rng.uniform(0.5, 2)]))
            mu_t = mu
            lam = db.Lambda(1.7)
            spec = db.BoundGridSpec(mc_samples=512, seed=200 + trial)
            grid = db.mixture_bounds_grid(mix, mu_t, lam, spec)
            line = db.mixture_bounds_line(mix, mu_t, lam, spec)
            assert line.lower == pytest.approx(grid.lower, abs=1e-12)
            assert line.upper == pytest.approx(grid.upper, abs=1e-12)

    def test_single_candidate_threshold_equals_grid(self):
        rng = np.random.default_rng(8)
        mix = random_mixture(rng)
        mu_t = db.conditional_mean(mix)
        lam = db.Lambda(1.5)
        spec = db.BoundGridSpec(mc_samples=256, seed=31, y_values=(0.3,))
        grid = db.mixture_bounds_grid(mix, mu_t, lam, spec)
        line = db.mixture_bounds_line(mix, mu_t, lam, spec)
        assert line.lower == grid.lower
        assert line.upper == grid.upper

    def test_sandwich(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            b = db.mixture_bounds_line(
                mix, mu_t, db.Lambda(1.3), db.BoundGridSpec(mc_samples=128, seed=trial)
            )
            assert b.lower <= b.mu_tilde <= b.upper


class TestGradientDescent:
    def test_near_identity_interval_is_negligible(self):
        rng = np.random.default_rng(10)
        mix = random_mixture(rng)
        mu_t = db.conditional_mean(mix)
        spec = db.BoundGridSpec(mc_samples=512, seed=41)
        b = db.mixture_bounds_gradient(mix, mu_t, db.Lambda(1.0001), spec)
        ys = sample(mix, 512, np.random.default_rng(41))
        assert b.width <= 1e-3 * (ys.max() - ys.min())

    def test_symmetric_mixture_gives_symmetric_interval(self):
        mix = db.MixtureDensity(
            np.array([0.5, 0.5]), np.array([-1.0, 1.0]), np.array([0.25, 0.25])
        )
        spec = db.BoundGridSpec(mc_samples=8192, seed=13)
        b = db.mixture_bounds_gradient(mix, 0.0, db.Lambda(1.5), spec)
        assert b.lower == pytest.approx(-b.upper, rel=0.02)

    def test_close_to_grid_on_random_mixtures(self):
        rng = np.random.default_rng(12)
        for trial in range(10):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            lam = db.Lambda(1.5)
            spec = db.BoundGridSpec(mc_samples=1024, seed=300 + trial)
            grid = db.mixture_bounds_grid(mix, mu_t, lam, spec)
            grad = db.mixture_bounds_gradient(mix, mu_t, lam, spec)
            tol = 0.02 * grid.width
            assert abs(grad.lower - grid.lower) <= tol
            assert abs(grad.upper - grid.upper) <= tol

    def test_sandwich_and_within_grid(self):
        rng = np.random.default_rng(13)
        for trial in range(10):
            mix = random_mixture(rng)
            mu_t = db.conditional_mean(mix)
            lam = db.Lambda(2.0)
            spec = db.BoundGridSpec(mc_samples=512, seed=400 + trial)
            grad = db.mixture_bounds_gradient(mix, mu_t, lam, spec)
            grid = db.mixture_bounds_grid(mix, mu_t, lam, spec)
            assert grad.lower <= grad.mu_tilde <= grad.upper
            # The relaxation is a surrogate: it cannot beat the exact search
            # by more than numerical slack.
            assert grad.lower >= grid.lower - 1e-9
            assert grad.upper <= grid.upper + 1e-9


class TestApoBounds:
    def test_single_row_equals_pointwise(self, small_model):
        x = np.array([[1.2]])
        lam = db.Lambda(1.4)
        spec = db.BoundGridSpec(mc_samples=256, seed=51)
        apo = db.apo_bounds(small_model, x, 0.5, lam, spec)
        capo = db.capo_bounds_grid(small_model, x[0], 0.5, lam, spec)
        assert apo.lower == pytest.approx(capo.lower, abs=1e-12)
        assert apo.upper == pytest.approx(capo.upper, abs=1e-12)

    def test_duplication_invariance(self, small_model):
        xs = np.array([[0.4], [1.1], [1.9]])
        doubled = np.vstack([xs, xs])
        lam = db.Lambda(1.4)
        spec = db.BoundGridSpec(mc_samples=256, seed=52)
        a = db.apo_bounds(small_model, xs, 0.5, lam, spec)
        b = db.apo_bounds(small_model, doubled, 0.5, lam, spec)
        assert a.lower == pytest.approx(b.lower, abs=1e-12)
        assert a.upper == pytest.approx(b.upper, abs=1e-12)

    def test_empty_rejected(self, small_model):
        with pytest.raises(db.InputError):
            db.apo_bounds(small_model, np.empty((0, 1)), 0.5, db.Lambda(1.2))

    def test_interval_contains_true_apo(self, small_model, synthetic_data_1k):
        lam = db.Lambda(1.6)
        spec = db.BoundGridSpec(mc_samples=512, seed=53)
        b = db.apo_bounds(small_model, synthetic_data_1k.x, 0.5, lam, spec)
        assert b.lower <= db.true_apo(0.5) <= b.upper


class TestRho:
    def test_identity_is_zero(self, small_model):
        assert db.rho(small_model, np.array([1.0]), 0.5, db.Lambda(1.0)) == 0.0

    def test_self_ratio_is_one(self, small_model):
        proxy = db.Lambda(1e4)
        got = db.rho(small_model, np.array([1.0]), 0.5, proxy, lambda_inf_proxy=proxy)
        assert got == pytest.approx(1.0, abs=1e-6)

    def test_monotone_in_lambda(self, small_model):
        x = np.array([1.0])
        spec = db.BoundGridSpec(mc_samples=512, seed=61)
        r12 = db.rho(small_model, x, 0.5, db.Lambda(1.2), spec)
        r16 = db.rho(small_model, x, 0.5, db.Lambda(1.6), spec)
        assert 0.0 < r12 < r16 < 1.0

    def test_proxy_must_dominate(self, small_model):
        with pytest.raises(db.InputError):
            db.rho(
                small_model,
                np.array([1.0]),
                0.5,
                db.Lambda(2.0),
                lambda_inf_proxy=db.Lambda(1.5),
            )


class TestKlDiagnostic:
    def test_self_divergence_is_zero(self):
        mix = db.MixtureDensity(np.array([0.5, 0.5]), np.array([-1.0, 1.0]), np.array([1.0, 1.0]))
        got = db.kl_diagnostic(mix, mix, db.Lambda(1.0))
        assert got.kl == pytest.approx(0.0, abs=1e-10)
        assert got.satisfied

    def test_small_mean_shift_closed_form(self):
        p = STANDARD_NORMAL
        q = db.MixtureDensity(np.array([1.0]), np.array([0.1]), np.array([1.0]))
        got = db.kl_diagnostic(p, q, db.Lambda(float(np.exp(0.006))))
        assert got.kl == pytest.approx(0.005, abs=1e-6)
        assert got.satisfied
        assert not db.kl_diagnostic(p, q, db.Lambda(float(np.exp(0.004)))).satisfied

    def test_large_shift_fails_small_lambda(self):
        p = STANDARD_NORMAL
        q = db.MixtureDensity(np.array([1.0]), np.array([3.0]), np.array([1.0]))
        got = db.kl_diagnostic(p, q, db.Lambda(1.1))
        assert got.kl == pytest.approx(4.5, rel=1e-4)
        assert not got.satisfied

    def test_support_violation(self):
        p = STANDARD_NORMAL
        q = db.MixtureDensity(np.array([1.0]), np.array([60.0]), np.array([1e-4]))
        with pytest.raises(db.SupportViolationError):
            db.kl_diagnostic(p, q, db.Lambda(2.0))


def test_estimator_converges_to_exact_bounds_as_samples_grow():
    # Consistency trend: the Monte-Carlo interval estimator approaches the
    # exact-integral interval of the same density as the sample budget
    # grows (the asymptotic guarantee, checked empirically at three sizes).
    mix = db.MixtureDensity(
        np.array([0.45, 0.55]), np.array([0.6, 1.7]), np.array([0.04, 0.09])
    )
    mu_t = db.conditional_mean(mix)
    lam = db.Lambda(1.5)

    grid = np.linspace(-1.0, 3.5, 200_001)
    pdf = np.exp(db.log_density(mix, grid))
    probs = pdf / pdf.sum()
    exact = db.grid_bounds_discrete(grid, probs, mu_t, lam)

    errors = []
    for m in (64, 1024, 65_536):
        reps = []
        for seed in range(5):
            b = db.mixture_bounds_grid(mix, mu_t, lam, db.BoundGridSpec(mc_samples=m, seed=seed))
            reps.append(abs(b.lower - exact.lower) + abs(b.upper - exact.upper))
        errors.append(np.mean(reps))
    assert errors[0] > errors[2]
    assert errors[2] < 5e-3


def test_sensitivity_bound_validates_ordering():
    with pytest.raises(db.NumericError):
        db.SensitivityBound(
            lower=1.0, upper=0.5, mu_tilde=0.7, lam=db.Lambda(1.5), optimizer="grid"
        )


def test_grid_spec_validation():
    with pytest.raises(db.InputError):
        db.BoundGridSpec(mc_samples=0)
    with pytest.raises(db.InputError):
        db.BoundGridSpec(y_values=(1.0, 1.0))
    with pytest.raises(db.InputError):
        db.BoundGridSpec(engine="other")
