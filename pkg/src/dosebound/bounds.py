"""Ignorance intervals for conditional and average potential outcomes.

Given a fitted conditional density p(y | t, x) with mean mu_tilde and a
sensitivity parameter L >= 1 bounding how far treatment assignment may
deviate from ignorability, the attainable outcome means form an interval
around mu_tilde. Every candidate is scored by

    value(w) = mu_tilde + I(w(y) (y - mu_tilde)) / (1/(L^2 - 1) + I(w(y)))

over weightings w: R -> [0, 1]; the lower bound is the infimum over
non-increasing step weightings and the upper bound the supremum over
non-decreasing ones. Integrals I are Monte-Carlo means over one frozen
sample set per (x, t), reused across all thresholds and all L values so
that intervals nest exactly as L grows.

Three optimizers are provided: exhaustive grid search over candidate
thresholds, an early-stopping line search (exact only when the threshold
objective is unimodal), and gradient descent on a sigmoid relaxation of
the step weighting.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.special import expit

from .errors import (
    DegenerateDistributionError,
    InputError,
    NumericError,
    SupportViolationError,
)
from .mixture import MixtureDensity, conditional_mean, log_density, sample
from .quadrature import gh_expect_mixture, hermite_rule

NON_INCREASING = "non_increasing"
NON_DECREASING = "non_decreasing"

_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class Lambda:
    """Sensitivity parameter: assumed bound on the treatment-density ratio.

    value = 1 encodes no hidden confounding; the derived gamma term
    1 / (value^2 - 1) is the damping constant in the bound objective and
    becomes infinite at 1 (handled by short-circuiting, never evaluated).
    """

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 1.0:
            raise InputError(f"sensitivity parameter must be >= 1, got {self.value}")

    @property
    def is_identity(self) -> bool:
        """True when the parameter is (numerically) exactly 1."""
        return self.value < 1.0 + _IDENTITY_TOL

    @property
    def gamma(self) -> float:
        if self.is_identity:
            return math.inf
        return 1.0 / (self.value**2 - 1.0)


@dataclass(frozen=True)
class StepWeight:
    """Heaviside weighting: 1 strictly below (non-increasing direction) or
    strictly above (non-decreasing direction) the threshold, else 0."""

    threshold: float
    direction: str

    def __post_init__(self):
        if self.direction not in (NON_INCREASING, NON_DECREASING):
            raise InputError(f"unknown direction {self.direction!r}")

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.direction == NON_INCREASING:
            return (y < self.threshold).astype(float)
        return (y > self.threshold).astype(float)


@dataclass(frozen=True)
class SigmoidWeight:
    """Smooth surrogate for a step weighting.

    The effective transition scale is softplus(s) + zeta, so any real s is
    a valid parameter and the scale never collapses to zero.
    """

    y_star: float
    s: float
    direction: str
    zeta: float = 1e-3

    def __post_init__(self):
        if self.direction not in (NON_INCREASING, NON_DECREASING):
            raise InputError(f"unknown direction {self.direction!r}")
        if self.zeta <= 0:
            raise InputError("zeta must be positive")

    @property
    def scale(self) -> float:
        return float(np.logaddexp(0.0, self.s) + self.zeta)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.direction == NON_INCREASING:
            return expit((self.y_star - y) / self.scale)
        return expit((y - self.y_star) / self.scale)


@dataclass(frozen=True)
class SensitivityBound:
    """One ignorance interval: lower <= mu_tilde <= upper.

    argmin_threshold / argmax_threshold record the step location that
    attained each side (None for aggregated or collapsed results;
    +-inf means no-mass / full-mass weightings won).
    """

    lower: float
    upper: float
    mu_tilde: float
    lam: Lambda
    optimizer: str
    argmin_threshold: float | None = None
    argmax_threshold: float | None = None
    converged: bool = True

    def __post_init__(self):
        tol = 1e-9 * max(1.0, abs(self.mu_tilde))
        if not (self.lower <= self.mu_tilde + tol and self.upper >= self.mu_tilde - tol):
            raise NumericError(
                f"bound violates lower <= mu_tilde <= upper: "
                f"({self.lower}, {self.mu_tilde}, {self.upper})"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class BoundGridSpec:
    """Integration and threshold-candidate settings for one bound evaluation.

    mc_samples outcome draws are frozen per (x, t) and shared by every
    threshold and every sensitivity value. Candidate thresholds default to
    the deduplicated draws themselves, extended by no-mass/full-mass
    boundary weightings; threshold_mode="even" switches to an evenly
    spaced grid over [min - sd, max + sd]; explicit y_values are used
    verbatim.
    """

    mc_samples: int = 1024
    seed: int = 0
    y_values: tuple[float, ...] | None = None
    threshold_mode: str = "samples"
    threshold_count: int = 65
    engine: str = "mc"
    gh_order: int = 64

    def __post_init__(self):
        if self.mc_samples < 1:
            raise InputError("mc_samples must be >= 1")
        if self.threshold_mode not in ("samples", "even"):
            raise InputError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.engine not in ("mc", "gh"):
            raise InputError(f"unknown engine {self.engine!r}")
        if self.y_values is not None:
            vals = np.asarray(self.y_values, dtype=float)
            if vals.size == 0:
                raise InputError("y_values must be non-empty when given")
            if np.any(np.diff(vals) <= 0):
                raise InputError("y_values must be strictly increasing")
            object.__setattr__(self, "y_values", tuple(float(v) for v in vals))


@dataclass(frozen=True)
class GradientOpts:
    """Knobs for the sigmoid-relaxed gradient optimizer.

    lr=None scales the step size to the sample standard deviation. Restarts
    initialize the transition location at evenly spaced sample percentiles
    (10th/50th/90th for the default three). The optimum sharpens the
    transition toward the zeta floor, so late iterations drift slowly in the
    pre-softplus scale; tol is the parameter-step size below which that
    drift counts as converged.
    """

    lr: float | None = None
    max_iters: int = 4000
    tol: float = 1e-4
    zeta: float = 1e-3
    restarts: int = 3

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise InputError("max_iters and restarts must be >= 1")
        if self.tol <= 0 or self.zeta <= 0:
            raise InputError("tol and zeta must be positive")


# -- frozen sample machinery --------------------------------------------


@dataclass(frozen=True)
class _FrozenIntegral:
    """Sorted outcome points with probability masses and prefix sums."""

    values: np.ndarray
    masses: np.ndarray
    prefix_mass: np.ndarray
    prefix_wy: np.ndarray

    @classmethod
    def from_points(cls, values: np.ndarray, masses: np.ndarray) -> "_FrozenIntegral":
        order = np.argsort(values, kind="stable")
        v = values[order]
        m = masses[order]
        return cls(
            values=v,
            masses=m,
            prefix_mass=np.concatenate([[0.0], np.cumsum(m)]),
            prefix_wy=np.concatenate([[0.0], np.cumsum(m * v)]),
        )

    @classmethod
    def from_samples(cls, ys: np.ndarray) -> "_FrozenIntegral":
        return cls.from_points(ys, np.full(ys.shape, 1.0 / ys.size))

    @property
    def total_mass(self) -> float:
        return float(self.prefix_mass[-1])

    @property
    def total_wy(self) -> float:
        return float(self.prefix_wy[-1])

    def step_values(self, thresholds: np.ndarray, mu_tilde: float, gamma: float, direction: str):
        """Bound objective at each threshold, via prefix sums."""
        thresholds = np.asarray(thresholds, dtype=float)
        if direction == NON_INCREASING:
            c = np.searchsorted(self.values, thresholds, side="left")
            d = self.prefix_mass[c]
            n = self.prefix_wy[c] - mu_tilde * d
        else:
            c = np.searchsorted(self.values, thresholds, side="right")
            d = self.total_mass - self.prefix_mass[c]
            n = (self.total_wy - self.prefix_wy[c]) - mu_tilde * d
        return mu_tilde + n / (gamma + d)


def _rng_for(spec: BoundGridSpec, x=None, t: float | None = None) -> np.random.Generator:
    """Per-(x, t) random stream derived from the spec seed.

    The stream depends on the covariate content (not its position in a
    batch), so duplicated rows reuse identical draws and a single-row
    average equals the pointwise result.
    """
    if x is None:
        return np.random.default_rng(spec.seed)
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(np.asarray(x, dtype=float)).tobytes())
    h.update(np.float64(t).tobytes())
    token = int.from_bytes(h.digest(), "little")
    return np.random.default_rng(np.random.SeedSequence([spec.seed, token]))


def _draw(mix: MixtureDensity, spec: BoundGridSpec, rng: np.random.Generator) -> np.ndarray:
    return sample(mix, spec.mc_samples, rng)


def _candidate_thresholds(ys: np.ndarray, spec: BoundGridSpec) -> np.ndarray:
    if spec.y_values is not None:
        return np.asarray(spec.y_values, dtype=float)
    if spec.threshold_mode == "even":
        sd = float(np.std(ys))
        return np.linspace(ys.min() - sd, ys.max() + sd, spec.threshold_count)
    # Deduplicated draws, plus boundary thresholds so the no-mass and
    # full-mass weightings are always candidates.
    return np.concatenate([[-np.inf], np.unique(ys), [np.inf]])


def _collapsed(mu_tilde: float, lam: Lambda, optimizer: str) -> SensitivityBound:
    return SensitivityBound(
        lower=mu_tilde, upper=mu_tilde, mu_tilde=mu_tilde, lam=lam, optimizer=optimizer
    )


# -- single-evaluation estimator ----------------------------------------


def mu_w(
    w: StepWeight | SigmoidWeight | Callable[[np.ndarray], np.ndarray],
    mix: MixtureDensity,
    mu_tilde: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
) -> float:
    """Bound objective for one explicit weighting.

    Uses the spec's frozen Monte-Carlo draws (engine="mc") or Gauss-Hermite
    quadrature (engine="gh"; only sensible for smooth weightings).
    """
    if lam.is_identity:
        raise InputError("objective undefined at sensitivity 1; callers short-circuit it")
    gamma = lam.gamma
    if spec.engine == "gh":
        rule = hermite_rule(spec.gh_order)
        n = gh_expect_mixture(lambda y: np.asarray(w(y)) * (y - mu_tilde), mix, rule)
        d = gh_expect_mixture(lambda y: np.asarray(w(y), dtype=float), mix, rule)
    else:
        ys = _draw(mix, spec, _rng_for(spec))
        w_vals = np.asarray(w(ys), dtype=float)
        if np.any(w_vals < -1e-9) or np.any(w_vals > 1.0 + 1e-9):
            raise InputError("weighting must map into [0, 1]")
        n = float(np.mean(w_vals * (ys - mu_tilde)))
        d = float(np.mean(w_vals))
    value = mu_tilde + n / (gamma + d)
    if not np.isfinite(value):
        raise NumericError(f"non-finite bound objective (n={n}, d={d}, gamma={gamma})")
    return value


def step_mu_w_exact_gaussian(
    w: StepWeight,
    mu: float,
    sigma: float,
    mu_tilde: float,
    lam: Lambda,
) -> float:
    """Bound objective for a step weighting under a single Gaussian, with the
    truncated-moment integrals in closed form (no sampling).

    Serves as the analytic cross-check for the Monte-Carlo estimator: for
    y ~ Normal(mu, sigma^2) and z = (threshold - mu) / sigma,
    E[1(y > c)] = 1 - Phi(z) and E[y 1(y > c)] = mu (1 - Phi(z)) + sigma phi(z).
    """
    if lam.is_identity:
        raise InputError("objective undefined at sensitivity 1")
    from scipy.stats import norm

    z = (w.threshold - mu) / sigma
    if w.direction == NON_DECREASING:
        mass = 1.0 - norm.cdf(z)
        first_moment = mu * mass + sigma * norm.pdf(z)
    else:
        mass = norm.cdf(z)
        first_moment = mu * mass - sigma * norm.pdf(z)
    n = first_moment - mu_tilde * mass
    return mu_tilde + n / (lam.gamma + mass)


# -- grid search ---------------------------------------------------------


def _grid_from_integral(
    fi: _FrozenIntegral,
    mu_tilde: float,
    lam: Lambda,
    thresholds: np.ndarray,
    optimizer: str = "grid",
) -> SensitivityBound:
    gamma = lam.gamma
    lower_vals = fi.step_values(thresholds, mu_tilde, gamma, NON_INCREASING)
    upper_vals = fi.step_values(thresholds, mu_tilde, gamma, NON_DECREASING)
    i_lo = int(np.argmin(lower_vals))
    i_hi = int(np.argmax(upper_vals))
    # The no-mass weighting (value mu_tilde) is in the candidate class even
    # when an explicit threshold list does not realize it.
    lower = min(float(lower_vals[i_lo]), mu_tilde)
    upper = max(float(upper_vals[i_hi]), mu_tilde)
    return SensitivityBound(
        lower=lower,
        upper=upper,
        mu_tilde=mu_tilde,
        lam=lam,
        optimizer=optimizer,
        argmin_threshold=float(thresholds[i_lo]),
        argmax_threshold=float(thresholds[i_hi]),
    )


def mixture_bounds_grid(
    mix: MixtureDensity,
    mu_tilde: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    rng: np.random.Generator | None = None,
) -> SensitivityBound:
    """Grid-search interval for a fixed mixture and point estimate."""
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "grid")
    ys = _draw(mix, spec, rng if rng is not None else _rng_for(spec))
    fi = _FrozenIntegral.from_samples(ys)
    return _grid_from_integral(fi, mu_tilde, lam, _candidate_thresholds(ys, spec))


def grid_bounds_discrete(
    values: Sequence[float],
    probs: Sequence[float],
    mu_tilde: float,
    lam: Lambda,
) -> SensitivityBound:
    """Grid-search interval for a finite-support outcome with exact masses.

    Integrals are exact weighted sums, so the result can be compared at
    machine precision against exhaustive search over all binary
    weightings of the support.
    """
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if v.size == 0 or v.shape != p.shape:
        raise InputError("values and probs must be non-empty and congruent")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InputError("probs must be non-negative and sum to 1")
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "grid")
    fi = _FrozenIntegral.from_points(v, p)
    thresholds = np.concatenate([[-np.inf], np.unique(v), [np.inf]])
    return _grid_from_integral(fi, mu_tilde, lam, thresholds)


def capo_bounds_grid(model, x, t: float, lam: Lambda, spec: BoundGridSpec = BoundGridSpec()):
    """Conditional-outcome interval at one (x, t) by exhaustive grid search."""
    mix = model.evaluate(x, t)
    mu_tilde = conditional_mean(mix)
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "grid")
    return mixture_bounds_grid(mix, mu_tilde, lam, spec, rng=_rng_for(spec, x, t))


# -- line search ----------------------------------------------------------


def _line_scan(fi, thresholds, mu_tilde, gamma, direction):
    """Walk candidates in ascending order; stop at the first step that fails
    to strictly improve. Exact only for unimodal threshold objectives."""
    best = math.inf if direction == NON_INCREASING else -math.inf
    arg = None
    for y_h in thresholds:
        value = float(fi.step_values(np.array([y_h]), mu_tilde, gamma, direction)[0])
        if direction == NON_INCREASING:
            if value < best:
                best, arg = value, float(y_h)
            else:
                break
        else:
            if value > best:
                best, arg = value, float(y_h)
            else:
                break
    return best, arg


def mixture_bounds_line(
    mix: MixtureDensity,
    mu_tilde: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    rng: np.random.Generator | None = None,
) -> SensitivityBound:
    """Early-stopping line-search interval for a fixed mixture."""
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "line")
    ys = _draw(mix, spec, rng if rng is not None else _rng_for(spec))
    fi = _FrozenIntegral.from_samples(ys)
    thresholds = _candidate_thresholds(ys, spec)
    thresholds = thresholds[np.isfinite(thresholds)]
    if thresholds.size == 0:
        raise InputError("no finite candidate thresholds")
    gamma = lam.gamma
    lower, arg_lo = _line_scan(fi, thresholds, mu_tilde, gamma, NON_INCREASING)
    upper, arg_hi = _line_scan(fi, thresholds, mu_tilde, gamma, NON_DECREASING)
    # Boundary weightings (no mass) are always admissible candidates.
    return SensitivityBound(
        lower=min(lower, mu_tilde),
        upper=max(upper, mu_tilde),
        mu_tilde=mu_tilde,
        lam=lam,
        optimizer="line",
        argmin_threshold=arg_lo,
        argmax_threshold=arg_hi,
    )


def capo_bounds_line(model, x, t: float, lam: Lambda, spec: BoundGridSpec = BoundGridSpec()):
    """Conditional-outcome interval at one (x, t) by early-stopping line search."""
    mix = model.evaluate(x, t)
    mu_tilde = conditional_mean(mix)
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "line")
    return mixture_bounds_line(mix, mu_tilde, lam, spec, rng=_rng_for(spec, x, t))


# -- gradient descent on the sigmoid relaxation ---------------------------


def _sigmoid_objective(omega, direction, ys, resid, gamma, zeta):
    """Objective value and its gradient in (location, pre-softplus scale)."""
    y_star, s = omega
    sig_s = expit(s)
    c = float(np.logaddexp(0.0, s)) + zeta
    u = (y_star - ys) / c if direction == NON_INCREASING else (ys - y_star) / c
    w = expit(u)
    dw_du = w * (1.0 - w)
    du_dy = 1.0 / c if direction == NON_INCREASING else -1.0 / c
    du_ds = -u * sig_s / c

    n = float(np.mean(w * resid))
    d = float(np.mean(w))
    denom = gamma + d
    value = n / denom

    dn_dy = float(np.mean(dw_du * resid)) * du_dy
    dd_dy = float(np.mean(dw_du)) * du_dy
    dn_ds = float(np.mean(dw_du * du_ds * resid))
    dd_ds = float(np.mean(dw_du * du_ds))
    grad = np.array(
        [
            (dn_dy * denom - n * dd_dy) / denom**2,
            (dn_ds * denom - n * dd_ds) / denom**2,
        ]
    )
    return value, grad


def mixture_bounds_gradient(
    mix: MixtureDensity,
    mu_tilde: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    opts: GradientOpts = GradientOpts(),
    rng: np.random.Generator | None = None,
) -> SensitivityBound:
    """Interval from gradient descent over sigmoid-relaxed step weightings.

    Each direction runs opts.restarts descents from percentile-spaced
    starting locations and keeps the best endpoint; iteration stops when
    the parameter step shrinks below opts.tol. A restart that exhausts
    max_iters marks the result non-converged. The no-mass weighting is
    always admitted as a candidate, so the interval brackets mu_tilde.
    """
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "gradient")
    ys = _draw(mix, spec, rng if rng is not None else _rng_for(spec))
    resid = ys - mu_tilde
    gamma = lam.gamma
    sd = float(np.std(ys))
    lr = opts.lr if opts.lr is not None else 0.3 * max(sd, 1e-12)
    if opts.restarts == 1:
        percentiles = [50.0]
    else:
        percentiles = np.linspace(10.0, 90.0, opts.restarts)
    starts = np.percentile(ys, percentiles)

    results: dict[str, tuple[float, float | None, bool]] = {}
    for direction, sign in ((NON_INCREASING, -1.0), (NON_DECREASING, +1.0)):
        best_value = 0.0  # correction of the no-mass weighting
        best_arg: float | None = None
        best_conv = True
        for y0 in starts:
            omega = np.array([float(y0), 0.0])
            converged = False
            value, grad = _sigmoid_objective(omega, direction, ys, resid, gamma, opts.zeta)
            for _ in range(opts.max_iters):
                omega_next = omega + sign * lr * grad
                delta = float(np.linalg.norm(omega_next - omega))
                omega = omega_next
                value, grad = _sigmoid_objective(omega, direction, ys, resid, gamma, opts.zeta)
                if delta <= opts.tol:
                    converged = True
                    break
            improved = value < best_value if direction == NON_INCREASING else value > best_value
            if improved:
                best_value, best_arg, best_conv = value, float(omega[0]), converged
        results[direction] = (best_value, best_arg, best_conv)

    lo_corr, arg_lo, conv_lo = results[NON_INCREASING]
    hi_corr, arg_hi, conv_hi = results[NON_DECREASING]
    return SensitivityBound(
        lower=mu_tilde + min(lo_corr, 0.0),
        upper=mu_tilde + max(hi_corr, 0.0),
        mu_tilde=mu_tilde,
        lam=lam,
        optimizer="gradient",
        argmin_threshold=arg_lo,
        argmax_threshold=arg_hi,
        converged=conv_lo and conv_hi,
    )


def capo_bounds_gradient(
    model,
    x,
    t: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    opts: GradientOpts = GradientOpts(),
) -> SensitivityBound:
    """Conditional-outcome interval at one (x, t) by the gradient optimizer."""
    mix = model.evaluate(x, t)
    mu_tilde = conditional_mean(mix)
    if lam.is_identity:
        return _collapsed(mu_tilde, lam, "gradient")
    return mixture_bounds_gradient(mix, mu_tilde, lam, spec, opts, rng=_rng_for(spec, x, t))


_OPTIMIZERS = {
    "grid": mixture_bounds_grid,
    "line": mixture_bounds_line,
    "gradient": mixture_bounds_gradient,
}


def capo_bounds_batch(
    model,
    xs: np.ndarray,
    t: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    optimizer: str = "grid",
    opts: GradientOpts = GradientOpts(),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-covariate intervals at one treatment: (lowers, uppers, mu_tildes).

    The per-row random streams derive from the covariate content, so
    results are invariant to row order and duplication.
    """
    if optimizer not in _OPTIMIZERS:
        raise InputError(f"unknown optimizer {optimizer!r}")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] == 0:
        raise InputError("xs must be non-empty")
    weights_all, means_all, vars_all = model.evaluate_batch(xs, np.full(xs.shape[0], t))
    lowers = np.empty(xs.shape[0])
    uppers = np.empty(xs.shape[0])
    mus = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        mix = MixtureDensity(weights_all[i], means_all[i], vars_all[i])
        mu_tilde = conditional_mean(mix)
        if lam.is_identity:
            lowers[i] = uppers[i] = mus[i] = mu_tilde
            continue
        kwargs = {"rng": _rng_for(spec, xs[i], t)}
        if optimizer == "gradient":
            kwargs["opts"] = opts
        b = _OPTIMIZERS[optimizer](mix, mu_tilde, lam, spec, **kwargs)
        lowers[i], uppers[i], mus[i] = b.lower, b.upper, b.mu_tilde
    return lowers, uppers, mus


def apo_bounds(
    model,
    xs: np.ndarray,
    t: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    optimizer: str = "grid",
    opts: GradientOpts = GradientOpts(),
) -> SensitivityBound:
    """Population-level interval: the mean of per-covariate intervals."""
    lowers, uppers, mus = capo_bounds_batch(model, xs, t, lam, spec, optimizer, opts)
    return SensitivityBound(
        lower=float(np.mean(lowers)),
        upper=float(np.mean(uppers)),
        mu_tilde=float(np.mean(mus)),
        lam=lam,
        optimizer=optimizer,
    )


# -- interpretation helpers ----------------------------------------------


def rho(
    model,
    x,
    t: float,
    lam: Lambda,
    spec: BoundGridSpec = BoundGridSpec(),
    lambda_inf_proxy: Lambda = Lambda(1e4),
) -> float:
    """Interval width as a fraction of its no-assumptions width.

    The unbounded-outcome limit is approximated by evaluating the interval
    at a very large sensitivity value (default 1e4) on the same frozen
    sample set; the ratio is clipped to [0, 1].
    """
    if lambda_inf_proxy.value < lam.value and not lam.is_identity:
        raise InputError("lambda_inf_proxy must be at least the evaluated sensitivity")
    denom = capo_bounds_grid(model, x, t, lambda_inf_proxy, spec).width
    if denom <= 0.0 or not np.isfinite(denom):
        raise DegenerateDistributionError(
            "limit interval has no width; outcome distribution has no spread"
        )
    if lam.is_identity:
        return 0.0
    num = capo_bounds_grid(model, x, t, lam, spec).width
    return float(np.clip(num / denom, 0.0, 1.0))


@dataclass(frozen=True)
class KLDiagnostic:
    kl: float
    satisfied: bool


def kl_diagnostic(
    mix_nominal: MixtureDensity,
    mix_marginal: MixtureDensity,
    lam: Lambda,
    grid_points: int = 32769,
) -> KLDiagnostic:
    """Check whether log(sensitivity) can absorb the divergence between the
    treatment-conditional and marginal outcome densities.

    KL(p_nominal || p_marginal) is integrated on a dense grid spanning both
    mixtures; the hypothesized sensitivity is consistent when the
    divergence does not exceed log(lambda).
    """
    sd_n = np.sqrt(mix_nominal.variances)
    sd_m = np.sqrt(mix_marginal.variances)
    lo = min((mix_nominal.means - 10 * sd_n).min(), (mix_marginal.means - 10 * sd_m).min())
    hi = max((mix_nominal.means + 10 * sd_n).max(), (mix_marginal.means + 10 * sd_m).max())
    grid = np.linspace(lo, hi, grid_points)
    log_p = log_density(mix_nominal, grid)
    log_q = log_density(mix_marginal, grid)
    if np.any((log_p > np.log(1e-12)) & (log_q < np.log(1e-280))):
        raise SupportViolationError(
            "marginal density vanishes where the nominal density has mass"
        )
    integrand = np.exp(log_p) * (log_p - log_q)
    kl = float(simpson(integrand, x=grid))
    kl = max(kl, 0.0)
    return KLDiagnostic(kl=kl, satisfied=bool(kl <= np.log(lam.value)))
