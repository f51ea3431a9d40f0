"""Synthetic benchmark with analytic ground truth.

The generator draws a binary hidden confounder u, a uniform covariate x,
a treatment on the grid {0, 1/N, ..., 1} whose distribution depends on both
x and u, and an outcome

    y = t + x exp(-t x) - gamma_y (u - 0.5)(0.5 x + 1) + noise.

Because u is simulated, everything a sensitivity analysis must be judged
against is available in closed form: the per-u and u-averaged conditional
outcome surfaces, the population dose-response curve, and the exact
treatment-density ratio lambda*(t, x, u) that says how strongly u distorts
treatment assignment at each point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .data import Dataset
from .errors import InputError

X_LOW = 0.1
X_HIGH = 2.0


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 1000
    gamma_t: float = 0.3
    gamma_y: float = 0.5
    noise_var: float = 0.04
    bb_n: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be >= 1")
        if self.bb_n < 1:
            raise InputError("bb_n must be >= 1")
        if self.noise_var <= 0:
            raise InputError("noise_var must be positive")
        if self.gamma_t < 0:
            raise InputError("gamma_t must be >= 0 to keep the treatment density valid")


def beta_binomial_pmf(k, n: int, alpha, beta) -> np.ndarray | float:
    """Beta-Binomial pmf C(n,k) B(k+alpha, n-k+beta) / B(alpha, beta).

    Evaluated in log space via log-Gamma, so n=100 with fractional shape
    parameters stays exact to ~1e-15. Vectorized over k and alpha.
    """
    k_arr = np.asarray(k)
    alpha_arr = np.asarray(alpha, dtype=float)
    beta_arr = np.asarray(beta, dtype=float)
    if np.any(k_arr < 0) or np.any(k_arr > n):
        raise InputError(f"k must lie in [0, {n}]")
    if np.any(alpha_arr <= 0) or np.any(beta_arr <= 0):
        raise InputError("alpha and beta must be positive")
    k_f = k_arr.astype(float)

    def betaln(a, b):
        return gammaln(a) + gammaln(b) - gammaln(a + b)

    log_pmf = (
        gammaln(n + 1.0)
        - gammaln(k_f + 1.0)
        - gammaln(n - k_f + 1.0)
        + betaln(k_f + alpha_arr, n - k_f + beta_arr)
        - betaln(alpha_arr, beta_arr)
    )
    out = np.exp(log_pmf)
    return float(out) if out.ndim == 0 else out


def generate(config: SyntheticConfig) -> Dataset:
    """Draw n realizations of (u, x, t, y), deterministic for a given seed."""
    rng = np.random.default_rng(config.seed)
    u = rng.integers(0, 2, size=config.n).astype(float)
    x = rng.uniform(X_LOW, X_HIGH, size=config.n)
    alpha = x + config.gamma_t * u
    # Beta-Binomial draw via its Beta-then-Binomial composition.
    p = rng.beta(alpha, 1.0)
    k = rng.binomial(config.bb_n, p)
    t = k / config.bb_n
    noise = rng.normal(0.0, np.sqrt(config.noise_var), size=config.n)
    y = true_capo_given_u(x, t, u, config.gamma_y) + noise
    return Dataset(x=x.reshape(-1, 1), t=t, y=y, u=u)


def true_capo(x, t) -> np.ndarray | float:
    """Average potential outcome at (x, t), with the confounder averaged out."""
    x_arr = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    out = t_arr + x_arr * np.exp(-t_arr * x_arr)
    return float(out) if out.ndim == 0 else out


def true_capo_given_u(x, t, u, gamma_y: float = 0.5) -> np.ndarray | float:
    """Conditional potential outcome for a fixed confounder value u."""
    x_arr = np.asarray(x, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    out = true_capo(x_arr, t) - gamma_y * (u_arr - 0.5) * (0.5 * x_arr + 1.0)
    return float(out) if out.ndim == 0 else out


def true_apo(t: float) -> float:
    """Population dose-response: the x-average of true_capo over Unif[0.1, 2]."""
    value, _ = quad(
        lambda x: true_capo(x, t), X_LOW, X_HIGH, epsabs=1e-12, epsrel=1e-12
    )
    return value / (X_HIGH - X_LOW)


def lambda_star(t, x, u, config: SyntheticConfig) -> np.ndarray | float:
    """Exact density ratio of marginal to u-conditional treatment assignment.

    Defined only on the treatment grid {0, 1/N, ..., 1}; off-grid t is an
    input error because the pmf ratio has no meaning between grid points.
    """
    t_arr = np.asarray(t, dtype=float)
    k = t_arr * config.bb_n
    k_round = np.rint(k)
    if np.any(np.abs(k - k_round) > 1e-9):
        raise InputError("t must lie on the treatment grid (t * bb_n integral)")
    k_int = k_round.astype(int)
    x_arr = np.asarray(x, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    pmf0 = beta_binomial_pmf(k_int, config.bb_n, x_arr, 1.0)
    pmf1 = beta_binomial_pmf(k_int, config.bb_n, x_arr + config.gamma_t, 1.0)
    marginal = 0.5 * pmf0 + 0.5 * pmf1
    conditional = np.where(u_arr > 0.5, pmf1, pmf0)
    out = marginal / conditional
    return float(out) if np.ndim(out) == 0 else out


ORACLE_COLUMNS = ("x", "t", "u", "capo_u", "capo", "lambda_star")


def oracle_table(data: Dataset, config: SyntheticConfig) -> np.ndarray:
    """Per-row ground truth for the generated data.

    Columns: x, t, u, capo_u (conditional on the row's u), capo (u averaged
    out), lambda_star. Requires the dataset to carry its u column.
    """
    if data.u is None:
        raise InputError("oracle table requires the u column")
    x = data.x[:, 0]
    capo_u = true_capo_given_u(x, data.t, data.u, config.gamma_y)
    capo = true_capo(x, data.t)
    lam = lambda_star(data.t, x, data.u, config)
    return np.column_stack([x, data.t, data.u, capo_u, capo, lam])


def write_oracle_csv(path, data: Dataset, config: SyntheticConfig) -> None:
    table = oracle_table(data, config)
    with open(path, "w", newline="") as f:
        f.write(",".join(ORACLE_COLUMNS) + "\n")
        for row in table:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
