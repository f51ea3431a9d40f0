"""Integral estimators for expectations of h(y) under a Gaussian mixture.

Two engines are provided: plain Monte-Carlo averaging over mixture draws,
and Gauss-Hermite quadrature (exact for polynomials of degree <= 2m - 1
against a Gaussian weight). Monte-Carlo is the default everywhere; the
quadrature rule is preferable only for smooth integrands, since a hard step
integrand is approximated with bias near its threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .errors import InputError, NumericError
from .mixture import MixtureDensity, sample

_SQRT_PI = float(np.sqrt(np.pi))
_MAX_ORDER = 128


@dataclass(frozen=True)
class GaussHermiteRule:
    """Nodes and weights for integrating exp(-y^2) f(y) over the real line.

    Nodes are the roots of the physicists' Hermite polynomial of the given
    order; weights are positive and sum to sqrt(pi).
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray


def _hermite_log_abs(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed magnitude and log-scale of H_n(x), physicists' convention.

    Returns (v, e) with H_n(x) = v * exp(e) and |v| in {0} U [~1, ~2x].
    The running rescale keeps the recurrence in range for orders where the
    raw polynomial values would overflow double precision.
    """
    x = np.asarray(x, dtype=float)
    v_prev = np.ones_like(x)
    e_prev = np.zeros_like(x)
    if n == 0:
        return v_prev, e_prev
    v = 2.0 * x
    e = np.zeros_like(x)
    for k in range(1, n):
        v_next = 2.0 * x * v - 2.0 * k * v_prev * np.exp(e_prev - e)
        scale = np.abs(v_next)
        scale = np.where(scale > 0, scale, 1.0)
        v_prev, e_prev = v, e
        v = v_next / scale
        e = e + np.log(scale)
    return v, e


def hermite_rule(m: int) -> GaussHermiteRule:
    """Build the order-m Gauss-Hermite rule.

    Nodes come from the eigenvalues of the symmetric tridiagonal recurrence
    matrix, polished with one Newton step on the scaled three-term
    recurrence. Weights use the closed form
    2^(m-1) m! sqrt(pi) / (m^2 H_{m-1}(y_i)^2), evaluated in log space so
    the factorial and polynomial magnitudes never overflow.
    """
    if not (1 <= m <= _MAX_ORDER):
        raise InputError(f"rule order must be in [1, {_MAX_ORDER}], got {m}")
    if m == 1:
        return GaussHermiteRule(order=1, nodes=np.zeros(1), weights=np.array([_SQRT_PI]))

    # Jacobi matrix of the orthonormal Hermite recurrence: zero diagonal,
    # off-diagonal sqrt(k/2).
    off = np.sqrt(np.arange(1, m) / 2.0)
    nodes = eigh_tridiagonal(np.zeros(m), off, eigvals_only=True)

    # Newton polish: x <- x - H_m(x) / (2 m H_{m-1}(x)).
    for _ in range(2):
        v_m, e_m = _hermite_log_abs(m, nodes)
        v_m1, e_m1 = _hermite_log_abs(m - 1, nodes)
        nodes = nodes - (v_m / v_m1) * np.exp(e_m - e_m1) / (2.0 * m)

    # Enforce exact symmetry about zero (the middle node of an odd rule
    # becomes exactly 0).
    nodes = np.sort(nodes)
    nodes = 0.5 * (nodes - nodes[::-1])

    v_m1, e_m1 = _hermite_log_abs(m - 1, nodes)
    log_abs_h = np.log(np.abs(v_m1)) + e_m1
    log_w = (
        (m - 1) * np.log(2.0)
        + gammaln(m + 1)
        + 0.5 * np.log(np.pi)
        - 2.0 * np.log(m)
        - 2.0 * log_abs_h
    )
    weights = np.exp(log_w)
    weights = 0.5 * (weights + weights[::-1])
    return GaussHermiteRule(order=m, nodes=nodes, weights=weights)


def mc_expect(
    h: Callable[[np.ndarray], np.ndarray],
    mix: MixtureDensity,
    m: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo estimate of E[h(y)]: the mean of h over m mixture draws."""
    if m < 1:
        raise InputError("sample count must be >= 1")
    ys = sample(mix, m, rng)
    values = np.asarray(h(ys), dtype=float)
    values = np.broadcast_to(values, ys.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericError(f"integrand returned non-finite value at sample index {i} (y={ys[i]!r})")
    return float(np.mean(values))


def gh_expect_gaussian(
    h: Callable[[np.ndarray], np.ndarray],
    mu: float,
    sigma: float,
    rule: GaussHermiteRule,
) -> float:
    """Quadrature estimate of E[h(y)] for y ~ Normal(mu, sigma^2).

    Applies the change of variables y = sqrt(2) sigma z + mu and sums
    weights/sqrt(pi) times h at the transformed nodes; exact for h
    polynomial of degree <= 2 * order - 1.
    """
    points = np.sqrt(2.0) * sigma * rule.nodes + mu
    values = np.broadcast_to(np.asarray(h(points), dtype=float), points.shape)
    return float(np.dot(rule.weights, values) / _SQRT_PI)


def gh_expect_mixture(
    h: Callable[[np.ndarray], np.ndarray],
    mix: MixtureDensity,
    rule: GaussHermiteRule,
) -> float:
    """Quadrature estimate of E[h(y)] under a Gaussian mixture.

    The mixture expectation is the weight-averaged single-Gaussian estimate
    over components.
    """
    sigmas = np.sqrt(mix.variances)
    total = 0.0
    for pi_j, mu_j, sigma_j in zip(mix.weights, mix.means, sigmas):
        total += pi_j * gh_expect_gaussian(h, mu_j, sigma_j, rule)
    return float(total)
