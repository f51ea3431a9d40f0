"""One-dimensional Gaussian mixtures at a fixed covariate/treatment point.

This is the common currency between the conditional density model, the
integral estimators, and the interval optimizers: a frozen set of weights,
means, and variances describing p(y) at one (x, t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MixtureDensity:
    """Gaussian mixture with component weights, means, and variances.

    Invariants: weights sum to one (within 1e-9), variances are strictly
    positive, and all three vectors share one length.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        m = np.asarray(self.means, dtype=float).ravel()
        v = np.asarray(self.variances, dtype=float).ravel()
        if not (w.shape == m.shape == v.shape) or w.size == 0:
            raise InputError("weights, means, variances must share one non-zero length")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError("mixture weights must be non-negative and sum to 1")
        if np.any(v <= 0):
            raise InputError("mixture variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.size

    def shift(self, c: float) -> "MixtureDensity":
        """Mixture of y + c."""
        return MixtureDensity(self.weights, self.means + c, self.variances)


def log_density(mix: MixtureDensity, y) -> np.ndarray | float:
    """log p(y) under the mixture, via a stable log-sum-exp.

    Accepts a scalar or an array of evaluation points.
    """
    y_arr = np.asarray(y, dtype=float)
    z = y_arr[..., None] - mix.means
    log_comp = (
        np.log(mix.weights)
        - 0.5 * (_LOG_2PI + np.log(mix.variances))
        - 0.5 * z * z / mix.variances
    )
    top = np.max(log_comp, axis=-1)
    out = top + np.log(np.sum(np.exp(log_comp - top[..., None]), axis=-1))
    return float(out) if np.isscalar(y) else out


def density(mix: MixtureDensity, y) -> np.ndarray | float:
    """p(y) under the mixture."""
    return np.exp(log_density(mix, y))


def conditional_mean(mix: MixtureDensity) -> float:
    """First moment of the mixture: sum of weight * mean."""
    return float(np.dot(mix.weights, mix.means))


def variance(mix: MixtureDensity) -> float:
    """Second central moment of the mixture."""
    mean = conditional_mean(mix)
    second = np.dot(mix.weights, mix.variances + mix.means**2)
    return float(second - mean * mean)


def sample(mix: MixtureDensity, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m i.i.d. outcomes: pick a component by weight, then draw a normal.

    The component choice consumes rng state independently of the component
    parameters, so shifting all means shifts the draws by exactly the same
    amount for a generator in the same state.
    """
    if m < 1:
        raise InputError("sample count must be >= 1")
    comps = rng.choice(mix.n_components, size=m, p=mix.weights)
    z = rng.standard_normal(m)
    return mix.means[comps] + np.sqrt(mix.variances[comps]) * z
