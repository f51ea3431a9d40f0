"""Conditional outcome density model p(y | t, x).

A residual feed-forward network maps standardized covariates to features,
the standardized treatment is concatenated to the features (single-model
S-learner layout), and a second residual stack feeds three linear heads
that emit, per mixture component: a weight logit, a mean, and a
pre-softplus scale. Training maximizes the Gaussian-mixture log-likelihood
with explicit analytic gradients and plain mini-batch SGD, so runs are
bitwise reproducible for a fixed seed.

Inputs and outcome are standardized to zero mean and unit variance using
training statistics stored on the model; `evaluate` returns mixtures in
the original outcome units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .errors import InputError, TrainingDivergedError
from .mixture import MixtureDensity

_LOG_2PI = float(np.log(2.0 * np.pi))
FORMAT_VERSION = 1


@dataclass(frozen=True)
class DensityModelConfig:
    hidden_units: int = 96
    depth: int = 4
    n_components: int = 24
    negative_slope: float = 0.05
    learning_rate: float = 0.0015
    batch_size: int = 32
    epochs: int = 500
    sigma_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_units", "depth", "n_components", "batch_size"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.sigma_floor <= 0:
            raise InputError("sigma_floor must be positive")
        if self.negative_slope < 0:
            raise InputError("negative_slope must be >= 0")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")


@dataclass(frozen=True)
class Standardization:
    """Affine input/output scalings fitted on the training data."""

    x_mean: np.ndarray
    x_std: np.ndarray
    t_mean: float
    t_std: float
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, data: Dataset) -> "Standardization":
        def safe_std(a, axis=None):
            s = np.std(a, axis=axis)
            return np.where(s < 1e-12, 1.0, s) if np.ndim(s) else (1.0 if s < 1e-12 else float(s))

        return cls(
            x_mean=np.mean(data.x, axis=0),
            x_std=np.asarray(safe_std(data.x, axis=0), dtype=float),
            t_mean=float(np.mean(data.t)),
            t_std=safe_std(data.t),
            y_mean=float(np.mean(data.y)),
            y_std=safe_std(data.y),
        )


@dataclass
class ConditionalDensityModel:
    """Trained (or freshly initialized) conditional mixture density.

    Immutable in spirit after training: all evaluation entry points are
    pure functions of the stored weights, so a model can be shared freely
    across threads.
    """

    config: DensityModelConfig
    standardization: Standardization
    params: dict[str, np.ndarray]
    d: int
    train_loss_per_epoch: list[float] = field(default_factory=list)

    # -- evaluation ----------------------------------------------------

    def evaluate(self, x, t: float) -> MixtureDensity:
        """Mixture over y at one (x, t), in original outcome units."""
        x_arr = np.asarray(x, dtype=float).ravel()
        if x_arr.shape[0] != self.d:
            raise InputError(f"x has dimension {x_arr.shape[0]}, model expects {self.d}")
        if not (np.all(np.isfinite(x_arr)) and np.isfinite(t)):
            raise InputError("non-finite input to evaluate")
        w, m, v = self.evaluate_batch(x_arr.reshape(1, -1), np.array([t]))
        return MixtureDensity(weights=w[0], means=m[0], variances=v[0])

    def evaluate_batch(self, x: np.ndarray, t: np.ndarray):
        """Vectorized evaluate: returns (weights, means, variances), each (B, K)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.asarray(t, dtype=float).ravel()
        if x.shape[1] != self.d:
            raise InputError(f"x has dimension {x.shape[1]}, model expects {self.d}")
        if x.shape[0] != t.shape[0]:
            raise InputError("x and t row counts differ")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise InputError("non-finite input to evaluate_batch")
        s = self.standardization
        pi, mu, sigma, _ = _forward(
            self.params, (x - s.x_mean) / s.x_std, (t - s.t_mean) / s.t_std, self.config
        )
        means = mu * s.y_std + s.y_mean
        variances = (sigma * s.y_std) ** 2
        return pi, means, variances

    def mu_tilde(self, x, t: float) -> float:
        """Conditional mean estimate at (x, t)."""
        mix = self.evaluate(x, t)
        return float(np.dot(mix.weights, mix.means))

    # -- persistence ---------------------------------------------------

    def to_json(self) -> str:
        s = self.standardization
        payload = {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "d": self.d,
            "standardization": {
                "x_mean": s.x_mean.tolist(),
                "x_std": np.asarray(s.x_std).tolist(),
                "t_mean": s.t_mean,
                "t_std": s.t_std,
                "y_mean": s.y_mean,
                "y_std": s.y_std,
            },
            "params": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.params.items()
            },
            "train_loss_per_epoch": list(self.train_loss_per_epoch),
        }
        return json.dumps(payload)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "ConditionalDensityModel":
        payload = json.loads(text)
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported model format version: {version!r}")
        s = payload["standardization"]
        params = {
            name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
            for name, entry in payload["params"].items()
        }
        return cls(
            config=DensityModelConfig(**payload["config"]),
            standardization=Standardization(
                x_mean=np.asarray(s["x_mean"], dtype=float),
                x_std=np.asarray(s["x_std"], dtype=float),
                t_mean=float(s["t_mean"]),
                t_std=float(s["t_std"]),
                y_mean=float(s["y_mean"]),
                y_std=float(s["y_std"]),
            ),
            params=params,
            d=int(payload["d"]),
            train_loss_per_epoch=[float(v) for v in payload.get("train_loss_per_epoch", [])],
        )

    @classmethod
    def load(cls, path) -> "ConditionalDensityModel":
        with open(path) as f:
            return cls.from_json(f.read())


# -- network internals -------------------------------------------------


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, 1.0, slope)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _init_params(d: int, config: DensityModelConfig, rng: np.random.Generator):
    """Uniform +-sqrt(6 / (fan_in + fan_out)) initialization, seeded."""
    params: dict[str, np.ndarray] = {}

    def linear(name, n_in, n_out):
        bound = np.sqrt(6.0 / (n_in + n_out))
        params[f"{name}_W"] = rng.uniform(-bound, bound, size=(n_out, n_in))
        params[f"{name}_b"] = np.zeros(n_out)

    h, k = config.hidden_units, config.n_components
    linear("ext0", d, h)
    for layer in range(1, config.depth):
        linear(f"ext{layer}", h, h)
    linear("head0", h + 1, h)
    for layer in range(1, config.depth):
        linear(f"head{layer}", h, h)
    linear("pi", h, k)
    linear("mu", h, k)
    linear("s", h, k)
    return params


def _stack_forward(params, prefix, inputs, depth, slope, cache):
    """Input projection followed by depth-1 residual blocks."""
    z0 = inputs @ params[f"{prefix}0_W"].T + params[f"{prefix}0_b"]
    a = _leaky(z0, slope)
    cache[f"{prefix}_in"] = inputs
    cache[f"{prefix}_z0"] = z0
    for layer in range(1, depth):
        cache[f"{prefix}_a{layer - 1}"] = a
        z = a @ params[f"{prefix}{layer}_W"].T + params[f"{prefix}{layer}_b"]
        cache[f"{prefix}_z{layer}"] = z
        a = a + _leaky(z, slope)
    return a


def _stack_backward(params, prefix, d_out, depth, slope, grads, cache):
    da = d_out
    for layer in range(depth - 1, 0, -1):
        z = cache[f"{prefix}_z{layer}"]
        a_in = cache[f"{prefix}_a{layer - 1}"]
        dz = da * _leaky_grad(z, slope)
        grads[f"{prefix}{layer}_W"] = dz.T @ a_in
        grads[f"{prefix}{layer}_b"] = dz.sum(axis=0)
        da = da + dz @ params[f"{prefix}{layer}_W"]
    z0 = cache[f"{prefix}_z0"]
    dz0 = da * _leaky_grad(z0, slope)
    grads[f"{prefix}0_W"] = dz0.T @ cache[f"{prefix}_in"]
    grads[f"{prefix}0_b"] = dz0.sum(axis=0)
    return dz0 @ params[f"{prefix}0_W"]


def _forward(params, x_std, t_std, config: DensityModelConfig):
    """Network forward pass on standardized inputs.

    Returns (pi, mu, sigma, cache) with shapes (B, K); sigma already has the
    variance floor added.
    """
    slope = config.negative_slope
    cache: dict[str, np.ndarray] = {}
    phi = _stack_forward(params, "ext", x_std, config.depth, slope, cache)
    h = np.concatenate([phi, t_std.reshape(-1, 1)], axis=1)
    a = _stack_forward(params, "head", h, config.depth, slope, cache)
    cache["a_head"] = a

    z_pi = a @ params["pi_W"].T + params["pi_b"]
    mu = a @ params["mu_W"].T + params["mu_b"]
    z_s = a @ params["s_W"].T + params["s_b"]
    cache["z_s"] = z_s

    z_pi = z_pi - z_pi.max(axis=1, keepdims=True)
    exp_z = np.exp(z_pi)
    total = exp_z.sum(axis=1, keepdims=True)
    pi = exp_z / total
    cache["log_pi"] = z_pi - np.log(total)
    sigma = _softplus(z_s) + config.sigma_floor
    return pi, mu, sigma, cache


def _nll_and_grads(params, x_std, t_std, y_std, config: DensityModelConfig):
    """Mean negative log-likelihood of a batch and its parameter gradients."""
    slope = config.negative_slope
    batch = x_std.shape[0]
    pi, mu, sigma, cache = _forward(params, x_std, t_std, config)

    resid = y_std.reshape(-1, 1) - mu
    log_norm = -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * (resid / sigma) ** 2
    log_joint = cache["log_pi"] + log_norm
    top = log_joint.max(axis=1, keepdims=True)
    log_p = top[:, 0] + np.log(np.exp(log_joint - top).sum(axis=1))
    loss = -float(np.mean(log_p))

    # Component responsibilities drive every head gradient.
    r = np.exp(log_joint - log_p.reshape(-1, 1))
    g_z_pi = (pi - r) / batch
    g_mu = -(r * resid / sigma**2) / batch
    g_sigma = -(r * (resid**2 / sigma**3 - 1.0 / sigma)) / batch
    g_z_s = g_sigma / (1.0 + np.exp(-cache["z_s"]))

    grads: dict[str, np.ndarray] = {}
    a = cache["a_head"]
    grads["pi_W"] = g_z_pi.T @ a
    grads["pi_b"] = g_z_pi.sum(axis=0)
    grads["mu_W"] = g_mu.T @ a
    grads["mu_b"] = g_mu.sum(axis=0)
    grads["s_W"] = g_z_s.T @ a
    grads["s_b"] = g_z_s.sum(axis=0)

    da = g_z_pi @ params["pi_W"] + g_mu @ params["mu_W"] + g_z_s @ params["s_W"]
    dh = _stack_backward(params, "head", da, config.depth, slope, grads, cache)
    dphi = dh[:, :-1]
    _stack_backward(params, "ext", dphi, config.depth, slope, grads, cache)
    return loss, grads


# -- public training/gradient API ---------------------------------------


def _standardize(model: ConditionalDensityModel, data: Dataset):
    s = model.standardization
    return (
        (data.x - s.x_mean) / s.x_std,
        (data.t - s.t_mean) / s.t_std,
        (data.y - s.y_mean) / s.y_std,
    )


def nll(model: ConditionalDensityModel, data: Dataset) -> float:
    """Mean negative log-likelihood of a dataset in standardized units."""
    x_std, t_std, y_std = _standardize(model, data)
    loss, _ = _nll_and_grads(model.params, x_std, t_std, y_std, model.config)
    return loss


def nll_gradient(model: ConditionalDensityModel, batch: Dataset) -> dict[str, np.ndarray]:
    """Analytic gradient of the mean batch NLL, keyed like model.params."""
    if batch.n == 0:
        raise InputError("empty batch")
    x_std, t_std, y_std = _standardize(model, batch)
    _, grads = _nll_and_grads(model.params, x_std, t_std, y_std, model.config)
    return grads


def init_model(data: Dataset, config: DensityModelConfig) -> ConditionalDensityModel:
    """Untrained model with seeded weights and data-fitted standardization."""
    rng = np.random.default_rng(config.seed)
    return ConditionalDensityModel(
        config=config,
        standardization=Standardization.fit(data),
        params=_init_params(data.d, config, rng),
        d=data.d,
    )


def train(data: Dataset, config: DensityModelConfig) -> ConditionalDensityModel:
    """Fit the mixture density by mini-batch SGD on the mean NLL.

    The shuffle order is drawn from the same seeded generator as the
    weight initialization, so identical (data, config) inputs give
    bitwise-identical models.
    """
    rng = np.random.default_rng(config.seed)
    params = _init_params(data.d, config, rng)
    model = ConditionalDensityModel(
        config=config,
        standardization=Standardization.fit(data),
        params=params,
        d=data.d,
    )
    x_std, t_std, y_std = _standardize(model, data)

    lr = config.learning_rate
    history: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(data.n)
        total, count = 0.0, 0
        for start in range(0, data.n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = _nll_and_grads(params, x_std[idx], t_std[idx], y_std[idx], config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1)
            for name, g in grads.items():
                params[name] -= lr * g
            total += loss * idx.size
            count += idx.size
        history.append(total / count)
    model.train_loss_per_epoch = history
    return model
