"""Percentile-bootstrap confidence intervals around the ignorance intervals.

Statistical uncertainty from finite data is layered on top of the
sensitivity analysis by refitting the density model on datasets resampled
with replacement and taking quantiles of the per-replicate interval
endpoints: the alpha/2 quantile of the lower bounds and the 1 - alpha/2
quantile of the upper bounds.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .bounds import BoundGridSpec, GradientOpts, Lambda, apo_bounds, capo_bounds_grid
from .data import Dataset
from .density import ConditionalDensityModel, DensityModelConfig, train
from .errors import InputError, TrainingDivergedError

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ConfidenceBound:
    """Bootstrap confidence interval for the two interval endpoints."""

    lower: float
    upper: float
    alpha: float
    lam: Lambda

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise InputError(f"confidence bound inverted: ({self.lower}, {self.upper})")


@dataclass(frozen=True)
class BootstrapEnsemble:
    """Models trained on independent resamples of one source dataset."""

    replicate_models: tuple[ConditionalDensityModel, ...]
    replicate_seeds: tuple[int, ...]
    source_hash: str

    def __post_init__(self):
        if len(self.replicate_models) < 2:
            raise InputError("an ensemble needs at least 2 replicates")

    @property
    def n_b(self) -> int:
        return len(self.replicate_models)


def replicate_seed(root_seed: int, k: int) -> int:
    """Stable per-replicate seed; independent of training order."""
    return int(np.random.SeedSequence([root_seed, k]).generate_state(1)[0])


def resample(data: Dataset, n_b: int, seed: int) -> list[Dataset]:
    """n_b datasets of n rows each, drawn i.i.d. with replacement.

    Replicate k depends only on (seed, k), never on how many replicates
    are requested.
    """
    if n_b < 1:
        raise InputError("n_b must be >= 1")
    out = []
    for k in range(n_b):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        idx = rng.integers(0, data.n, size=data.n)
        out.append(data.take(idx))
    return out


def quantile(values, q: float) -> float:
    """Left-continuous empirical quantile.

    Returns the smallest order statistic whose empirical CDF reaches q
    (for q = 0, the minimum).
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InputError("quantile of empty values")
    if not 0.0 <= q <= 1.0:
        raise InputError(f"quantile level must be in [0, 1], got {q}")
    rank = int(np.ceil(q * v.size))
    return float(v[max(rank, 1) - 1])


def _fit_replicate(args) -> tuple[int, ConditionalDensityModel]:
    k, replicate, config = args
    try:
        return k, train(replicate, config)
    except TrainingDivergedError as err:
        raise TrainingDivergedError(
            err.epoch, f"replicate {k} diverged at epoch {err.epoch}"
        ) from err


def fit_ensemble(
    data: Dataset,
    config: DensityModelConfig,
    n_b: int,
    seed: int,
    jobs: int = 1,
) -> BootstrapEnsemble:
    """Train one model per resample; replicates are independent tasks."""
    if n_b < 2:
        raise InputError("n_b must be >= 2")
    replicates = resample(data, n_b, seed)
    seeds = [replicate_seed(seed, k) for k in range(n_b)]
    tasks = [
        (k, replicates[k], replace(config, seed=seeds[k])) for k in range(n_b)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fitted = dict(pool.map(_fit_replicate, tasks))
    else:
        fitted = dict(map(_fit_replicate, tasks))
    models = tuple(fitted[k] for k in range(n_b))
    return BootstrapEnsemble(
        replicate_models=models,
        replicate_seeds=tuple(seeds),
        source_hash=data.digest(),
    )


def capo_ci(
    ensemble: BootstrapEnsemble,
    x,
    t: float,
    lam: Lambda,
    alpha: float,
    spec: BoundGridSpec = BoundGridSpec(),
) -> ConfidenceBound:
    """Confidence interval for the conditional-outcome interval at (x, t)."""
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    bounds = [capo_bounds_grid(m, x, t, lam, spec) for m in ensemble.replicate_models]
    return ConfidenceBound(
        lower=quantile([b.lower for b in bounds], alpha / 2.0),
        upper=quantile([b.upper for b in bounds], 1.0 - alpha / 2.0),
        alpha=alpha,
        lam=lam,
    )


def apo_ci(
    ensemble: BootstrapEnsemble,
    xs: np.ndarray,
    t: float,
    lam: Lambda,
    alpha: float,
    spec: BoundGridSpec = BoundGridSpec(),
    optimizer: str = "grid",
    opts: GradientOpts = GradientOpts(),
) -> ConfidenceBound:
    """Confidence interval for the population-level interval at treatment t.

    Every replicate is evaluated on the one shared covariate set, so the
    spread reflects model refits rather than evaluation-set noise.
    """
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    bounds = [
        apo_bounds(m, xs, t, lam, spec, optimizer=optimizer, opts=opts)
        for m in ensemble.replicate_models
    ]
    return ConfidenceBound(
        lower=quantile([b.lower for b in bounds], alpha / 2.0),
        upper=quantile([b.upper for b in bounds], 1.0 - alpha / 2.0),
        alpha=alpha,
        lam=lam,
    )


# -- persistence ----------------------------------------------------------


def save_ensemble(ensemble: BootstrapEnsemble, directory) -> None:
    """Write one model JSON per replicate plus a manifest."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "n_b": ensemble.n_b,
        "replicate_seeds": list(ensemble.replicate_seeds),
        "source_hash": ensemble.source_hash,
        "config": asdict(ensemble.replicate_models[0].config),
        "models": [f"model_{k:04d}.json" for k in range(ensemble.n_b)],
    }
    for name, model in zip(manifest["models"], ensemble.replicate_models):
        model.save(os.path.join(directory, name))
    with open(os.path.join(directory, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2)


def load_ensemble(directory) -> BootstrapEnsemble:
    with open(os.path.join(directory, MANIFEST_NAME)) as f:
        manifest = json.load(f)
    models = tuple(
        ConditionalDensityModel.load(os.path.join(directory, name))
        for name in manifest["models"]
    )
    return BootstrapEnsemble(
        replicate_models=models,
        replicate_seeds=tuple(int(s) for s in manifest["replicate_seeds"]),
        source_hash=manifest["source_hash"],
    )
