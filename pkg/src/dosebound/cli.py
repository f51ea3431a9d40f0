"""Batch front end: generate data, train, sweep bounds/CIs, score coverage.

All subcommands read an optional JSON config file with one section per
subcommand; command-line flags override config values. Outputs are tidy
CSV/JSON intended for external plotting. Exit codes: 0 success, 1 input
error, 2 numeric or training failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import bootstrap as bs
from . import synthetic
from .bounds import BoundGridSpec, Lambda, apo_bounds, capo_bounds_batch
from .data import Dataset, read_csv
from .density import ConditionalDensityModel, DensityModelConfig, init_model, nll, train
from .errors import InputError, NumericError

JOBS_ENV_VAR = "DOSEBOUND_JOBS"

COVERAGE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["records", "meta"],
    "properties": {
        "meta": {
            "type": "object",
            "required": ["n_points", "optimizer", "seed"],
            "properties": {
                "n_points": {"type": "integer", "minimum": 0},
                "optimizer": {"type": "string"},
                "seed": {"type": "integer"},
            },
        },
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["lambda", "t", "eligible_points", "covered", "coverage_rate"],
                "properties": {
                    "lambda": {"type": "number", "minimum": 1},
                    "t": {"type": "number"},
                    "eligible_points": {"type": "integer", "minimum": 0},
                    "covered": {"type": "integer", "minimum": 0},
                    "coverage_rate": {
                        "type": ["number", "null"],
                        "minimum": 0,
                        "maximum": 1,
                    },
                    "covered_given_u": {"type": "integer", "minimum": 0},
                    "coverage_rate_given_u": {
                        "type": ["number", "null"],
                        "minimum": 0,
                        "maximum": 1,
                    },
                },
            },
        },
    },
}


def _load_config(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            config = json.load(f)
    except json.JSONDecodeError as err:
        raise InputError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(config, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    merged = {}
    if "seed" in config:
        merged["seed"] = config["seed"]
    merged.update(config.get(section, {}))
    return merged


def _setting(args, config: dict, name: str, default):
    """Flag wins over config section, config over the built-in default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in config:
        return config[name]
    return default


def _parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _default_jobs() -> int:
    return int(os.environ.get(JOBS_ENV_VAR, "1"))


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


# -- generate --------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _load_config(args.config, "generate")
    out_dir = _setting(args, config, "out_dir", "data")
    sc = synthetic.SyntheticConfig(
        n=int(_setting(args, config, "n", 1000)),
        gamma_t=float(_setting(args, config, "gamma_t", 0.3)),
        gamma_y=float(_setting(args, config, "gamma_y", 0.5)),
        noise_var=float(_setting(args, config, "noise_var", 0.04)),
        bb_n=int(_setting(args, config, "bb_n", 100)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    data = synthetic.generate(sc)
    os.makedirs(out_dir, exist_ok=True)
    dataset_path = os.path.join(out_dir, "dataset.csv")
    oracle_path = os.path.join(out_dir, "oracle.csv")
    data.to_csv(dataset_path)
    synthetic.write_oracle_csv(oracle_path, data, sc)
    manifest = dict(asdict(sc), dataset="dataset.csv", oracle="oracle.csv")
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    print(f"wrote {data.n} rows to {dataset_path}")
    return 0


# -- train -----------------------------------------------------------------


def _split(data: Dataset, val_fraction: float, seed: int):
    if val_fraction <= 0.0:
        return data, None
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5641]))
    perm = rng.permutation(data.n)
    n_val = max(1, int(round(val_fraction * data.n)))
    if n_val >= data.n:
        raise InputError("validation fraction leaves no training rows")
    return data.take(perm[n_val:]), data.take(perm[:n_val])


def cmd_train(args) -> int:
    config = _load_config(args.config, "train")
    dataset_path = _setting(args, config, "dataset", None)
    model_out = _setting(args, config, "model_out", "model.json")
    if dataset_path is None:
        raise InputError("train requires a dataset path")
    data = read_csv(dataset_path)
    mc = DensityModelConfig(
        hidden_units=int(_setting(args, config, "hidden_units", 96)),
        depth=int(_setting(args, config, "depth", 4)),
        n_components=int(_setting(args, config, "n_components", 24)),
        negative_slope=float(_setting(args, config, "negative_slope", 0.05)),
        learning_rate=float(_setting(args, config, "learning_rate", 0.0015)),
        batch_size=int(_setting(args, config, "batch_size", 32)),
        epochs=int(_setting(args, config, "epochs", 500)),
        sigma_floor=float(_setting(args, config, "sigma_floor", 1e-3)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    val_fraction = float(_setting(args, config, "val_fraction", 0.1))
    train_data, val_data = _split(data, val_fraction, mc.seed)
    model = train(train_data, mc) if mc.epochs > 0 else init_model(train_data, mc)
    model.save(model_out)
    train_nll = nll(model, train_data)
    print(f"train nll: {train_nll:.6f}")
    if val_data is not None:
        print(f"validation nll: {nll(model, val_data):.6f}")
    print(f"wrote model to {model_out}")
    return 0


# -- bounds ----------------------------------------------------------------


def _sweep_task(task):
    model, xs, t, lam_value, spec, optimizer, want_capo = task
    lowers, uppers, mus = capo_bounds_batch(
        model, xs, t, Lambda(lam_value), spec, optimizer=optimizer
    )
    apo_row = (t, lam_value, float(np.mean(lowers)), float(np.mean(uppers)), float(np.mean(mus)))
    capo = (lowers, uppers, mus) if want_capo else None
    return apo_row, capo


def _run_sweep(model, xs, treatments, lambdas, spec, optimizer, jobs, want_capo):
    tasks = [
        (model, xs, t, lam, spec, optimizer, want_capo)
        for t in treatments
        for lam in lambdas
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(task) for task in tasks]
    return tasks, results


def cmd_bounds(args) -> int:
    config = _load_config(args.config, "bounds")
    model_path = _setting(args, config, "model", None)
    dataset_path = _setting(args, config, "dataset", None)
    out_path = _setting(args, config, "out", "bounds.csv")
    capo_out = _setting(args, config, "capo_out", None)
    if model_path is None or dataset_path is None:
        raise InputError("bounds requires --model and --dataset")
    model = ConditionalDensityModel.load(model_path)
    data = read_csv(dataset_path)
    if data.d != model.d:
        raise InputError(
            f"dataset has {data.d} covariates but model expects {model.d}"
        )
    lambdas = _parse_floats(_setting(args, config, "lambdas", [1.0, 1.1, 1.2, 1.6]))
    treatments = _parse_floats(_setting(args, config, "treatments", [0.0, 0.25, 0.5, 0.75, 1.0]))
    optimizer = _setting(args, config, "optimizer", "grid")
    spec = BoundGridSpec(
        mc_samples=int(_setting(args, config, "mc_samples", 1024)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    jobs = int(_setting(args, config, "jobs", _default_jobs()))

    tasks, results = _run_sweep(
        model, data.x, treatments, lambdas, spec, optimizer, jobs, capo_out is not None
    )
    _write_rows(out_path, ["t", "lambda", "lower", "upper", "mu_tilde"], [r[0] for r in results])
    print(f"wrote {len(results)} sweep rows to {out_path}")
    if capo_out is not None:
        header = [f"x_{j}" for j in range(data.d)] + ["t", "lambda", "lower", "upper", "mu_tilde"]
        rows = []
        for task, (_, capo) in zip(tasks, results):
            _, _, t, lam, _, _, _ = task
            lowers, uppers, mus = capo
            for i in range(data.n):
                rows.append(list(data.x[i]) + [t, lam, lowers[i], uppers[i], mus[i]])
        _write_rows(capo_out, header, rows)
        print(f"wrote {len(rows)} per-covariate rows to {capo_out}")
    return 0


# -- ci ----------------------------------------------------------------------


def _ci_task(task):
    ensemble, xs, t, lam_value, alpha, spec, optimizer = task
    ci = bs.apo_ci(ensemble, xs, t, Lambda(lam_value), alpha, spec, optimizer=optimizer)
    return (t, lam_value, alpha, ci.lower, ci.upper)


def cmd_ci(args) -> int:
    config = _load_config(args.config, "ci")
    dataset_path = _setting(args, config, "dataset", None)
    out_path = _setting(args, config, "out", "ci.csv")
    ensemble_dir = _setting(args, config, "ensemble_dir", None)
    if dataset_path is None:
        raise InputError("ci requires --dataset")
    data = read_csv(dataset_path)
    n_b = int(_setting(args, config, "n_b", 20))
    alpha = float(_setting(args, config, "alpha", 0.05))
    seed = int(_setting(args, config, "seed", 0))
    jobs = int(_setting(args, config, "jobs", _default_jobs()))
    lambdas = _parse_floats(_setting(args, config, "lambdas", [1.0, 1.1, 1.2, 1.6]))
    treatments = _parse_floats(_setting(args, config, "treatments", [0.0, 0.25, 0.5, 0.75, 1.0]))
    optimizer = _setting(args, config, "optimizer", "grid")
    spec = BoundGridSpec(
        mc_samples=int(_setting(args, config, "mc_samples", 1024)),
        seed=seed,
    )
    if n_b < 5:
        print(f"warning: n_b={n_b} gives coarse quantiles; prefer n_b >= 20", file=sys.stderr)

    if ensemble_dir is not None and os.path.exists(os.path.join(ensemble_dir, bs.MANIFEST_NAME)):
        ensemble = bs.load_ensemble(ensemble_dir)
        if ensemble.source_hash != data.digest():
            raise InputError("cached ensemble was fitted on a different dataset")
        print(f"loaded cached ensemble of {ensemble.n_b} from {ensemble_dir}")
    else:
        mc = DensityModelConfig(
            hidden_units=int(_setting(args, config, "hidden_units", 96)),
            depth=int(_setting(args, config, "depth", 4)),
            n_components=int(_setting(args, config, "n_components", 24)),
            negative_slope=float(_setting(args, config, "negative_slope", 0.05)),
            learning_rate=float(_setting(args, config, "learning_rate", 0.0015)),
            batch_size=int(_setting(args, config, "batch_size", 32)),
            epochs=int(_setting(args, config, "epochs", 500)),
            sigma_floor=float(_setting(args, config, "sigma_floor", 1e-3)),
            seed=seed,
        )
        ensemble = bs.fit_ensemble(data, mc, n_b=n_b, seed=seed, jobs=jobs)
        if ensemble_dir is not None:
            bs.save_ensemble(ensemble, ensemble_dir)
            print(f"cached ensemble to {ensemble_dir}")

    tasks = [
        (ensemble, data.x, t, lam, alpha, spec, optimizer)
        for t in treatments
        for lam in lambdas
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_ci_task, tasks))
    else:
        rows = [_ci_task(task) for task in tasks]
    _write_rows(out_path, ["t", "lambda", "alpha", "lower", "upper"], rows)
    print(f"wrote {len(rows)} CI rows to {out_path}")
    return 0


# -- coverage ----------------------------------------------------------------


def cmd_coverage(args) -> int:
    config = _load_config(args.config, "coverage")
    model_path = _setting(args, config, "model", None)
    oracle_path = _setting(args, config, "oracle", None)
    manifest_path = _setting(args, config, "manifest", None)
    out_path = _setting(args, config, "out", "coverage.json")
    if model_path is None or oracle_path is None or manifest_path is None:
        raise InputError("coverage requires --model, --oracle, and --manifest")

    with open(manifest_path) as f:
        manifest = json.load(f)
    sc = synthetic.SyntheticConfig(
        n=int(manifest["n"]),
        gamma_t=float(manifest["gamma_t"]),
        gamma_y=float(manifest["gamma_y"]),
        noise_var=float(manifest["noise_var"]),
        bb_n=int(manifest["bb_n"]),
        seed=int(manifest["seed"]),
    )
    oracle = _read_oracle(oracle_path)
    model = ConditionalDensityModel.load(model_path)
    lambdas = _parse_floats(_setting(args, config, "lambdas", [1.1, 1.2, 1.6]))
    treatments = _parse_floats(_setting(args, config, "treatments", [0.0, 0.5, 1.0]))
    optimizer = _setting(args, config, "optimizer", "grid")
    seed = int(_setting(args, config, "seed", 0))
    spec = BoundGridSpec(mc_samples=int(_setting(args, config, "mc_samples", 1024)), seed=seed)

    xs = oracle["x"].reshape(-1, 1)
    us = oracle["u"]
    records = []
    for lam_value in lambdas:
        lam = Lambda(lam_value)
        for t in treatments:
            lowers, uppers, _ = capo_bounds_batch(model, xs, t, lam, spec, optimizer=optimizer)
            lam_true = synthetic.lambda_star(np.full(us.shape, t), xs[:, 0], us, sc)
            capo = synthetic.true_capo(xs[:, 0], t)
            capo_u = synthetic.true_capo_given_u(xs[:, 0], t, us, sc.gamma_y)
            eligible = (lam_true >= 1.0 / lam_value) & (lam_true <= lam_value)
            covered = eligible & (capo >= lowers) & (capo <= uppers)
            covered_u = eligible & (capo_u >= lowers) & (capo_u <= uppers)
            n_eligible = int(np.sum(eligible))
            n_covered = int(np.sum(covered))
            n_covered_u = int(np.sum(covered_u))
            records.append(
                {
                    "lambda": lam_value,
                    "t": t,
                    "eligible_points": n_eligible,
                    "covered": n_covered,
                    "coverage_rate": (n_covered / n_eligible) if n_eligible else None,
                    "covered_given_u": n_covered_u,
                    "coverage_rate_given_u": (n_covered_u / n_eligible) if n_eligible else None,
                }
            )
    report = {
        "meta": {"n_points": int(xs.shape[0]), "optimizer": optimizer, "seed": seed},
        "records": records,
    }
    with open(out_path, "w") as f:
        json.dump(report, f, indent=2)
    for rec in records:
        rate = "n/a" if rec["coverage_rate"] is None else f"{rec['coverage_rate']:.3f}"
        print(
            f"lambda={rec['lambda']:<6g} t={rec['t']:<6g} "
            f"eligible={rec['eligible_points']:<7d} covered={rec['covered']:<7d} rate={rate}"
        )
    print(f"wrote report to {out_path}")
    return 0


def _read_oracle(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    missing = [c for c in synthetic.ORACLE_COLUMNS if c not in header]
    if missing:
        raise InputError(f"oracle CSV missing columns: {', '.join(missing)}")
    return {name: data[:, header.index(name)] for name in synthetic.ORACLE_COLUMNS}


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dosebound",
        description="Sensitivity intervals for continuous-treatment dose-response estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file with per-subcommand sections")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("generate", help="draw a synthetic benchmark dataset")
    add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--gamma-t", dest="gamma_t", type=float)
    p.add_argument("--gamma-y", dest="gamma_y", type=float)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--bb-n", dest="bb_n", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the conditional density model")
    add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model-out", dest="model_out")
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--n-components", dest="n_components", type=int)
    p.add_argument("--negative-slope", dest="negative_slope", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bounds", help="sweep sensitivity intervals over (t, lambda)")
    add_common(p)
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--capo-out", dest="capo_out")
    p.add_argument("--lambdas")
    p.add_argument("--treatments")
    p.add_argument("--optimizer", choices=["grid", "line", "gradient"])
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("ci", help="bootstrap confidence intervals for the sweep")
    add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--ensemble-dir", dest="ensemble_dir")
    p.add_argument("--n-b", dest="n_b", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambdas")
    p.add_argument("--treatments")
    p.add_argument("--optimizer", choices=["grid", "line", "gradient"])
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--n-components", dest="n_components", type=int)
    p.add_argument("--negative-slope", dest="negative_slope", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("coverage", help="score interval coverage against the oracle")
    add_common(p)
    p.add_argument("--model")
    p.add_argument("--oracle")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--lambdas")
    p.add_argument("--treatments")
    p.add_argument("--optimizer", choices=["grid", "line", "gradient"])
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.set_defaults(func=cmd_coverage)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
