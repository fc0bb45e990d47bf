"""Configuration-driven experiment runner.

One JSON document describes one experiment (a file may also hold a list for
sweeps).  Every experiment ships two built-in profiles: ``paper`` uses the
fine step sizes of the reference setups, ``desk`` coarser grids sized so the
whole suite runs on a laptop; user config keys override profile defaults.

Output layout per experiment:  <out>/<experiment>/<config-hash>/run_<r>.csv
plus aggregate.csv and meta.json.  Re-running a config with the same
seed_base reproduces the CSVs byte for byte; the wall-clock timestamp lives
only in meta.json.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import liftestim, mckvlasov
from .filters import (EmbeddedModel, GaussianPrior, config_hash,
                      embed_state_parameter, kalman_bucy_reference, run_filter,
                      scaled_drift)
from .roughpath import LiftedSeries, PathSeries, TimeGrid, canonical_lift, save_lift_csv
from .sdesim import (FilterModel, Trajectory, drift_map, driven_parameter_model,
                     homogenized_mobility, integrated_coordinates,
                     simulate_filter_model, simulate_lorenz63, simulate_physical_bm,
                     simulate_twoscale)

EXPERIMENTS = ("pbm_magnetic", "lorenz_fast", "twoscale", "linear_gaussian_check",
               "chaos", "lag_diagnostics")

_COMMON = {"n_runs": 5, "seed_base": 1000, "scheme": "rp_enkf", "workers": 1,
           "on_divergence": "stop", "prior_theta_mean": 0.0, "prior_theta_var": 1.0,
           "prior_z_var": 1.0}

DEFAULTS = {
    "pbm_magnetic": {
        "paper": {"dt": 1e-4, "T": 20.0, "N": 100, "tau": 700, "epsilon": 1e-2,
                  "gamma": -2.0, "theta_true": 0.5, "R": 0.1, "skew_mode": "subsample",
                  "substeps": 1, "prior_z_var": 0.01},
        "desk": {"dt": 1e-3, "T": 20.0, "N": 100, "tau": 70, "epsilon": 1e-2,
                 "gamma": -2.0, "theta_true": 0.5, "R": 0.1, "skew_mode": "subsample",
                 "substeps": 10, "prior_z_var": 0.01},
    },
    "lorenz_fast": {
        "paper": {"dt": 1e-5, "T": 5.0, "N": 100, "tau": 500, "epsilon": 0.05,
                  "sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0, "lam": 2.0 / 45.0,
                  "g11": 0.13, "theta_true": 0.5, "R": 0.01, "skew_mode": "subsample",
                  "substeps": 1, "burn_in": 0.05, "prior_z_var": 0.01},
        "desk": {"dt": 1e-4, "T": 5.0, "N": 100, "tau": 50, "epsilon": 0.05,
                 "sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0, "lam": 2.0 / 45.0,
                 "g11": 0.13, "theta_true": 0.5, "R": 0.01, "skew_mode": "subsample",
                 "substeps": 4, "burn_in": 0.05, "prior_z_var": 0.01},
    },
    "twoscale": {
        "paper": {"dt": 1e-4, "T": 20.0, "N": 100, "tau": 1, "epsilon": 1e-2,
                  "sigma": 1.0, "theta_true": 1.0, "R": 0.01, "skew_mode": "zero",
                  "p_amplitudes": [1.0, 0.5], "period": 2.0 * np.pi,
                  "data_source": "multiscale", "substeps": 1, "prior_z_var": 0.01},
        "desk": {"dt": 1e-4, "T": 10.0, "N": 100, "tau": 1, "epsilon": 1e-2,
                 "sigma": 1.0, "theta_true": 1.0, "R": 0.01, "skew_mode": "zero",
                 "p_amplitudes": [1.0, 0.5], "period": 2.0 * np.pi,
                 "data_source": "multiscale", "substeps": 2, "prior_z_var": 0.01},
    },
    "linear_gaussian_check": {
        "paper": {"dt": 1e-3, "T": 5.0, "N": 5000, "R": 0.1, "n_runs": 1,
                  "m0": [1.0, -1.0], "S0": 1.0, "skew_mode": "zero"},
        "desk": {"dt": 1e-3, "T": 5.0, "N": 5000, "R": 0.1, "n_runs": 1,
                 "m0": [1.0, -1.0], "S0": 1.0, "skew_mode": "zero"},
    },
    "chaos": {
        "paper": {"dt": 0.01, "T": 2.0, "counts": [16, 64, 256], "n_ref": 1024,
                  "rho": 1.0, "n_runs": 10, "mollify_window": 25, "R": 0.1,
                  "theta_true": 0.5, "gamma": -2.0, "N": 16, "checkpoint_every": 0,
                  "skew_mode": "zero", "epsilon": 0.0, "substeps": 1},
        "desk": {"dt": 0.01, "T": 2.0, "counts": [16, 64, 256], "n_ref": 1024,
                 "rho": 1.0, "n_runs": 10, "mollify_window": 25, "R": 0.1,
                 "theta_true": 0.5, "gamma": -2.0, "N": 16, "checkpoint_every": 0,
                 "skew_mode": "zero", "epsilon": 0.0, "substeps": 1},
    },
    "lag_diagnostics": {
        "paper": {"dt": 1e-4, "T": 10.0, "epsilon": 1e-2, "gamma": -2.0,
                  "theta_true": 0.5, "R": 0.1, "N": 2,
                  "taus": [1, 100, 200, 300, 400, 500, 600, 700, 800],
                  "substeps": 1, "skew_mode": "zero"},
        "desk": {"dt": 1e-3, "T": 10.0, "epsilon": 1e-2, "gamma": -2.0,
                 "theta_true": 0.5, "R": 0.1, "N": 2,
                 "taus": [1, 10, 20, 30, 40, 50, 60, 70, 80, 100, 150, 200],
                 "substeps": 10, "skew_mode": "zero"},
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists the offending fields."""


def validate_config(raw, profile: str = "desk") -> dict:
    """Resolve defaults for one config (dict or JSON file path) and check its
    invariants; stability warnings are attached as Python warnings."""
    if isinstance(raw, (str, Path)):
        try:
            raw = json.loads(Path(raw).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {raw}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")
    if profile not in ("paper", "desk"):
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = dict(_COMMON)
    cfg.update(DEFAULTS[name][profile])
    cfg.update(raw)
    cfg["experiment"] = name
    cfg["profile"] = profile

    problems = []
    if not (isinstance(cfg.get("dt"), (int, float)) and cfg["dt"] > 0):
        problems.append("dt must be positive")
    if not (isinstance(cfg.get("T"), (int, float)) and cfg["T"] > 0):
        problems.append("T must be positive")
    if not (isinstance(cfg.get("N"), int) and cfg["N"] >= 2):
        problems.append("N must be an integer >= 2")
    if not (isinstance(cfg.get("n_runs"), int) and cfg["n_runs"] >= 1):
        problems.append("n_runs must be an integer >= 1")
    if cfg.get("scheme") not in ("enkf", "rp_enkf"):
        problems.append("scheme must be 'enkf' or 'rp_enkf'")
    if cfg.get("skew_mode") not in ("zero", "subsample"):
        problems.append("skew_mode must be 'zero' or 'subsample'")
    if "tau" in cfg and (not isinstance(cfg["tau"], int) or cfg["tau"] < 1):
        problems.append("tau must be an integer >= 1")
    if problems:
        raise ConfigError("; ".join(problems))

    cfg["n_steps"] = int(round(cfg["T"] / cfg["dt"]))
    eps = cfg.get("epsilon", 0.0)
    if name in ("pbm_magnetic", "lorenz_fast") and eps > 0:
        dt_inner = cfg["dt"] / cfg.get("substeps", 1)
        if dt_inner > eps * eps / 10.0:
            warnings.warn(f"{name}: inner step {dt_inner:.2g} exceeds epsilon^2/10 = "
                          f"{eps*eps/10:.2g}; multiscale structure may be under-resolved",
                          stacklevel=2)
    return cfg


def load_configs(path, profile: str = "desk") -> list[dict]:
    """Read one JSON config document (object or list of objects)."""
    doc = json.loads(Path(path).read_text())
    items = doc if isinstance(doc, list) else [doc]
    return [validate_config(item, profile) for item in items]


# ---------------------------------------------------------------------------
# model assembly and data generation


def _theta_prior(cfg, dim_z: int) -> GaussianPrior:
    mean = np.concatenate([np.zeros(dim_z), [cfg["prior_theta_mean"]]])
    cov = np.diag(np.concatenate([np.full(dim_z, cfg["prior_z_var"]),
                                  [cfg["prior_theta_var"]]]))
    return GaussianPrior(mean, cov)


def build_embedded(cfg) -> EmbeddedModel:
    """Joint (state, parameter) filtering model for the given experiment."""
    name = cfg["experiment"]
    if name in ("pbm_magnetic", "chaos"):
        g = drift_map("rotation_minus")
        return embed_state_parameter(scaled_drift(g), np.eye(2), cfg["R"], _theta_prior(cfg, 2))
    if name == "lorenz_fast":
        g = drift_map("rotation_plus")
        g_sqrt = cfg["g11"] * np.array([[1.0], [1.0]])
        return embed_state_parameter(scaled_drift(g), g_sqrt, cfg["R"], _theta_prior(cfg, 2))
    if name == "twoscale":
        mob = twoscale_mobility(cfg)
        g = drift_map("linear", payload=-mob)
        g_sqrt = np.sqrt(2.0 * cfg["sigma"]) * np.sqrt(mob)  # mob is diagonal
        return embed_state_parameter(scaled_drift(g), g_sqrt, cfg["R"], _theta_prior(cfg, 2))
    raise ConfigError(f"experiment {name} has no embedded parameter model")


def twoscale_mobility(cfg) -> np.ndarray:
    a1, a2 = cfg["p_amplitudes"]
    return homogenized_mobility(lambda x: a1 * np.cos(x), lambda x: a2 * np.cos(x),
                                cfg["sigma"], cfg["period"])


def linear_gaussian_model(cfg) -> FilterModel:
    return FilterModel(f=lambda x: -np.atleast_2d(x), h=lambda x: np.atleast_2d(x),
                       dh=lambda x: np.broadcast_to(np.eye(2), (np.atleast_2d(x).shape[0], 2, 2)).copy(),
                       G_sqrt=np.eye(2), U=np.zeros((2, 2)),
                       R_sqrt=np.sqrt(cfg["R"]) * np.eye(2), dim_state=2, dim_obs=2)


def generate_data(cfg, seed) -> dict:
    """Simulate one data set for the configured experiment; returns trajectories."""
    name = cfg["experiment"]
    grid = TimeGrid(cfg["dt"], cfg["n_steps"])
    sub = cfg.get("substeps", 1)
    if name in ("pbm_magnetic", "chaos", "lag_diagnostics"):
        eps = cfg.get("epsilon", 0.0)
        if eps > 0:
            w_eps, w0 = simulate_physical_bm(cfg["gamma"], eps, grid, [seed, 0], substeps=sub)
            driver = w_eps
        else:
            rng = np.random.default_rng([seed, 0])
            incr = rng.standard_normal((grid.n_steps, 2)) * np.sqrt(grid.dt)
            w0 = Trajectory(grid, np.vstack([np.zeros(2), np.cumsum(incr, axis=0)]))
            driver = w0
        z, y = driven_parameter_model(cfg["theta_true"], drift_map("rotation_minus"),
                                      driver, 1.0, cfg["R"], grid, [seed, 1])
        return {"grid": grid, "z": z, "y": y, "driver": driver}
    if name == "lorenz_fast":
        rng = np.random.default_rng([seed, 0])
        init = np.array([1.0, 1.0, 25.0]) + rng.standard_normal(3)
        burn_steps = max(int(round(cfg["burn_in"] / cfg["dt"])), 1)
        burn = simulate_lorenz63(cfg["epsilon"], cfg["sigma"], cfg["rho"], cfg["beta"],
                                 init, TimeGrid(cfg["dt"], burn_steps), substeps=sub)
        chaotic = simulate_lorenz63(cfg["epsilon"], cfg["sigma"], cfg["rho"], cfg["beta"],
                                    burn.states[-1], grid, substeps=sub)
        driver = integrated_coordinates(chaotic, (0, 1), 1.0 / cfg["epsilon"])
        z, y = driven_parameter_model(cfg["theta_true"], drift_map("rotation_plus"),
                                      driver, cfg["lam"], cfg["R"], grid, [seed, 1])
        return {"grid": grid, "z": z, "y": y, "driver": driver}
    if name == "twoscale":
        if cfg["data_source"] == "multiscale":
            z = simulate_twoscale(cfg["theta_true"], cfg["epsilon"], cfg["sigma"], grid,
                                  [seed, 0], p_amplitudes=cfg["p_amplitudes"], substeps=sub)
        else:
            mob = twoscale_mobility(cfg)
            g_sqrt = np.sqrt(2.0 * cfg["sigma"]) * np.sqrt(mob)
            f = drift_map("linear", payload=-cfg["theta_true"] * mob)
            rng = np.random.default_rng([seed, 0])
            states = np.zeros((grid.n_steps + 1, 2))
            s = np.zeros(2)
            for k in range(grid.n_steps):
                s = s + f.fn(s[None, :])[0] * grid.dt \
                    + g_sqrt @ rng.standard_normal(2) * np.sqrt(grid.dt)
                states[k + 1] = s
            z = Trajectory(grid, states)
        _, y = driven_parameter_model(0.0, drift_map("rotation_minus"), z, 1.0,
                                      cfg["R"], grid, [seed, 1])
        return {"grid": grid, "z": z, "y": y, "driver": z}
    if name == "linear_gaussian_check":
        model = linear_gaussian_model(cfg)
        prior = GaussianPrior(np.asarray(cfg["m0"], dtype=float),
                              cfg["S0"] * np.eye(2))
        rng = np.random.default_rng([seed, 0])
        x0 = prior.sample(1, rng)[0]
        x, y = simulate_filter_model(model, x0, grid, [seed, 1])
        return {"grid": grid, "z": x, "y": y, "driver": x}
    raise ConfigError(f"no generator for experiment {name}")


def build_lift(cfg, y: Trajectory) -> LiftedSeries:
    """Symmetric lift of the observation path, plus the subsampling skew term.

    In ``subsample`` mode the per-step skew is the area increment of the
    coarse straightened path minus that of the original interpolation, which
    removes the systematic area the finely sampled path accrues relative to
    the reduced description the filter is built on.
    """
    path = y.as_path()
    lift = canonical_lift(path)
    if cfg["skew_mode"] == "subsample" and cfg.get("tau", 1) > 1:
        skew = -liftestim.skew_correction(path, cfg["tau"])
        lift = LiftedSeries(path=path, second_order=lift.second_order + skew)
    return lift


# ---------------------------------------------------------------------------
# experiment driver


def single_run(cfg, r: int):
    """One data realization plus one filter run; returns (record, extras)."""
    seed = cfg["seed_base"] + r
    data = generate_data(cfg, seed)
    lift = build_lift(cfg, data["y"])
    meta = {"config_hash": config_hash(_hash_payload(cfg)), "run": r}
    if cfg["experiment"] == "linear_gaussian_check":
        model = linear_gaussian_model(cfg)
        prior = GaussianPrior(np.asarray(cfg["m0"], dtype=float), cfg["S0"] * np.eye(2))
        record = run_filter(model, prior.sample, lift, cfg["N"], [seed, 2],
                            scheme=cfg["scheme"], n_theta=0,
                            on_divergence=cfg["on_divergence"], metadata=meta)
        kb_means, kb_covs = kalman_bucy_reference(-np.eye(2), np.eye(2), np.eye(2),
                                                  np.zeros((2, 2)), cfg["R"] * np.eye(2),
                                                  np.asarray(cfg["m0"], dtype=float),
                                                  cfg["S0"] * np.eye(2), data["grid"],
                                                  lift.path.increments)
        return record, {"kb_means": kb_means, "kb_covs": kb_covs}
    embedded = build_embedded(cfg)
    record = run_filter(embedded.model, embedded.sample_prior, lift, cfg["N"], [seed, 2],
                        scheme=cfg["scheme"], n_theta=embedded.dim_theta,
                        on_divergence=cfg["on_divergence"], metadata=meta)
    return record, {}


def _hash_payload(cfg) -> dict:
    skip = {"out_dir", "workers", "profile"}
    return {k: v for k, v in sorted(cfg.items()) if k not in skip}


def run_experiment(cfg, out_root) -> dict:
    """Run every seed of one experiment config and write the output tree."""
    started = time.time()
    name = cfg["experiment"]
    digest = config_hash(_hash_payload(cfg))
    out_dir = Path(out_root) / name / digest
    out_dir.mkdir(parents=True, exist_ok=True)

    if name == "lag_diagnostics":
        data = generate_data(cfg, cfg["seed_base"])
        path = data["y"].as_path()
        rows = liftestim.lag_diagnostics(path, cfg["taus"])
        liftestim.write_lag_diagnostics_csv(rows, out_dir / "lag_diagnostics.csv")
        _write_area_processes(cfg, path, out_dir / "area_processes.csv")
        _write_meta(out_dir, cfg, digest, started, n_diverged=0)
        return {"out_dir": out_dir, "n_diverged": 0, "rows": rows}

    if name == "chaos":
        embedded = build_embedded(cfg)
        data = generate_data(cfg, cfg["seed_base"])
        smooth = _mollify(data["y"].as_path(), cfg["mollify_window"])
        chaos_cfg = mckvlasov.ChaosConfig(counts=tuple(cfg["counts"]), n_ref=cfg["n_ref"],
                                          rho=cfg["rho"],
                                          seeds=tuple(cfg["seed_base"] + r
                                                      for r in range(cfg["n_runs"])),
                                          embedded=embedded, lift=canonical_lift(smooth),
                                          checkpoint_every=cfg["checkpoint_every"])
        rows = mckvlasov.chaos_experiment(chaos_cfg)
        mckvlasov.write_chaos_csv(rows, out_dir / "chaos.csv")
        _write_meta(out_dir, cfg, digest, started, n_diverged=0)
        return {"out_dir": out_dir, "n_diverged": 0, "rows": rows}

    records = []
    extras = []
    for r in range(cfg["n_runs"]):
        record, extra = single_run(cfg, r)
        record.to_csv(out_dir / f"run_{r}.csv")
        records.append(record)
        extras.append(extra)
    _write_aggregate(cfg, records, extras, out_dir / "aggregate.csv")
    n_diverged = sum(rec.diverged for rec in records)
    _write_meta(out_dir, cfg, digest, started, n_diverged=n_diverged)
    return {"out_dir": out_dir, "n_diverged": n_diverged, "records": records}


def _write_area_processes(cfg, path: PathSeries, out_path) -> None:
    """Cumulative (1,2) area of the fine interpolation and of each subsampled
    one: `t,area_orig,area_tau_<k>...`; feeds the overlay figure."""
    times = path.grid.times
    cols = {"area_orig": liftestim.area_process(path).values[:, 0, 1]}
    for tau in cfg["taus"]:
        if tau <= 1:
            continue
        sub = liftestim.subsample_interpolate(path, tau)
        cols[f"area_tau_{tau}"] = liftestim.area_process(sub).values[:, 0, 1]
    with open(out_path, "w") as fh:
        fh.write(",".join(["t"] + list(cols)) + "\n")
        for i, t in enumerate(times):
            fh.write(",".join([repr(float(t))] + [repr(float(c[i])) for c in cols.values()])
                     + "\n")


def _mollify(path: PathSeries, window: int) -> PathSeries:
    """Centered moving average; endpoints use shrinking one-sided windows."""
    if window <= 1:
        return path
    y = path.values
    out = np.empty_like(y)
    half = window // 2
    n = y.shape[0]
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        out[k] = y[lo:hi].mean(axis=0)
    return PathSeries(path.grid, out)


def _write_aggregate(cfg, records, extras, out_path) -> None:
    """Across-run mean of the recorded ensemble means per time point.

    Diverged runs contribute up to their last finite row.  For the linear
    check the exact Gaussian reference means (averaged the same way) ride
    along as extra columns.
    """
    n_rows = max(len(rec.times) for rec in records)
    D = records[0].means.shape[1]
    p = records[0].theta_var.shape[1]
    acc = np.full((len(records), n_rows, D + p), np.nan)
    for i, rec in enumerate(records):
        m = len(rec.times)
        acc[i, :m, :D] = rec.means
        if p:
            acc[i, :m, D:] = rec.theta_var
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        agg = np.nanmean(acc, axis=0)
    times = max(records, key=lambda rec: len(rec.times)).times
    header = ["t"] + [f"mean_{i+1}" for i in range(D)] + [f"var_theta_{j+1}" for j in range(p)]
    cols = [times] + [agg[:, j] for j in range(D + p)]
    if extras and extras[0].get("kb_means") is not None:
        kb = np.mean([e["kb_means"] for e in extras], axis=0)
        header += [f"kb_mean_{i+1}" for i in range(D)]
        cols += [kb[:, i] for i in range(D)]
    with open(out_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n_rows):
            fh.write(",".join(repr(float(c[i])) for c in cols) + "\n")


def _write_meta(out_dir, cfg, digest, started, n_diverged: int) -> None:
    meta = {"config": _hash_payload(cfg), "config_hash": digest,
            "n_diverged": int(n_diverged),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started))}
    (Path(out_dir) / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True,
                                                        default=str))


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpenkf",
                                 description="second-order ensemble filtering experiments")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("generate", "lift", "filter", "experiment", "diagnose-lag", "chaos"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True, help="experiment JSON (object or list)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--profile", choices=("paper", "desk"), default="desk")
        sp.add_argument("--seed", type=int, default=None, help="override seed_base")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        configs = load_configs(args.config, args.profile)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    n_diverged = 0
    try:
        for cfg in configs:
            if args.seed is not None:
                cfg["seed_base"] = args.seed
            if args.verb == "experiment":
                n_diverged += run_experiment(cfg, args.out)["n_diverged"]
            elif args.verb == "chaos":
                cfg["experiment"] = "chaos"
                n_diverged += run_experiment(validate_config(cfg, args.profile), args.out)["n_diverged"]
            elif args.verb == "diagnose-lag":
                cfg["experiment"] = "lag_diagnostics"
                run_experiment(validate_config(cfg, args.profile), args.out)
            elif args.verb == "generate":
                data = generate_data(cfg, cfg["seed_base"])
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                _write_trajectory(data["y"], out / "y.csv")
                _write_trajectory(data["z"], out / "z.csv")
            elif args.verb == "lift":
                data = generate_data(cfg, cfg["seed_base"])
                lift = build_lift(cfg, data["y"])
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                save_lift_csv(lift, out / "lift.csv")
            elif args.verb == "filter":
                record, _ = single_run(cfg, 0)
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                record.to_csv(out / "run_0.csv")
                n_diverged += int(record.diverged)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if n_diverged:
        print(f"{n_diverged} run(s) diverged", file=sys.stderr)
        return 3
    return 0


def _write_trajectory(traj: Trajectory, out_path) -> None:
    D = traj.dim
    with open(out_path, "w") as fh:
        fh.write(",".join(["t"] + [f"x_{i+1}" for i in range(D)]) + "\n")
        for t, row in zip(traj.grid.times, traj.states):
            fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")


if __name__ == "__main__":
    sys.exit(main())
