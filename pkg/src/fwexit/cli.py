"""
Command-line front end: JSON experiment configs in, CSV/JSON results out.

Subcommands: simulate, exit-mc, fw-scaling, exit-place, quasipotential,
operator-norms, validate.  Every experiment is driven by a config document
(schema below), validated fail-fast before any compute; --seed, --threads
and --out override the config.  Exit codes: 0 experiment completed and all
checks passed, 1 a validation-style check failed, 2 config error.

Config schema::

    {
      "kind": "fw-scaling",            # one of the subcommand kinds
      "model": { ...model spec... } | {"builtin": "ou", ...overrides},
      "params": { ...kind-specific... },
      "seed": 1,
      "threads": 1,
      "output_dir": "out"
    }

Plotting is out of process: the CSV column layout is documented in the
README cookbook.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .action import (
    ControlPath,
    MinimizeOptions,
    TargetSpec,
    quasipotential_linear,
    quasipotential_minimize,
)
from .dynamics import check_B_lipschitz, check_dissipativity
from .model import ModelSpec, SpectralField, parse_model_spec, zero_field
from .operators import (
    apriori_bound_check,
    build_Lt,
    grid_operator_norm,
    hqz_series_check,
    norm_decay_check,
    operator_norm,
    singular_value_profile,
)
from .simulate import SimConfig, attraction_check, default_t_max, ensemble_exit, run_to_exit

KINDS = ("simulate", "exit-mc", "fw-scaling", "exit-place", "quasipotential",
         "operator-norms", "validate-hypotheses")

# accepted "params" keys per kind (fail-fast on anything else)
_PARAM_KEYS = {
    "simulate": {"dt", "epsilon", "t_max", "x0", "record_trajectory"},
    "exit-mc": {"dt", "epsilon", "t_max", "v_hat", "n_paths", "x0"},
    "fw-scaling": {"dt", "epsilons", "t_max", "v_hat", "n_paths", "x0",
                   "quasipotential_T", "quasipotential_dt"},
    "exit-place": {"dt", "epsilons", "t_max", "n_paths", "x0",
                   "cap_halfwidth", "quasipotential_T", "quasipotential_dt"},
    "quasipotential": {"targets", "T", "dt", "tol_residual"},
    "operator-norms": {"t_list", "dt", "threshold"},
    "validate-hypotheses": {"samples", "radius", "t_list", "threshold",
                            "h4_delta", "quasipotential_T", "quasipotential_dt"},
}


class ConfigError(ValueError):
    pass


class ExperimentFailure(RuntimeError):
    """An experiment ran but could not produce its contracted result."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelSpec
    params: dict
    seed: int
    threads: int
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.model.to_dict(),
            "params": dict(self.params),
            "seed": self.seed,
            "threads": self.threads,
            "output_dir": self.output_dir,
        }


def parse_experiment_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"kind", "model", "params", "seed", "threads", "output_dir"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if "model" not in doc:
        raise ConfigError("config requires a model")
    try:
        model = parse_model_spec(doc["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    extra = set(params) - _PARAM_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown params {sorted(extra)} for kind {kind}")
    _validate_params(kind, params)
    return ExperimentConfig(
        kind=kind, model=model, params=params,
        seed=int(doc.get("seed", 0)),
        threads=int(doc.get("threads", 1)),
        output_dir=str(doc.get("output_dir", "fwexit-out")),
    )


def _require_positive(params, key):
    v = params.get(key)
    if v is None or not float(v) > 0:
        raise ConfigError(f"params.{key} must be a positive number")
    return float(v)


def _validate_params(kind: str, params: dict) -> None:
    if kind in ("simulate", "exit-mc", "fw-scaling", "exit-place"):
        _require_positive(params, "dt")
    if kind in ("simulate",):
        _require_positive(params, "t_max")
        if "epsilon" not in params or float(params["epsilon"]) < 0:
            raise ConfigError("params.epsilon must be a nonnegative number")
    if kind == "exit-mc":
        if "epsilon" not in params or float(params["epsilon"]) < 0:
            raise ConfigError("params.epsilon must be a nonnegative number")
        if int(params.get("n_paths", 0)) < 1:
            raise ConfigError("params.n_paths must be >= 1")
        if "t_max" not in params and "v_hat" not in params:
            raise ConfigError("exit-mc needs t_max or v_hat (for the default cap)")
    if kind in ("fw-scaling", "exit-place"):
        eps = params.get("epsilons")
        if not isinstance(eps, list) or any(not float(e) > 0 for e in eps):
            raise ConfigError("params.epsilons must be a list of positive numbers")
        if kind == "fw-scaling" and len(eps) < 3:
            raise ConfigError("fw-scaling needs at least 3 epsilon values")
        if kind == "exit-place" and len(eps) < 2:
            raise ConfigError("exit-place needs at least 2 epsilon values")
        if sorted(eps, reverse=True) != list(eps):
            raise ConfigError("params.epsilons must be strictly decreasing")
        if int(params.get("n_paths", 0)) < 1:
            raise ConfigError("params.n_paths must be >= 1")
    if kind == "exit-place":
        _require_positive(params, "cap_halfwidth")
    if kind == "quasipotential":
        targets = params.get("targets")
        if not isinstance(targets, list) or not targets:
            raise ConfigError("params.targets must be a nonempty list")
    if kind == "operator-norms":
        t_list = params.get("t_list")
        if not isinstance(t_list, list) or len(t_list) < 2:
            raise ConfigError("params.t_list must list at least 2 horizons")


# -- output helpers ----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))        # shortest round-trippable decimal
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_summary(out: Path, doc: dict) -> None:
    with open(out / "summary.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _x0_from_params(spec: ModelSpec, params: dict) -> SpectralField:
    x0 = params.get("x0")
    if x0 is None:
        return zero_field(spec)
    return SpectralField(np.asarray(x0, dtype=np.float64))


def _boundary_v_hat(spec: ModelSpec, params: dict):
    """Quasipotential of the domain boundary: closed form when available."""
    if (spec.b_kind.kind == "additive"
            and spec.f_kind.kind in ("zero", "linear_damping")
            and spec.norm_kind.kind == "euclidean"):
        mu = np.asarray(spec.eigenvalues, dtype=float)
        if spec.f_kind.kind == "linear_damping":
            mu = mu - spec.f_kind.lam
        q = np.asarray(spec.q_weights)
        rates = np.where(q > 0, -mu / np.maximum(q, 1e-300) ** 2, np.inf)
        return float(spec.domain_radius ** 2 * np.min(rates)), "gramian"
    res = quasipotential_minimize(
        spec, TargetSpec("boundary"),
        T=params.get("quasipotential_T"), dt=params.get("quasipotential_dt"),
        opts=MinimizeOptions())
    return res.value, "minimize"


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    spec = cfg.model
    sim = SimConfig(dt=float(p["dt"]), epsilon=float(p["epsilon"]),
                    t_max=float(p["t_max"]), seed=cfg.seed,
                    x0=_x0_from_params(spec, p))
    record = bool(p.get("record_trajectory", True))
    traj, rec = run_to_exit(spec, sim, record=record)
    if record:
        header = ["time"] + [f"c{k}" for k in range(1, spec.mode_count + 1)]
        rows = [[t] + list(row) for t, row in zip(traj.times, traj.states)]
        write_csv(out / "trajectory.csv", header, rows)
    summary = {
        "kind": cfg.kind, "config": cfg.to_dict(),
        "exit_time": rec.exit_time, "censored": rec.censored,
        "exit_state": rec.exit_state.coeffs.tolist(),
    }
    write_summary(out, summary)
    return 0, summary


def _resolved_t_max(params, epsilon):
    if "t_max" in params:
        return float(params["t_max"])
    return default_t_max(float(params["v_hat"]), epsilon)


def _paths_csv(out: Path, name: str, spec: ModelSpec, records) -> None:
    header = ["path_id", "exit_time", "censored"] + \
        [f"exit_c{k}" for k in range(1, spec.mode_count + 1)]
    rows = [[i, rec.exit_time, rec.censored] + list(rec.exit_state.coeffs)
            for i, rec in records]
    write_csv(out / name, header, rows)


def cmd_exit_mc(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    spec = cfg.model
    eps = float(p["epsilon"])
    sim = SimConfig(dt=float(p["dt"]), epsilon=eps,
                    t_max=_resolved_t_max(p, eps), seed=cfg.seed,
                    x0=_x0_from_params(spec, p))
    records = []
    stats = ensemble_exit(spec, sim, int(p["n_paths"]), threads=cfg.threads,
                          collect=records)
    _paths_csv(out, "paths.csv", spec, records)
    summary = {"kind": cfg.kind, "config": cfg.to_dict(), "stats": stats.to_dict()}
    write_summary(out, summary)
    return 0, summary


def cmd_fw_scaling(cfg: ExperimentConfig, out: Path):
    """Exit-time exponent check: regression of log E[tau] against 1/eps."""
    p = cfg.params
    spec = cfg.model
    eps_list = [float(e) for e in p["epsilons"]]
    v_hat, v_src = _boundary_v_hat(spec, p)
    warnings = []
    if v_hat / min(eps_list) > 8.0:
        warnings.append(
            f"V_hat/epsilon = {v_hat / min(eps_list):.1f} > 8: plain Monte Carlo "
            "is outside its feasible regime")
        print(f"warning: {warnings[-1]}", file=sys.stderr)
    rows = []
    fit_x, fit_y = [], []
    for i, eps in enumerate(eps_list):
        t_max = float(p["t_max"]) if "t_max" in p else default_t_max(v_hat, eps)
        sim = SimConfig(dt=float(p["dt"]), epsilon=eps, t_max=t_max,
                        seed=cfg.seed + i, x0=_x0_from_params(spec, p))
        stats = ensemble_exit(spec, sim, int(p["n_paths"]), threads=cfg.threads)
        flagged = stats.unreliable
        rows.append([eps, stats.mean_exit_time, stats.stderr,
                     stats.eps_log_mean, stats.censor_frac, flagged])
        if not flagged:
            fit_x.append(1.0 / eps)
            fit_y.append(math.log(stats.mean_exit_time))
    write_csv(out / "scaling.csv",
              ["epsilon", "mean_exit_time", "stderr", "eps_log_mean",
               "censor_frac", "excluded"], rows)
    if len(fit_x) < 2:
        raise ExperimentFailure("too many censored sweeps: nothing to fit")
    x = np.asarray(fit_x)
    y = np.asarray(fit_y)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    se = math.sqrt(float(resid @ resid) / dof / float(np.sum((x - x.mean()) ** 2)))
    summary = {
        "kind": cfg.kind, "config": cfg.to_dict(),
        "rows": [dict(zip(("epsilon", "mean_exit_time", "stderr",
                           "eps_log_mean", "censor_frac", "excluded"), r))
                 for r in rows],
        "slope": float(slope), "slope_stderr": se,
        "slope_ci95": [float(slope - 1.96 * se), float(slope + 1.96 * se)],
        "v_hat": v_hat, "v_hat_source": v_src,
        "relative_gap": abs(float(slope) - v_hat) / v_hat if v_hat > 0 else math.inf,
        "warnings": warnings,
    }
    write_summary(out, summary)
    return 0, summary


def cmd_exit_place(cfg: ExperimentConfig, out: Path):
    """Exit-place concentration: fraction of exits landing in a boundary cap."""
    p = cfg.params
    spec = cfg.model
    if spec.norm_kind.kind != "euclidean":
        raise ConfigError("exit-place caps are defined for euclidean models")
    eps_list = [float(e) for e in p["epsilons"]]
    theta = float(p["cap_halfwidth"])
    if spec.mode_count < 2:
        raise ConfigError("exit-place needs at least two modes")
    v_boundary, _ = _boundary_v_hat(spec, p)
    cap = TargetSpec("boundary_cap", cap_halfwidth=theta)
    res_cap = quasipotential_minimize(
        spec, cap, T=p.get("quasipotential_T"), dt=p.get("quasipotential_dt"),
        opts=MinimizeOptions())
    v_cap = res_cap.value
    rows = []
    fractions = []
    for i, eps in enumerate(eps_list):
        t_max = float(p["t_max"]) if "t_max" in p else default_t_max(v_boundary, eps)
        sim = SimConfig(dt=float(p["dt"]), epsilon=eps, t_max=t_max,
                        seed=cfg.seed + i, x0=_x0_from_params(spec, p))
        records = []
        stats = ensemble_exit(spec, sim, int(p["n_paths"]), threads=cfg.threads,
                              collect=records)
        hits = sum(1 for _, rec in records
                   if not rec.censored and abs(rec.exit_state.coeffs[0]) <= theta)
        n_unc = sum(1 for _, rec in records if not rec.censored)
        frac = hits / n_unc if n_unc else math.nan
        fractions.append(frac)
        rows.append([eps, frac, n_unc, stats.censor_frac])
    write_csv(out / "exit_place.csv",
              ["epsilon", "cap_fraction", "n_uncensored", "censor_frac"], rows)
    gap = v_cap - v_boundary
    if gap <= 0.05 * max(v_boundary, 1e-12):
        verdict = "inconclusive"
        monotone = None
    else:
        # zero ties are fine: a region no exit ever lands in is maximal
        # concentration away from it, not a monotonicity failure
        monotone = all(b < a or a == b == 0.0
                       for a, b in zip(fractions, fractions[1:]))
        verdict = "confirmed" if monotone else "failed"
    summary = {
        "kind": cfg.kind, "config": cfg.to_dict(),
        "cap_halfwidth": theta,
        "v_boundary": v_boundary, "v_cap": v_cap, "v_gap": gap,
        "fractions": fractions, "monotone_decreasing": monotone,
        "verdict": verdict,
    }
    write_summary(out, summary)
    return (0 if verdict != "failed" else 1), summary


def cmd_quasipotential(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    spec = cfg.model
    opts = MinimizeOptions()
    if "tol_residual" in p:
        opts.tol_residual = float(p["tol_residual"])
    results = []
    all_converged = True
    for i, tgt in enumerate(p["targets"]):
        if tgt == "boundary":
            target = TargetSpec("boundary")
            label = "boundary"
        else:
            target = TargetSpec("point", SpectralField(np.asarray(tgt, dtype=float)))
            label = f"point_{i}"
        res = quasipotential_minimize(spec, target, T=p.get("T"),
                                      dt=p.get("dt"), opts=opts)
        all_converged = all_converged and res.converged
        doc = res.to_dict()
        doc["target"] = label
        if (spec.b_kind.kind == "additive"
                and spec.f_kind.kind in ("zero", "linear_damping")
                and target.kind == "point"):
            doc["closed_form"] = quasipotential_linear(spec, target.y)
        results.append(doc)
        header = ["t"] + [f"psi_{k}" for k in range(1, spec.mode_count + 1)]
        rows = [[t] + list(v) for t, v in zip(res.control.t_grid, res.control.values)]
        write_csv(out / f"control_{label}.csv", header, rows)
    summary = {"kind": cfg.kind, "config": cfg.to_dict(), "results": results,
               "all_converged": all_converged}
    write_summary(out, summary)
    return (0 if all_converged else 1), summary


def cmd_operator_norms(cfg: ExperimentConfig, out: Path):
    p = cfg.params
    spec = cfg.model
    t_list = [float(t) for t in p["t_list"]]
    report = norm_decay_check(spec, t_list, dt=p.get("dt"),
                              threshold=float(p.get("threshold", 0.15)))
    rows = []
    drops = []
    for t, nv in report.entries:
        step = float(p["dt"]) if p.get("dt") else t / 200.0
        op = build_Lt(spec, t, step)
        sigma, drop = singular_value_profile(op)
        drops.append({"t": t, "drop_index": drop})
        rows.append([t, nv] + list(sigma))
    width = max(len(r) for r in rows) - 2
    header = ["t", "norm"] + [f"sigma_{i+1}" for i in range(width)]
    write_csv(out / "operator_norms.csv", header, rows)
    summary = {"kind": cfg.kind, "config": cfg.to_dict(),
               "report": report.to_dict(), "singular_value_drops": drops}
    write_summary(out, summary)
    return (0 if report.passed else 1), summary


def cmd_validate(cfg: ExperimentConfig, out: Path):
    """Run every applicable hypothesis check and emit one verdict each."""
    p = cfg.params
    spec = cfg.model
    samples = int(p.get("samples", 1000))
    radius = float(p.get("radius", 3.0))
    verdicts = {}

    if spec.f_kind.kind in ("cubic", "anticubic", "linear_damping"):
        verdicts["drift_dissipativity"] = check_dissipativity(
            spec, samples=samples, radius=radius, seed=cfg.seed).to_dict()
    if spec.b_kind.kind == "multiplicative":
        verdicts["noise_coefficient_lipschitz"] = check_B_lipschitz(
            spec, samples=samples, seed=cfg.seed).to_dict()
    verdicts["attraction_to_equilibrium"] = attraction_check(
        spec, samples=min(samples, 50), seed=cfg.seed).to_dict()
    t_list = [float(t) for t in p.get("t_list", [1.0, 0.1, 0.01])]
    verdicts["operator_norm_decay"] = norm_decay_check(
        spec, t_list, threshold=float(p.get("threshold", 0.15))).to_dict()
    verdicts["apriori_growth_bound"] = apriori_bound_check(
        spec, samples=min(samples, 200), seed=cfg.seed).to_dict()
    verdicts["noise_summability"] = hqz_series_check(spec).to_dict()

    # boundary regularity: reaching just outside the closed domain should
    # cost barely more than reaching the boundary itself
    delta = float(p.get("h4_delta", 0.05)) * spec.domain_radius
    opts = MinimizeOptions()
    r_in = quasipotential_minimize(
        spec, TargetSpec("boundary"), T=p.get("quasipotential_T"),
        dt=p.get("quasipotential_dt"), opts=opts)
    r_out = quasipotential_minimize(
        spec, TargetSpec("boundary", radius=spec.domain_radius + delta),
        T=p.get("quasipotential_T"), dt=p.get("quasipotential_dt"), opts=opts)
    rel_jump = (r_out.value - r_in.value) / max(r_in.value, 1e-12)
    h4_ok = (r_in.converged and r_out.converged and math.isfinite(r_out.value)
             and rel_jump < 4.0 * delta / spec.domain_radius + 0.05)
    verdicts["boundary_regularity"] = {
        "hypothesis": "boundary_regularity",
        "v_boundary": r_in.value, "v_outside": r_out.value,
        "delta": delta, "relative_jump": rel_jump, "passed": bool(h4_ok),
    }

    all_passed = all(v.get("passed", False) for v in verdicts.values())
    summary = {"kind": cfg.kind, "config": cfg.to_dict(),
               "verdicts": verdicts, "all_passed": all_passed}
    write_summary(out, summary)
    return (0 if all_passed else 1), summary


_COMMANDS = {
    "simulate": cmd_simulate,
    "exit-mc": cmd_exit_mc,
    "fw-scaling": cmd_fw_scaling,
    "exit-place": cmd_exit_place,
    "quasipotential": cmd_quasipotential,
    "operator-norms": cmd_operator_norms,
    "validate-hypotheses": cmd_validate,
}

_SUBCOMMAND_KIND = {
    "simulate": "simulate",
    "exit-mc": "exit-mc",
    "fw-scaling": "fw-scaling",
    "exit-place": "exit-place",
    "quasipotential": "quasipotential",
    "operator-norms": "operator-norms",
    "validate": "validate-hypotheses",
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None):
    """Execute one experiment; returns (exit_code, summary dict)."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _COMMANDS[cfg.kind](cfg, out)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_experiment_config(json.load(fh))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fwexit",
        description="Exit-time/exit-place experiments for small-noise spectral models")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KIND:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker count")
        sp.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        want = _SUBCOMMAND_KIND[args.command]
        if cfg.kind != want:
            raise ConfigError(
                f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        if args.seed is not None:
            cfg = ExperimentConfig(cfg.kind, cfg.model, cfg.params,
                                   args.seed, cfg.threads, cfg.output_dir)
        if args.threads is not None:
            cfg = ExperimentConfig(cfg.kind, cfg.model, cfg.params,
                                   cfg.seed, args.threads, cfg.output_dir)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, _ = run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExperimentFailure as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
