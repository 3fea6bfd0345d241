"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  Criterion 3 is split into
its two sub-claims: the regression-slope check (passes) and the per-epsilon
comparison of the discretely monitored exit-time estimator against the
continuous mean-exit-time oracle at dt = 1e-3, which carries an irreducible
O(sqrt(dt)) monitoring bias of 5-7 percent and therefore fails its 5 percent
tolerance; see the README notes.  The supporting discrete-chain oracle
comparison (exact expectation of the estimator itself) is printed alongside.
"""
import json
import math
import time

import numpy as np
import pytest

from fwexit.action import (
    ControlPath,
    TargetSpec,
    action_value,
    controlled_trajectory,
    quasipotential_linear,
    quasipotential_minimize,
    rate_function_of_path,
)
from fwexit.cli import parse_experiment_config, run_experiment
from fwexit.dynamics import check_B_lipschitz, check_dissipativity
from fwexit.model import (
    FKind,
    ModelSpec,
    NormKind,
    SpectralField,
    builtin_spec,
    negative_type_constant,
    sup_norm,
    unit_mode,
)
from fwexit.operators import build_Lt, norm_decay_check, operator_norm
from fwexit.simulate import path_rng
from oracles import (
    bruteforce_quasipotential_1d,
    evolve_same_noise,
    ou_discrete_mfpt_nystrom,
    ou_mfpt_quadrature,
)


def report(name, ok, detail=""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")


# ---------------------------------------------------------------------------
# 1. quasipotential oracle equivalence on linear additive models
# ---------------------------------------------------------------------------

def test_criterion_1_quasipotential_oracle_equivalence():
    budget = 30.0
    worst = 0.0
    cases = []
    for name, n in (("ou", 1), ("heat_linear", 4), ("heat_linear", 8)):
        spec = builtin_spec(name, mode_count=n) if name != "ou" else builtin_spec("ou")
        rng = np.random.Generator(np.random.Philox(key=(2024, n)))
        targets = []
        for _ in range(10):
            y = rng.standard_normal(spec.mode_count)
            y *= rng.uniform(0.1, 0.8) * spec.domain_radius / np.linalg.norm(y)
            targets.append(TargetSpec("point", SpectralField(y)))
        targets.append(TargetSpec("boundary"))
        for tgt in targets:
            t0 = time.perf_counter()
            res = quasipotential_minimize(spec, tgt)
            elapsed = time.perf_counter() - t0
            if tgt.kind == "point":
                exact = quasipotential_linear(spec, tgt.y)
            else:
                mu = np.asarray(spec.eigenvalues)
                exact = spec.domain_radius ** 2 * float(np.min(-mu))
            rel = abs(res.value - exact) / exact
            cases.append((name, n, tgt.kind, rel, elapsed, res.converged))
            worst = max(worst, rel)
            assert elapsed < budget, f"{name} N={n} run took {elapsed:.1f}s"
            assert res.converged
    ok = all(rel <= 0.02 for _, _, _, rel, _, _ in cases)
    report("1 quasipotential-oracle-equivalence", ok,
           f"33 runs, worst rel err {worst * 100:.2f}% (tolerance 2%)")
    assert ok, cases


# ---------------------------------------------------------------------------
# 2. scalar cubic gradient-flow quasipotential
# ---------------------------------------------------------------------------

def test_criterion_2_cubic_gradient_flow_value():
    # double potential gap: 2 (U(1) - U(0)) with U = x^2/2 + x^4/4
    target_value = 2.0 * (0.5 + 0.25)
    spec = builtin_spec("cubic1d")
    res = quasipotential_minimize(spec, TargetSpec("boundary"))
    rel = abs(res.value - target_value) / target_value
    # independent check: generic optimizer over coarse piecewise-constant
    # controls with a plain-Euler integrator approaches the same value
    brute, miss = bruteforce_quasipotential_1d(lambda x: -x - x ** 3)
    ok = rel <= 0.03 and abs(brute - target_value) / target_value <= 0.10 \
        and miss < 0.02
    report("2 cubic-gradient-flow", ok,
           f"V={res.value:.4f} vs 1.5 ({rel * 100:.2f}%), brute force {brute:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# 3. exit-time scaling (shared ensemble run)
# ---------------------------------------------------------------------------

EPSILONS = [0.5, 0.4, 0.33, 0.25]


@pytest.fixture(scope="module")
def fw_scaling_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fw")
    cfg = parse_experiment_config({
        "kind": "fw-scaling",
        "model": {"builtin": "ou"},
        "params": {"dt": 1e-3, "epsilons": EPSILONS, "n_paths": 20000,
                   "t_max": 2000.0},
        "seed": 71,
        "threads": 4,
        "output_dir": str(out),
    })
    t0 = time.perf_counter()
    code, summary = run_experiment(cfg, out)
    elapsed = time.perf_counter() - t0
    assert code == 0
    return summary, elapsed


def test_criterion_3_exit_time_scaling_slope(fw_scaling_run):
    summary, elapsed = fw_scaling_run
    slope = summary["slope"]
    rel = abs(slope - 1.0)
    ok = rel <= 0.15 and elapsed <= 600.0
    report("3a exit-time scaling slope", ok,
           f"slope={slope:.4f} vs V=1.0 ({rel * 100:.1f}%, tolerance 15%), "
           f"4x20000 paths in {elapsed:.0f}s")
    assert ok


def test_criterion_3_exit_means_vs_dynkin_oracle(fw_scaling_run):
    """Expected honest failure: the grid-time exit estimator at dt = 1e-3
    exceeds the continuous mean-exit-time oracle by 5-7 percent (discrete
    monitoring bias ~ 2 R beta sqrt(dt/eps), beta = 0.5826), so the stated
    5 percent tolerance cannot be met.  The estimator itself is exact: it
    matches the discrete-chain expectation within Monte Carlo error.
    """
    summary, _ = fw_scaling_run
    rows = {r["epsilon"]: r for r in summary["rows"]}
    gaps = []
    all_within_5pct = True
    for eps in EPSILONS:
        mc = rows[eps]["mean_exit_time"]
        se = rows[eps]["stderr"]
        cont = ou_mfpt_quadrature(eps)
        disc = ou_discrete_mfpt_nystrom(eps, 1e-3)
        gap = (mc - cont) / cont
        gaps.append(f"eps={eps}: +{gap * 100:.1f}% vs continuous "
                    f"(discrete-chain oracle within {abs(mc - disc) / se:.1f} se)")
        assert abs(mc - disc) <= 4.0 * se, \
            f"estimator disagrees with its own discrete law at eps={eps}"
        if abs(mc - cont) > 0.05 * cont:
            all_within_5pct = False
    report("3b exit means within 5% of continuous oracle", all_within_5pct,
           "; ".join(gaps))
    assert all_within_5pct, (
        "discretely monitored exit times at dt=1e-3 sit 5-7% above the "
        "continuous oracle; the bias is intrinsic to the stated estimator "
        "(no sub-step exit refinement), see README notes: " + "; ".join(gaps))


# ---------------------------------------------------------------------------
# 4. exit-place concentration
# ---------------------------------------------------------------------------

def test_criterion_4_exit_place_concentration(tmp_path):
    spec = builtin_spec("heat2")
    v_mode2 = quasipotential_linear(spec, unit_mode(spec, 2, spec.domain_radius))
    v_mode1 = quasipotential_linear(spec, unit_mode(spec, 1, spec.domain_radius))
    assert v_mode1 == pytest.approx(0.25)
    assert v_mode2 == pytest.approx(1.0)
    cfg = parse_experiment_config({
        "kind": "exit-place",
        "model": {"builtin": "heat2"},
        "params": {"dt": 1e-3, "epsilons": [0.5, 0.35, 0.25], "n_paths": 6000,
                   "t_max": 500.0, "cap_halfwidth": 0.1},
        "seed": 13,
        "threads": 4,
        "output_dir": str(tmp_path),
    })
    code, summary = run_experiment(cfg, tmp_path)
    fr = summary["fractions"]
    ok = (code == 0 and summary["verdict"] == "confirmed"
          and summary["monotone_decreasing"] and fr[-1] < 0.05)
    report("4 exit-place concentration", ok,
           f"cap fractions {[round(f, 4) for f in fr]}, "
           f"V gap {summary['v_boundary']:.3f} vs mode-2 {v_mode2:.2f}")
    assert ok, summary


# ---------------------------------------------------------------------------
# 5. operator norm decay and the stagnation negative control
# ---------------------------------------------------------------------------

def test_criterion_5_operator_norm_decay():
    spec = builtin_spec("heat_linear", mode_count=8)
    worst = 0.0
    for t in (1.0, 0.1, 0.01):
        nv = operator_norm(build_Lt(spec, t, t / 200))
        cf = math.sqrt((1.0 - math.exp(-2.0 * t)) / 2.0)
        worst = max(worst, abs(nv - cf) / cf)
    stag = norm_decay_check(builtin_spec("stagnation"), [1.0, 0.1, 0.01])
    plateau_rel = abs(stag.plateau_value - 1 / math.sqrt(2)) * math.sqrt(2)
    ok = worst <= 0.01 and (not stag.passed) and stag.stagnation \
        and plateau_rel <= 0.02
    report("5 operator-norm decay", ok,
           f"closed-form gap {worst * 100:.2f}% (tol 1%), stagnation plateau "
           f"{stag.plateau_value:.4f} = 1/sqrt(2) {plateau_rel * 100:+.2f}%, flagged")
    assert ok


# ---------------------------------------------------------------------------
# 6. hypothesis suite and its negative control
# ---------------------------------------------------------------------------

def test_criterion_6_hypothesis_suite():
    cubic = builtin_spec("heat_cubic")
    mult = builtin_spec("heat_mult")
    r1 = check_dissipativity(cubic, samples=1000, radius=3.0, seed=7)
    r2 = check_B_lipschitz(mult, samples=1000, seed=7)
    bad = ModelSpec(cubic.mode_count, cubic.eigenvalues, cubic.q_weights,
                    FKind("anticubic"), cubic.b_kind, cubic.domain_radius,
                    cubic.norm_kind)
    r3 = check_dissipativity(bad, samples=1000, radius=3.0, seed=7)
    ok = (r1.passed and r1.max_violation <= 1e-9
          and r2.passed and r2.max_violation <= 1e-9
          and (not r3.passed) and r3.witness is not None)
    report("6 hypothesis suite", ok,
           f"cubic violation {r1.max_violation:.1e}, lipschitz ratio "
           f"{r2.extra['max_ratio']:.6f}, wrong-sign control caught with witness")
    assert ok


# ---------------------------------------------------------------------------
# 7. contraction in initial data and attraction to the equilibrium
# ---------------------------------------------------------------------------

def test_criterion_7_contraction_and_attraction():
    dt, nsteps, eps = 0.01, 200, 0.2
    additive_specs = [builtin_spec("ou"), builtin_spec("heat_linear"),
                      builtin_spec("heat_cubic")]
    worst_excess = -math.inf
    pair_id = 0
    for spec in additive_specs:
        rng = np.random.Generator(np.random.Philox(key=(777, spec.mode_count)))
        for _ in range(34):
            scale = 0.3 * spec.domain_radius
            x = scale * rng.standard_normal(spec.mode_count)
            y = scale * rng.standard_normal(spec.mode_count)
            g = path_rng(pair_id, 0).standard_normal((nsteps, spec.mode_count))
            pair_id += 1
            xs = evolve_same_noise(spec, dt, eps, x, g)
            ys = evolve_same_noise(spec, dt, eps, y, g)
            d0 = sup_norm(spec, SpectralField(x - y))
            dmax = max(sup_norm(spec, SpectralField(a - b))
                       for a, b in zip(xs, ys))
            worst_excess = max(worst_excess, dmax - d0)
    contraction_ok = worst_excess <= 10 * dt

    attraction_ok = True
    worst_ratio = 0.0
    for name in ("ou", "heat_linear", "heat2", "heat_cubic", "heat_mult", "cubic1d"):
        spec = builtin_spec(name)
        c_grid = negative_type_constant(spec)
        rng = np.random.Generator(np.random.Philox(key=(55, spec.mode_count)))
        for trial in range(17):
            x0 = rng.standard_normal(spec.mode_count)
            x0 *= 0.8 * spec.domain_radius * rng.uniform(0.2, 1.0) \
                / max(sup_norm(spec, SpectralField(x0)), 1e-12)
            g = np.zeros((300, spec.mode_count))
            xs = evolve_same_noise(spec, dt, 0.0, x0, g)
            n0 = sup_norm(spec, SpectralField(x0))
            for i, row in enumerate(xs):
                bound = c_grid * math.exp(-spec.omega * i * dt) * n0
                ratio = sup_norm(spec, SpectralField(row)) / max(bound, 1e-300)
                worst_ratio = max(worst_ratio, ratio)
                if ratio > 1.0 + 1e-9:
                    attraction_ok = False
    ok = contraction_ok and attraction_ok
    report("7 contraction and attraction", ok,
           f"100 same-noise pairs, worst distance excess {worst_excess:.2e} "
           f"(allowance {10 * dt}); attraction worst ratio {worst_ratio:.4f}")
    assert ok


# ---------------------------------------------------------------------------
# 8. rate-function round trip
# ---------------------------------------------------------------------------

def test_criterion_8_rate_function_round_trip():
    dt = 0.01
    worst = 0.0
    count = 0
    for name in ("ou", "heat_linear", "heat_cubic"):
        spec = builtin_spec(name, mode_count=4 if name == "heat_linear" else None)
        rng = np.random.Generator(np.random.Philox(key=(31, spec.mode_count)))
        for _ in range(34):
            psi = ControlPath(dt, 0.5 * rng.standard_normal((150, spec.mode_count)))
            x0 = SpectralField(0.2 * rng.standard_normal(spec.mode_count))
            traj = controlled_trajectory(spec, x0, psi)
            a = action_value(psi)
            err = abs(rate_function_of_path(spec, traj) - a)
            worst = max(worst, err / (5 * dt * (1 + a)))
            count += 1
    ok = worst <= 1.0
    report("8 rate-function round trip", ok,
           f"{count} controls, worst error at {worst * 100:.2g}% of the bound")
    assert ok


# ---------------------------------------------------------------------------
# 9. bytewise reproducibility across thread counts
# ---------------------------------------------------------------------------

def test_criterion_9_reproducibility(tmp_path):
    doc = {
        "kind": "exit-mc",
        "model": {"builtin": "ou"},
        "params": {"dt": 1e-3, "epsilon": 0.5, "t_max": 500.0, "n_paths": 400},
        "seed": 5,
        "threads": 1,
        "output_dir": "unused",
    }
    outputs = []
    for threads in (1, 4, 7):
        doc["threads"] = threads
        cfg = parse_experiment_config(doc)
        out = tmp_path / f"t{threads}"
        run_experiment(cfg, out)
        outputs.append((out / "paths.csv").read_bytes())
    identical = outputs[0] == outputs[1] == outputs[2]
    # and the whole summary apart from the thread count itself
    summaries = []
    for threads in (1, 4):
        s = json.loads((tmp_path / f"t{threads}" / "summary.json").read_text())
        s["config"].pop("threads")
        summaries.append(s)
    ok = identical and summaries[0] == summaries[1]
    report("9 reproducibility", ok,
           "byte-identical CSV for thread counts 1, 4, 7")
    assert ok
