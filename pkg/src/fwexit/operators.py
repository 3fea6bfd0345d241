"""
Discretized convolution operators and numerical compactness diagnostics
=======================================================================

The map from a control on [0, t] to the state it produces at time t,
psi -> int_0^t S(s) Q psi(s) ds, discretizes to an N x (N n_t) matrix whose
largest singular value is the operator norm from (sampled, sqrt(dt)-weighted)
L2 controls to states.  Its norm must vanish as t -> 0 and its singular
values must decay whenever the map is compact; the shipped stagnation model
(q_k = k against mu_k = -k^2) is the negative control whose norm plateaus at
1/sqrt(2) instead.  A priori growth bounds on controlled trajectories are
validated by seeded sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .action import ControlPath, controlled_trajectory
from .dynamics import HypothesisReport, random_field, seeded_rng
from .model import (
    ModelSpec,
    SpectralField,
    basis_matrix,
    negative_type_constant,
    sup_norm,
)


@dataclass(frozen=True)
class DiscretizedOperator:
    """Left-endpoint quadrature of the control-to-state convolution.

    Column block i equals sqrt(dt) diag(exp(mu_k (t - t_i)) q_k) with
    t_i = i dt, so applying the matrix to sqrt(dt)-weighted control samples
    approximates the time integral, and the matrix 2-norm is the discrete
    L2 -> E operator norm.
    """

    matrix: np.ndarray
    t: float
    dt: float

    def apply(self, psi_samples: np.ndarray) -> np.ndarray:
        """Map sampled controls (n_t, N) to the terminal state."""
        w = math.sqrt(self.dt) * np.asarray(psi_samples, dtype=np.float64)
        return self.matrix @ w.ravel()


def build_Lt(spec: ModelSpec, t: float, dt: float) -> DiscretizedOperator:
    """Discretize the convolution over [0, t]; dt must divide t."""
    if t <= 0 or dt <= 0:
        raise ValueError("t and dt must be positive")
    nt = int(round(t / dt))
    if abs(nt * dt - t) > 1e-9 * max(t, 1.0):
        raise ValueError("dt must divide t")
    n = spec.mode_count
    mu = np.asarray(spec.eigenvalues)
    q = np.asarray(spec.q_weights)
    lags = t - np.arange(nt) * dt                       # (nt,)
    diag = np.exp(np.outer(mu, lags)) * q[:, None]      # (N, nt)
    mat = np.zeros((n, n * nt))
    cols = np.arange(nt) * n
    for k in range(n):
        mat[k, cols + k] = math.sqrt(dt) * diag[k]
    return DiscretizedOperator(mat, float(t), float(dt))


def operator_norm(op: DiscretizedOperator) -> float:
    """Largest singular value (L2 controls to euclidean states)."""
    return float(np.linalg.norm(op.matrix, 2))


def grid_operator_norm(spec: ModelSpec, op: DiscretizedOperator) -> float:
    """L2 -> sup-on-grid norm: max over grid rows of the row L2 norm."""
    rows = basis_matrix(spec) @ op.matrix
    return float(np.max(np.linalg.norm(rows, axis=1)))


def singular_value_profile(op: DiscretizedOperator):
    """Descending singular values plus the index of the 1 percent drop.

    Returns (sigma, drop_index); drop_index is the first i with
    sigma_i < 0.01 sigma_0, or None if no such index exists (the
    non-compact signature).
    """
    sigma = np.linalg.svd(op.matrix, compute_uv=False)
    if sigma[0] == 0:
        return sigma, 0
    below = np.nonzero(sigma < 0.01 * sigma[0])[0]
    return sigma, (int(below[0]) if below.size else None)


def infinite_horizon_norm(spec: ModelSpec, dt: float, horizon_factor: float = 20.0):
    """Norm of the infinite-horizon map, truncated at t = factor/omega.

    Returns (norm, tail_bound): the tail beyond the truncation is dominated
    by the geometric series sum_j exp(-omega j) |L_1| starting at the
    truncation time.
    """
    omega = spec.omega
    t_inf = horizon_factor / omega
    nt = int(math.ceil(t_inf / dt))
    op = build_Lt(spec, nt * dt, dt)
    t_one = round(1.0 / dt) * dt if dt <= 1.0 else dt
    one = build_Lt(spec, t_one, dt)
    m_const = negative_type_constant(spec)
    tail = m_const * math.exp(-omega * nt * dt) / (1.0 - math.exp(-omega)) \
        * operator_norm(one)
    return operator_norm(op), tail


@dataclass
class NormDecayReport:
    """Outcome of the small-time operator-norm decay check."""

    entries: list = field(default_factory=list)       # (t, norm) pairs
    monotone: bool = False
    decayed: bool = False
    stagnation: bool = False
    threshold: float = 0.0
    plateau_value: float | None = None
    passed: bool = False

    def to_dict(self) -> dict:
        return {
            "hypothesis": "operator_norm_decay",
            "entries": [{"t": t, "norm": v} for t, v in self.entries],
            "monotone": self.monotone,
            "decayed": self.decayed,
            "stagnation": self.stagnation,
            "threshold": self.threshold,
            "plateau_value": self.plateau_value,
            "passed": self.passed,
        }


def norm_decay_check(spec: ModelSpec, t_list, dt: float | None = None,
                     threshold: float = 0.15) -> NormDecayReport:
    """Check that the operator norm decays to zero with the horizon.

    Computes the norm for each t in the decreasing list (each with its own
    step t/200 unless dt is given), asserts a monotone decrease and that the
    smallest-horizon norm falls below the threshold.  A sequence that stays
    flat is reported as stagnation rather than decay, which is the signature
    of a non-compact convolution map.
    """
    ts = [float(t) for t in t_list]
    if sorted(ts, reverse=True) != ts:
        raise ValueError("t_list must be decreasing")
    use_sup = spec.norm_kind.kind == "sup_on_grid"
    entries = []
    for t in ts:
        step = dt if dt is not None else t / 200.0
        op = build_Lt(spec, t, step)
        nv = grid_operator_norm(spec, op) if use_sup else operator_norm(op)
        entries.append((t, nv))
    norms = [v for _, v in entries]
    monotone = all(b < a for a, b in zip(norms, norms[1:]))
    decayed = norms[-1] <= threshold
    stagnation = norms[0] > 0 and norms[-1] / norms[0] > 0.8
    report = NormDecayReport(
        entries=entries, monotone=monotone, decayed=decayed,
        stagnation=stagnation, threshold=threshold,
        plateau_value=norms[-1] if stagnation else None,
        passed=monotone and decayed and not stagnation,
    )
    return report


def apriori_bound_check(spec: ModelSpec, samples: int = 200, seed: int = 0,
                        c: float = 4.0, T: float | None = None,
                        dt: float = 0.01, x_radius: float = 2.0,
                        psi_l2: float = 3.0) -> HypothesisReport:
    """Check the a priori growth bound of controlled trajectories.

    For seeded random initial states (|x|_E <= x_radius) and controls
    (L2 norm <= psi_l2), integrates the controlled system and asserts

        sup_t |X(t)|_E^2  <=  c (|x|^2 + 1 + |psi|^2) exp(c |psi|^2)

    with the frozen constant c.  Any overflow is reported as a failure with
    the offending sample (the signature of lost dissipativity).  The psi = 0
    case is covered separately by the attraction check.
    """
    T = T if T is not None else 4.0 / spec.omega
    nt = int(round(T / dt))
    rng = seeded_rng(seed)
    worst = -math.inf
    witness = None
    for _ in range(samples):
        x = random_field(spec, rng, x_radius)
        if spec.norm_kind.kind == "euclidean":
            raw = rng.standard_normal(spec.mode_count)
            x = SpectralField(raw * (x_radius * rng.uniform(0.2, 1.0)
                                     / max(np.linalg.norm(raw), 1e-12)))
        psi_vals = rng.standard_normal((nt, spec.mode_count))
        l2 = math.sqrt(dt * float(np.sum(psi_vals ** 2)))
        psi_vals *= psi_l2 * rng.uniform(0.2, 1.0) / max(l2, 1e-12)
        psi = ControlPath(dt, psi_vals)
        traj = controlled_trajectory(spec, x, psi)
        if not np.all(np.isfinite(traj.states)):
            return HypothesisReport(
                hypothesis="apriori_growth_bound", samples=samples,
                max_violation=math.inf, passed=False, tolerance=0.0,
                witness={"x": x.coeffs.tolist(), "note": "trajectory overflow"},
                extra={"c": c})
        sup_x2 = max(sup_norm(spec, SpectralField(row)) for row in traj.states) ** 2
        pn2 = dt * float(np.sum(psi.values ** 2))
        bound = c * (sup_norm(spec, x) ** 2 + 1.0 + pn2) * math.exp(c * pn2)
        violation = sup_x2 - bound
        if violation > worst:
            worst = violation
            if violation > 0:
                witness = {"x": x.coeffs.tolist(), "sup_sq": sup_x2, "bound": bound}
    return HypothesisReport(
        hypothesis="apriori_growth_bound", samples=samples,
        max_violation=float(worst), passed=worst <= 0.0, tolerance=0.0,
        witness=witness, extra={"c": c, "T": T, "dt": dt})


def hqz_series_check(spec: ModelSpec, T: float = 1.0) -> HypothesisReport:
    """Check the summability condition behind the Gaussian convolution.

    Evaluates the truncated series sum_k q_k^2 |e_k|_E^2
    (1 - exp(2 mu_k T)) / (-2 mu_k) and estimates the tail from the log-log
    slope of the last terms: a slope >= -1 flags divergence (the stagnation
    model's q_k = k yields flat terms and fails; bounded q against
    mu_k = -k^2 passes).
    """
    mu = np.asarray(spec.eigenvalues)
    q = np.asarray(spec.q_weights)
    if spec.norm_kind.kind == "euclidean":
        bn = np.ones_like(q)
    else:
        bn = np.max(np.abs(basis_matrix(spec)), axis=0)
    terms = q ** 2 * bn ** 2 * (1.0 - np.exp(2.0 * mu * T)) / (-2.0 * mu)
    partial = float(np.sum(terms))
    n = spec.mode_count
    slope = None
    converged = True
    if n >= 4:
        ks = np.arange(1, n + 1, dtype=float)
        half = n // 2
        sel = terms[half:] > 0
        if np.count_nonzero(sel) >= 2:
            lk = np.log(ks[half:][sel])
            lt = np.log(terms[half:][sel])
            slope = float(np.polyfit(lk, lt, 1)[0])
            converged = slope < -1.0
    return HypothesisReport(
        hypothesis="noise_summability", samples=n,
        max_violation=0.0 if converged else 1.0,
        passed=converged, tolerance=0.0,
        extra={"partial_sum": partial, "tail_slope": slope, "T": T})
