"""
Stochastic time stepping, first-exit detection, and Monte Carlo ensembles
=========================================================================

The integrator is an exponential Euler scheme on the mode coefficients: the
linear flow enters through its exact per-mode factor exp(mu_k dt), the drift
explicitly, and the noise through the exact standard deviation of the
one-step stochastic convolution,

    sigma_k(dt) = sqrt((1 - exp(2 mu_k dt)) / (-2 mu_k)),

so that for the linear additive model the chain's one-step transition (and
hence every marginal variance) is exact at the grid times.  Multiplicative
noise freezes the coefficient at the step's left endpoint (Ito convention).

Exit from the domain is recorded at the first grid time whose state lies
outside; no sub-step refinement is applied, so the estimator is a discretely
monitored first-passage time (a documented upward bias of order sqrt(dt)
relative to the continuous exit time).

Every path owns a counter-based random stream keyed by (master seed, path
index), which makes ensembles reproducible bit for bit regardless of chunk
sizes, scheduling, or worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .model import ModelSpec, SpectralField, basis_matrix, in_domain, inverse_basis_matrix

_EMPTY = np.empty((0, 1))


@dataclass(frozen=True)
class SimConfig:
    """One stochastic integration setup.

    dt and t_max are in model time units; epsilon is the noise intensity;
    x0 the initial state; seed the master seed of the counter-based streams.
    """

    dt: float
    epsilon: float
    t_max: float
    seed: int
    x0: SpectralField

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt > self.t_max:
            raise ValueError("dt must not exceed t_max")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (len(times), N), row 0 is x0
    truncated: bool


@dataclass(frozen=True)
class ExitRecord:
    exit_time: float
    exit_state: SpectralField
    censored: bool


@dataclass(frozen=True)
class StepTables:
    """Precomputed per-(spec, dt, epsilon) arrays consumed by the kernels."""

    sg: np.ndarray              # exp(mu dt)
    fdt: np.ndarray             # dt * exp(mu dt), drift weight
    sigma: np.ndarray           # exact one-step convolution std per mode
    anoise: np.ndarray          # sqrt(eps) * q * sigma (additive path)
    snoise: np.ndarray          # sqrt(eps) * sigma (per-channel, mult path)
    cfac: np.ndarray            # (1 - exp(mu dt)) / (-mu), control weight
    q: np.ndarray
    phi: np.ndarray
    pinv: np.ndarray
    f_mode: int
    lam: float
    b_mode: int
    use_grid: int
    norm_mode: int


@lru_cache(maxsize=128)
def step_tables(spec: ModelSpec, dt: float, epsilon: float) -> StepTables:
    mu = np.asarray(spec.eigenvalues)
    q = np.asarray(spec.q_weights, dtype=np.float64)
    sg = np.exp(mu * dt)
    sigma = np.sqrt((1.0 - np.exp(2.0 * mu * dt)) / (-2.0 * mu))
    sqe = math.sqrt(epsilon)
    f_mode, lam, b_mode, use_grid, norm_mode = kernels.mode_switches(spec)
    return StepTables(
        sg=sg, fdt=dt * sg, sigma=sigma,
        anoise=sqe * q * sigma, snoise=sqe * sigma,
        cfac=(1.0 - sg) / (-mu), q=q,
        phi=np.ascontiguousarray(basis_matrix(spec)),
        pinv=np.ascontiguousarray(inverse_basis_matrix(spec)),
        f_mode=f_mode, lam=lam, b_mode=b_mode,
        use_grid=use_grid, norm_mode=norm_mode,
    )


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path, keyed by (master seed, index)."""
    return np.random.Generator(np.random.Philox(key=(seed & (2 ** 64 - 1), path_index)))


def step(spec: ModelSpec, sim: SimConfig, x: SpectralField,
         gaussians: np.ndarray) -> SpectralField:
    """One exponential-Euler step driven by N standard normals.

    x' = S(dt) x + dt S(dt) F(x) + sqrt(eps) QB(x) (sigma(dt) * g), with the
    per-mode exact convolution standard deviations sigma_k(dt).
    """
    g = np.asarray(gaussians, dtype=np.float64)
    if g.shape != (spec.mode_count,):
        raise ValueError(f"need exactly {spec.mode_count} gaussians")
    t = step_tables(spec, sim.dt, sim.epsilon)
    xa = x.coeffs.copy()
    kernels.exit_evolve_chunk(
        xa, g.reshape(1, -1), t.sg, t.fdt, t.anoise, t.snoise, t.q,
        t.phi, t.pinv, t.f_mode, t.lam, t.b_mode, t.use_grid, t.norm_mode,
        np.inf, 0, _EMPTY)
    return SpectralField(xa)


def run_to_exit(spec: ModelSpec, sim: SimConfig, record: bool = False,
                path_index: int = 0):
    """Integrate until the first state outside G, or until t_max.

    Returns (trajectory, exit_record); the trajectory is None unless
    ``record`` is set (memory guard for long ensembles).  The exit time is
    the first grid time whose state lies outside the open domain; if the
    time cap is reached first the record is censored.
    """
    if not in_domain(spec, sim.x0):
        raise ValueError("initial state lies outside the domain")
    t = step_tables(spec, sim.dt, sim.epsilon)
    n = spec.mode_count
    nmax = int(math.floor(sim.t_max / sim.dt + 1e-9))
    rng = path_rng(sim.seed, path_index)
    x = sim.x0.coeffs.copy()
    pieces = [sim.x0.coeffs.reshape(1, -1)] if record else None
    rec_flag = 1 if record else 0
    done = 0
    chunk = 256
    while done < nmax:
        take = min(chunk, nmax - done)
        g = rng.standard_normal((take, n))
        out = np.empty((take, n)) if record else _EMPTY
        hit = kernels.exit_evolve_chunk(
            x, g, t.sg, t.fdt, t.anoise, t.snoise, t.q, t.phi, t.pinv,
            t.f_mode, t.lam, t.b_mode, t.use_grid, t.norm_mode,
            spec.domain_radius, rec_flag, out)
        if hit >= 0:
            done += hit + 1
            if record:
                pieces.append(out[:hit + 1])
            rec = ExitRecord(done * sim.dt, SpectralField(x), censored=False)
            return _assemble(pieces, sim.dt, False), rec
        done += take
        if record:
            pieces.append(out)
        chunk = min(chunk * 2, 16384)
    rec = ExitRecord(nmax * sim.dt, SpectralField(x), censored=True)
    return _assemble(pieces, sim.dt, True), rec


def _assemble(pieces, dt, truncated):
    if pieces is None:
        return None
    states = np.vstack(pieces)
    times = np.arange(states.shape[0]) * dt
    return Trajectory(times, states, truncated)


@dataclass(frozen=True)
class ExitEnsembleStats:
    """Summary of an exit-time Monte Carlo ensemble.

    mean_exit_time and its standard error are computed over uncensored
    paths; censored paths only contribute to censor_frac.  eps_log_mean is
    the exit-exponent estimator eps * log(mean).  sign_counts holds the
    exit-place split by the sign of the mode-1 coordinate; location_counts
    bins the sup-attaining point of the exit state over the pointwise frame.
    """

    n_paths: int
    mean_exit_time: float
    stderr: float
    eps_log_mean: float
    censor_frac: float
    unreliable: bool
    sign_counts: tuple
    location_counts: tuple

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "mean_exit_time": self.mean_exit_time,
            "stderr": self.stderr,
            "eps_log_mean": self.eps_log_mean,
            "censor_frac": self.censor_frac,
            "unreliable": self.unreliable,
            "sign_counts": {"plus": self.sign_counts[0], "minus": self.sign_counts[1]},
            "location_counts": list(self.location_counts),
        }


def ensemble_exit(spec: ModelSpec, sim: SimConfig, n_paths: int,
                  threads: int = 1, collect=None):
    """Run n_paths independent exit simulations and aggregate.

    Each path uses the stream keyed by (sim.seed, path index), so the result
    is identical for any thread count.  ``collect``, if given, is a list
    that receives (path_index, ExitRecord) tuples sorted by index.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")

    def run_range(lo, hi):
        return [(i, run_to_exit(spec, sim, record=False, path_index=i)[1])
                for i in range(lo, hi)]

    if threads > 1 and n_paths > 1:
        blocks = []
        width = max(1, -(-n_paths // (threads * 4)))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_range, lo, min(lo + width, n_paths))
                       for lo in range(0, n_paths, width)]
            for f in futures:
                blocks.append(f.result())
        records = [rec for block in blocks for rec in block]
    else:
        records = run_range(0, n_paths)
    records.sort(key=lambda p: p[0])
    if collect is not None:
        collect.extend(records)

    phi = basis_matrix(spec)
    times = []
    plus = minus = 0
    loc = np.zeros(spec.grid_size, dtype=np.int64)
    n_censored = 0
    for _, rec in records:
        if rec.censored:
            n_censored += 1
            continue
        times.append(rec.exit_time)
        c1 = rec.exit_state.coeffs[0]
        if c1 >= 0:
            plus += 1
        else:
            minus += 1
        loc[int(np.argmax(np.abs(phi @ rec.exit_state.coeffs)))] += 1
    censor_frac = n_censored / n_paths
    if times:
        arr = np.asarray(times)
        mean = float(arr.mean())
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        eps_log = float(sim.epsilon * math.log(mean)) if mean > 0 else -math.inf
    else:
        mean, stderr, eps_log = math.nan, math.nan, math.nan
    return ExitEnsembleStats(
        n_paths=n_paths, mean_exit_time=mean, stderr=stderr,
        eps_log_mean=eps_log, censor_frac=censor_frac,
        unreliable=censor_frac > 0.5,
        sign_counts=(plus, minus), location_counts=tuple(int(v) for v in loc),
    )


def default_t_max(v_hat: float, epsilon: float, factor: float = 50.0) -> float:
    """Censoring cap localizing the exit-time scale e^{V/eps}."""
    return factor * math.exp((v_hat + 0.5) / epsilon)


def attraction_check(spec: ModelSpec, samples: int = 50, seed: int = 0,
                     T: float | None = None, dt: float = 0.01,
                     tol: float = 1e-6):
    """Check decay of the unperturbed flow toward the equilibrium.

    For seeded random starts inside G, integrates with epsilon = 0 and
    asserts |X(t)|_E <= C exp(-omega t) |x|_E (1 + tol) at every grid time,
    where C is the model's negative-type constant (exactly 1 in the
    euclidean norm; on a collocation grid mode mixing allows a transient
    sup-norm excess, so C > 1 there).
    """
    from .dynamics import HypothesisReport, random_field, seeded_rng
    from .model import negative_type_constant, sup_norm

    T = T if T is not None else 4.0 / spec.omega
    c_const = negative_type_constant(spec)
    rng = seeded_rng(seed)
    omega = spec.omega
    worst = -math.inf
    witness = None
    for _ in range(samples):
        x = random_field(spec, rng, 0.9 * spec.domain_radius)
        while not in_domain(spec, x):
            x = random_field(spec, rng, 0.9 * spec.domain_radius)
        sim = SimConfig(dt=dt, epsilon=0.0, t_max=T, seed=0, x0=x)
        traj, _ = run_to_exit(spec, sim, record=True)
        x_norm = sup_norm(spec, x)
        for i, row in enumerate(traj.states):
            bound = c_const * math.exp(-omega * i * dt) * x_norm * (1.0 + tol)
            excess = sup_norm(spec, SpectralField(row)) - bound
            if excess > worst:
                worst = excess
                if excess > 0:
                    witness = {"x": x.coeffs.tolist(), "t": i * dt,
                               "excess": float(excess)}
    return HypothesisReport(
        hypothesis="attraction_to_equilibrium", samples=samples,
        max_violation=float(worst), passed=worst <= 0.0, tolerance=tol,
        witness=witness,
        extra={"negative_type_constant": c_const, "T": T, "dt": dt})
