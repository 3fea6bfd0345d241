"""
Drift and noise coefficients, and numerical hypothesis validators
=================================================================

The drift F and noise coefficient B act pointwise in the model's pointwise
frame (collocation values for function-space models, coordinates for
euclidean ones).  The validators draw seeded random states and check the
structural inequalities the theory rests on: polynomial dissipativity of the
cubic drift and the Lipschitz/linear-growth bounds of the multiplication
noise coefficient.  They fail loudly with a witness when an inequality
breaks beyond tolerance, which is exactly what happens for the shipped
wrong-sign cubic control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ModelSpec,
    SpectralField,
    basis_matrix,
    inverse_basis_matrix,
    h_norm,
    point_values,
    pointwise_sup_norm,
)

# Dissipativity constants of the cubic drift: the pointwise identity
#   -(v+w)^3 + v^3 = -w^3 - 3 v^2 w - 3 v w^2
# gives, at a frame point where |w| attains its max,
#   sign(w) * (F(x+h)-F(x)) <= -|h|^3 + 3|v||h|^2
# and Young's inequality absorbs the cross term with lam = 1/2 once
# kappa >= 16 (split |v||h|^2 <= s^{-3}|v|^3/3 + 2 s^{3/2}|h|^3/3, s^{3/2}=1/4).
CUBIC_LAMBDA = 0.5
CUBIC_KAPPA = 16.0
CUBIC_POWER = 3


def scalar_b(name: str):
    """Named scalar functions r -> b(r) for multiplication noise."""
    if name == "one":
        return lambda r: np.ones_like(np.asarray(r, dtype=np.float64))
    if name == "identity":
        return lambda r: np.asarray(r, dtype=np.float64)
    if name == "sin":
        return np.sin
    if name == "cos":
        return np.cos
    raise ValueError(f"unknown scalar b {name!r}")


def drift_values(spec: ModelSpec, values: np.ndarray) -> np.ndarray:
    """F applied in the pointwise frame."""
    kind = spec.f_kind.kind
    if kind == "zero":
        return np.zeros_like(values)
    if kind == "linear_damping":
        return -spec.f_kind.lam * values
    if kind == "cubic":
        return -values ** 3
    if kind == "anticubic":
        return values ** 3
    raise AssertionError(kind)


def apply_F(spec: ModelSpec, x: SpectralField) -> SpectralField:
    """Drift nonlinearity in coefficient space.

    The cubic acts pointwise in the frame (cube, negate) and is projected
    back onto the retained modes; linear damping scales coefficients
    directly; the zero drift returns 0.  F(0) = 0 in every case.
    """
    if spec.f_kind.kind == "zero":
        return SpectralField(np.zeros(spec.mode_count))
    if spec.f_kind.kind == "linear_damping":
        return SpectralField(-spec.f_kind.lam * x.coeffs)
    vals = drift_values(spec, point_values(spec, x))
    return SpectralField(inverse_basis_matrix(spec) @ vals)


def apply_B(spec: ModelSpec, x: SpectralField, h: SpectralField) -> SpectralField:
    """Action of the composed noise coefficient Q.B(x) on a direction h.

    Additive: coefficient-wise q_k h_k, independent of the state.
    Multiplicative: pointwise product b(x(.)) h(.) in the frame, projected
    back, then q-weighted.
    """
    q = np.asarray(spec.q_weights)
    if spec.b_kind.kind == "additive":
        return SpectralField(q * h.coeffs)
    b = scalar_b(spec.b_kind.b)
    vx = point_values(spec, x)
    vh = point_values(spec, h)
    return SpectralField(q * (inverse_basis_matrix(spec) @ (b(vx) * vh)))


def noise_matrix(spec: ModelSpec, x: SpectralField) -> np.ndarray:
    """N x N matrix of Q.B(x) on the truncation.

    Row k is the coefficient expansion of b(x(.)) e_j(.), scaled by q_k;
    in the additive case the matrix is diag(q) for every state.
    """
    n = spec.mode_count
    q = np.asarray(spec.q_weights)
    if spec.b_kind.kind == "additive":
        return np.diag(q)
    b = scalar_b(spec.b_kind.b)
    bx = b(point_values(spec, x))
    mat = inverse_basis_matrix(spec) @ (bx[:, None] * basis_matrix(spec))
    return q[:, None] * mat


# -- hypothesis validators ---------------------------------------------------

@dataclass
class HypothesisReport:
    """Outcome of one structural-inequality check."""

    hypothesis: str
    samples: int
    max_violation: float
    passed: bool
    tolerance: float
    witness: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "hypothesis": self.hypothesis,
            "samples": self.samples,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "tolerance": self.tolerance,
        }
        if self.witness is not None:
            doc["witness"] = self.witness
        doc.update(self.extra)
        return doc


def seeded_rng(seed: int) -> np.random.Generator:
    # Counter-based stream: reports are reproducible bit-for-bit.
    return np.random.Generator(np.random.Philox(key=(seed & (2 ** 64 - 1), 0)))


def random_field(spec: ModelSpec, rng: np.random.Generator, radius: float) -> SpectralField:
    """Random field rescaled so its pointwise sup norm is U(0, radius]."""
    c = rng.standard_normal(spec.mode_count)
    f = SpectralField(c)
    s = pointwise_sup_norm(spec, f)
    if s == 0.0:
        return f
    return SpectralField(c * (radius * rng.uniform(0.2, 1.0) / s))


def check_dissipativity(spec: ModelSpec, samples: int = 1000, radius: float = 3.0,
                        seed: int = 0) -> HypothesisReport:
    """Check polynomial dissipativity of the drift at the sup-attaining point.

    For random pairs (x, h) with pointwise sup norm at most ``radius``, the
    frame point xi* attaining max|h| stands in for the subdifferential of
    the sup norm (point mass at the argmax; ties break to the smallest
    index), and the check asserts

        sign(h(xi*)) (F(x+h)(xi*) - F(x)(xi*))
            <= -lam |h|^m + kappa (1 + |x|^m)

    with (lam, kappa, m) = (1/2, 16, 3) for the cubic and (lam, 0, 1) for
    linear damping.  Norms are pointwise sup norms.  Returns the max
    violation over the sample; the report fails (with the violating pair)
    if it exceeds tolerance.
    """
    kind = spec.f_kind.kind
    if kind not in ("cubic", "anticubic", "linear_damping"):
        raise ValueError("dissipativity check expects a cubic or linear_damping drift")
    if kind == "linear_damping":
        lam, kappa, m = spec.f_kind.lam, 0.0, 1
    else:
        lam, kappa, m = CUBIC_LAMBDA, CUBIC_KAPPA, CUBIC_POWER
    tol = 1e-9
    rng = seeded_rng(seed)
    worst = -math.inf
    witness = None
    for _ in range(samples):
        x = random_field(spec, rng, radius)
        h = random_field(spec, rng, radius)
        vx = point_values(spec, x)
        vh = point_values(spec, h)
        j = int(np.argmax(np.abs(vh)))      # first index wins on ties
        s = 1.0 if vh[j] >= 0 else -1.0
        lhs = s * (drift_values(spec, vx + vh)[j] - drift_values(spec, vx)[j])
        hn = float(np.max(np.abs(vh)))
        xn = float(np.max(np.abs(vx)))
        violation = lhs - (-lam * hn ** m + kappa * (1.0 + xn ** m))
        if violation > worst:
            worst = violation
            if violation > tol:
                witness = {"x": x.coeffs.tolist(), "h": h.coeffs.tolist(),
                           "lhs": float(lhs), "violation": float(violation)}
    return HypothesisReport(
        hypothesis="drift_dissipativity",
        samples=samples,
        max_violation=float(worst),
        passed=worst <= tol,
        tolerance=tol,
        witness=witness,
        extra={"lam": lam, "kappa": kappa, "power": m, "radius": radius},
    )


def check_B_lipschitz(spec: ModelSpec, samples: int = 1000, seed: int = 0,
                      radius: float = 3.0) -> HypothesisReport:
    """Check the Lipschitz and linear-growth bounds of the multiplication B.

    Random triples (x, y, h); asserts, in the frame's L2 norm,

        |(B(x) - B(y)) h|  <= kappa |x - y|_sup |h|
        |B(x) h|           <= kappa (1 + |x|_sup) |h|

    and reports the max ratio against the declared kappa.
    """
    if spec.b_kind.kind != "multiplicative":
        raise ValueError("B-Lipschitz check expects multiplicative noise")
    b = scalar_b(spec.b_kind.b)
    kappa = spec.b_kind.kappa
    tol = 1e-9
    rng = seeded_rng(seed)
    worst = 0.0
    witness = None
    for _ in range(samples):
        x = random_field(spec, rng, radius)
        y = random_field(spec, rng, radius)
        h = random_field(spec, rng, radius)
        vx, vy, vh = (point_values(spec, f) for f in (x, y, h))
        hn = h_norm(spec, vh)
        if hn == 0.0:
            continue
        diff = h_norm(spec, (b(vx) - b(vy)) * vh)
        grow = h_norm(spec, b(vx) * vh)
        dxy = float(np.max(np.abs(vx - vy)))
        r1 = diff / (kappa * dxy * hn) if dxy > 0 else 0.0
        r2 = grow / (kappa * (1.0 + np.max(np.abs(vx))) * hn)
        ratio = max(r1, r2)
        if ratio > worst:
            worst = ratio
            if ratio > 1.0 + tol:
                witness = {"x": x.coeffs.tolist(), "y": y.coeffs.tolist(),
                           "h": h.coeffs.tolist(), "ratio": float(ratio)}
    return HypothesisReport(
        hypothesis="noise_coefficient_lipschitz",
        samples=samples,
        max_violation=float(max(worst - 1.0, 0.0) * kappa),
        passed=worst <= 1.0 + tol,
        tolerance=tol,
        witness=witness,
        extra={"kappa": kappa, "max_ratio": float(worst)},
    )
