"""
Problem instances and state representation
==========================================

A problem instance couples a diagonal linear operator (given by its negative
eigenvalues), a diagonal noise weighting, a drift nonlinearity, a noise
coefficient, and a bounded open domain centred at the stable equilibrium 0.

States live in an N-mode truncation and are stored by their coefficients
against the orthonormal sine basis

    e_k(xi) = sqrt(2/pi) * sin(k*xi)   on (0, pi),

which diagonalizes the Dirichlet Laplacian (eigenvalue -k^2).  Two state
norms are supported: the sup norm evaluated on a uniform collocation grid
(function-space models) and the plain Euclidean norm of the coefficients
(finite-dimensional models).  The collocation grid doubles as the pointwise
frame in which Nemytskii-type nonlinearities act; for Euclidean models the
pointwise frame is simply the coordinate frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

F_KINDS = ("zero", "linear_damping", "cubic", "anticubic")
B_KINDS = ("additive", "multiplicative")
B_SCALARS = ("one", "identity", "sin", "cos")
NORM_KINDS = ("sup_on_grid", "euclidean")


@dataclass(frozen=True)
class FKind:
    """Drift selector.  ``anticubic`` (+u^3) is a negative control."""

    kind: str = "zero"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in F_KINDS:
            raise ValueError(f"unknown f_kind {self.kind!r}, expected one of {F_KINDS}")
        if self.kind == "linear_damping" and self.lam <= 0:
            raise ValueError("linear_damping requires lam > 0")


@dataclass(frozen=True)
class BKind:
    """Noise coefficient selector.

    ``additive`` applies the diagonal weights alone.  ``multiplicative``
    composes them with pointwise multiplication by ``b(state)``, where ``b``
    is one of the named scalar functions in ``B_SCALARS`` and ``kappa`` is
    its declared Lipschitz/growth constant.
    """

    kind: str = "additive"
    b: str = "one"
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in B_KINDS:
            raise ValueError(f"unknown b_kind {self.kind!r}, expected one of {B_KINDS}")
        if self.kind == "multiplicative":
            if self.b not in B_SCALARS:
                raise ValueError(f"unknown scalar b {self.b!r}, expected one of {B_SCALARS}")
            if self.kappa <= 0:
                raise ValueError("multiplicative noise requires kappa > 0")


@dataclass(frozen=True)
class NormKind:
    kind: str = "euclidean"
    collocation_points: int = 0

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm_kind {self.kind!r}, expected one of {NORM_KINDS}")


@dataclass(frozen=True)
class ModelSpec:
    """Complete description of one problem instance.

    Parameters
    ----------
    mode_count : int
        Number of retained modes N.
    eigenvalues : tuple of float
        N strictly negative eigenvalues mu_k of the linear operator.
    q_weights : tuple of float
        N nonnegative diagonal noise weights q_k.
    f_kind : FKind
        Drift nonlinearity.
    b_kind : BKind
        Noise coefficient.
    domain_radius : float
        Radius R of the open domain G = {x : |x|_E < R}.
    norm_kind : NormKind
        How |.|_E is evaluated.  For ``sup_on_grid`` the default number of
        collocation points is 4N+1, enough to de-alias a cubic nonlinearity
        (frequency tripling stays inside the resolved band).
    """

    mode_count: int
    eigenvalues: tuple
    q_weights: tuple
    f_kind: FKind = FKind()
    b_kind: BKind = BKind()
    domain_radius: float = 1.0
    norm_kind: NormKind = NormKind()

    def __post_init__(self):
        n = self.mode_count
        if n < 1:
            raise ValueError("mode_count must be >= 1")
        object.__setattr__(self, "eigenvalues", tuple(float(m) for m in self.eigenvalues))
        object.__setattr__(self, "q_weights", tuple(float(q) for q in self.q_weights))
        if len(self.eigenvalues) != n:
            raise ValueError("eigenvalues must have length mode_count")
        if len(self.q_weights) != n:
            raise ValueError("q_weights must have length mode_count")
        if any(m >= 0 for m in self.eigenvalues):
            raise ValueError("all eigenvalues must be strictly negative")
        if any(q < 0 for q in self.q_weights):
            raise ValueError("q_weights must be nonnegative")
        if not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive (0 must lie inside G)")
        if self.norm_kind.kind == "sup_on_grid":
            m = self.norm_kind.collocation_points
            if m == 0:
                object.__setattr__(self, "norm_kind", NormKind("sup_on_grid", 4 * n + 1))
            elif m < 2 * n + 1:
                raise ValueError("collocation_points must be >= 2*mode_count+1")

    @property
    def omega(self) -> float:
        """Slowest decay rate, min_k |mu_k|."""
        return min(-m for m in self.eigenvalues)

    @property
    def grid_size(self) -> int:
        """Number of points in the pointwise frame (N for euclidean models)."""
        if self.norm_kind.kind == "sup_on_grid":
            return self.norm_kind.collocation_points
        return self.mode_count

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        f = self.f_kind
        b = self.b_kind
        nk = self.norm_kind
        return {
            "mode_count": self.mode_count,
            "eigenvalues": list(self.eigenvalues),
            "q_weights": list(self.q_weights),
            "f_kind": f.kind if f.kind != "linear_damping" else {"kind": f.kind, "lam": f.lam},
            "b_kind": b.kind if b.kind == "additive"
            else {"kind": b.kind, "b": b.b, "kappa": b.kappa},
            "domain_radius": self.domain_radius,
            "norm_kind": nk.kind if nk.kind == "euclidean"
            else {"kind": nk.kind, "collocation_points": nk.collocation_points},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def from_dict(doc: dict) -> "ModelSpec":
        return parse_model_spec(doc)

    @staticmethod
    def from_json(text: str) -> "ModelSpec":
        return parse_model_spec(json.loads(text))


def _reject_unknown(doc: dict, allowed: set, where: str) -> None:
    extra = set(doc) - allowed
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)} in {where}")


def _parse_f_kind(doc) -> FKind:
    if isinstance(doc, str):
        if doc == "linear_damping":
            raise ValueError("linear_damping requires a lam parameter: {'kind': 'linear_damping', 'lam': ...}")
        return FKind(doc)
    if isinstance(doc, dict):
        _reject_unknown(doc, {"kind", "lam"}, "f_kind")
        return FKind(doc["kind"], float(doc.get("lam", 0.0)))
    raise ValueError(f"f_kind must be a string or object, got {type(doc).__name__}")


def _parse_b_kind(doc) -> BKind:
    if isinstance(doc, str):
        return BKind(doc)
    if isinstance(doc, dict):
        _reject_unknown(doc, {"kind", "b", "kappa"}, "b_kind")
        return BKind(doc["kind"], doc.get("b", "one"), float(doc.get("kappa", 1.0)))
    raise ValueError(f"b_kind must be a string or object, got {type(doc).__name__}")


def _parse_norm_kind(doc) -> NormKind:
    if isinstance(doc, str):
        return NormKind(doc)
    if isinstance(doc, dict):
        _reject_unknown(doc, {"kind", "collocation_points"}, "norm_kind")
        return NormKind(doc["kind"], int(doc.get("collocation_points", 0)))
    raise ValueError(f"norm_kind must be a string or object, got {type(doc).__name__}")


_MODEL_KEYS = {"mode_count", "eigenvalues", "q_weights", "f_kind", "b_kind",
               "domain_radius", "norm_kind"}


def parse_model_spec(doc: dict) -> ModelSpec:
    """Parse a ModelSpec document, rejecting unknown keys (fail-fast).

    ``{"builtin": name, ...overrides}`` is also accepted, where overrides
    replace individual fields of the named built-in spec.
    """
    if not isinstance(doc, dict):
        raise ValueError("model spec must be a JSON object")
    if "builtin" in doc:
        _reject_unknown(doc, _MODEL_KEYS | {"builtin"}, "model")
        mc = doc.get("mode_count")
        base = builtin_spec(doc["builtin"], int(mc) if mc is not None else None).to_dict()
        base.update({k: v for k, v in doc.items() if k != "builtin"})
        doc = base
    _reject_unknown(doc, _MODEL_KEYS, "model")
    missing = {"mode_count", "eigenvalues", "q_weights", "domain_radius"} - set(doc)
    if missing:
        raise ValueError(f"model spec missing required keys {sorted(missing)}")
    return ModelSpec(
        mode_count=int(doc["mode_count"]),
        eigenvalues=tuple(doc["eigenvalues"]),
        q_weights=tuple(doc["q_weights"]),
        f_kind=_parse_f_kind(doc.get("f_kind", "zero")),
        b_kind=_parse_b_kind(doc.get("b_kind", "additive")),
        domain_radius=float(doc["domain_radius"]),
        norm_kind=_parse_norm_kind(doc.get("norm_kind", "euclidean")),
    )


# -- states ----------------------------------------------------------------

@dataclass(frozen=True)
class SpectralField:
    """A state, stored by its coefficients against the orthonormal basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64).copy()
        if arr.ndim != 1:
            raise ValueError("coeffs must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coeffs must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    def __len__(self):
        return self.coeffs.shape[0]


def zero_field(spec: ModelSpec) -> SpectralField:
    return SpectralField(np.zeros(spec.mode_count))


def unit_mode(spec: ModelSpec, k: int, amplitude: float = 1.0) -> SpectralField:
    """The field ``amplitude * e_k`` (k is 1-based, matching the basis index)."""
    c = np.zeros(spec.mode_count)
    c[k - 1] = amplitude
    return SpectralField(c)


# -- grid machinery --------------------------------------------------------

@lru_cache(maxsize=64)
def _grid_tables(spec: ModelSpec):
    """Pointwise-frame matrices: values = phi @ coeffs, coeffs = pinv @ values.

    For ``sup_on_grid`` these are the discrete sine transform pair on M
    uniform interior points xi_j = j*pi/(M+1); the DST is exactly orthogonal
    there, so pinv @ phi = I to machine precision.  For ``euclidean`` the
    frame is the coordinate frame and both matrices are the identity.
    """
    n = spec.mode_count
    if spec.norm_kind.kind == "euclidean":
        eye = np.eye(n)
        eye.setflags(write=False)
        return None, eye, eye.copy()
    m = spec.norm_kind.collocation_points
    xi = np.arange(1, m + 1) * (math.pi / (m + 1))
    k = np.arange(1, n + 1)
    s = np.sin(np.outer(xi, k))                       # (M, N)
    phi = math.sqrt(2.0 / math.pi) * s
    pinv = math.sqrt(math.pi / 2.0) * (2.0 / (m + 1)) * s.T
    xi.setflags(write=False)
    phi.setflags(write=False)
    pinv.setflags(write=False)
    return xi, phi, pinv


def collocation_grid(spec: ModelSpec):
    """Grid abscissae for sup_on_grid models, None for euclidean ones."""
    return _grid_tables(spec)[0]


def basis_matrix(spec: ModelSpec) -> np.ndarray:
    """Matrix mapping coefficients to pointwise-frame values."""
    return _grid_tables(spec)[1]


def inverse_basis_matrix(spec: ModelSpec) -> np.ndarray:
    """Matrix mapping pointwise-frame values back to coefficients."""
    return _grid_tables(spec)[2]


def point_values(spec: ModelSpec, x: SpectralField) -> np.ndarray:
    """Evaluate a field in the pointwise frame."""
    return basis_matrix(spec) @ x.coeffs


def values_to_field(spec: ModelSpec, values: np.ndarray) -> SpectralField:
    """Project pointwise-frame values onto the retained modes."""
    return SpectralField(inverse_basis_matrix(spec) @ np.asarray(values, dtype=np.float64))


# -- core operations -------------------------------------------------------

def semigroup_apply(spec: ModelSpec, t: float, x: SpectralField) -> SpectralField:
    """Apply the linear flow: mode k is scaled by exp(mu_k t).

    Raises
    ------
    ValueError
        If t is negative (the flow is only defined forward in time).
    """
    if t < 0:
        raise ValueError("semigroup is defined for t >= 0 only")
    mu = np.asarray(spec.eigenvalues)
    return SpectralField(np.exp(mu * t) * x.coeffs)


def sup_norm(spec: ModelSpec, x: SpectralField) -> float:
    """State norm |x|_E under the model's norm convention."""
    if spec.norm_kind.kind == "euclidean":
        return float(np.linalg.norm(x.coeffs))
    return float(np.max(np.abs(point_values(spec, x))))


def pointwise_sup_norm(spec: ModelSpec, x: SpectralField) -> float:
    """Max-abs value over the pointwise frame.

    Coincides with :func:`sup_norm` for sup_on_grid models; for euclidean
    models it is the max-abs coordinate, the norm in which pointwise
    dissipativity estimates hold.
    """
    return float(np.max(np.abs(point_values(spec, x))))


def in_domain(spec: ModelSpec, x: SpectralField) -> bool:
    """True iff x lies in the open domain G, i.e. |x|_E < R."""
    return sup_norm(spec, x) < spec.domain_radius


def h_norm(spec: ModelSpec, values: np.ndarray) -> float:
    """L2 norm of pointwise-frame values under the frame's quadrature.

    For the DST grid the weight pi/(M+1) makes this exact for band-limited
    fields (discrete Parseval); for the coordinate frame it is the plain
    Euclidean norm.
    """
    v = np.asarray(values, dtype=np.float64)
    if spec.norm_kind.kind == "euclidean":
        return float(np.linalg.norm(v))
    m = spec.norm_kind.collocation_points
    return float(math.sqrt(math.pi / (m + 1)) * np.linalg.norm(v))


@lru_cache(maxsize=64)
def negative_type_constant(spec: ModelSpec, t_points: int = 200) -> float:
    """Smallest C with |S(t)x|_E <= C exp(-omega t) |x|_E on the truncation.

    Equals 1 exactly in the euclidean norm.  On a collocation grid the sup
    norm admits transient growth relative to exp(-omega t) (mode mixing can
    unmask a slow component hidden by cancellation at t=0), so C > 1; it is
    computed as the max over a time grid of the induced inf-norm of the
    rescaled propagator.
    """
    if spec.norm_kind.kind == "euclidean":
        return 1.0
    phi = basis_matrix(spec)
    pinv = inverse_basis_matrix(spec)
    mu = np.asarray(spec.eigenvalues)
    omega = spec.omega
    horizon = 10.0 / omega
    best = 1.0
    for t in np.linspace(0.0, horizon, t_points):
        g = (phi * np.exp((mu + omega) * t)) @ pinv
        best = max(best, float(np.max(np.sum(np.abs(g), axis=1))))
    return best


# -- built-in specs ----------------------------------------------------------

def builtin_spec(name: str, mode_count: int | None = None) -> ModelSpec:
    """Named problem instances used across experiments and tests.

    ou
        Scalar Ornstein-Uhlenbeck: N=1, mu=-1, q=1, euclidean, R=1.
    heat_linear
        Linear heat chain, mu_k=-k^2, Q=I, euclidean, R=0.5 (default N=4).
    heat2
        Two-mode heat chain, mu=(-1,-4), euclidean, R=0.5.
    heat_cubic
        Heat chain with dissipative cubic drift, sup norm on the grid, R=1
        (default N=8).
    heat_mult
        heat_cubic with multiplicative noise b(r)=cos(r), kappa=1
        (nonvanishing at the equilibrium, so the noise stays active there).
    cubic1d
        Scalar gradient flow dx = (-x - x^3) dt, euclidean, R=1.
    stagnation
        Compactness negative control: q_k=k against mu_k=-k^2 (default N=64).
    """
    key = name.strip().lower()
    if key in ("ou", "heat2", "cubic1d") and mode_count not in (None,
                                                                1 if key != "heat2" else 2):
        raise ValueError(f"builtin spec {name!r} has a fixed mode count")
    if key == "ou":
        return ModelSpec(1, (-1.0,), (1.0,), FKind("zero"), BKind("additive"), 1.0,
                         NormKind("euclidean"))
    if key == "heat_linear":
        n = mode_count or 4
        return ModelSpec(n, tuple(-float(k * k) for k in range(1, n + 1)),
                         (1.0,) * n, FKind("zero"), BKind("additive"), 0.5,
                         NormKind("euclidean"))
    if key == "heat2":
        return ModelSpec(2, (-1.0, -4.0), (1.0, 1.0), FKind("zero"),
                         BKind("additive"), 0.5, NormKind("euclidean"))
    if key == "heat_cubic":
        n = mode_count or 8
        return ModelSpec(n, tuple(-float(k * k) for k in range(1, n + 1)),
                         (1.0,) * n, FKind("cubic"), BKind("additive"), 1.0,
                         NormKind("sup_on_grid"))
    if key == "heat_mult":
        n = mode_count or 8
        return ModelSpec(n, tuple(-float(k * k) for k in range(1, n + 1)),
                         (1.0,) * n, FKind("cubic"),
                         BKind("multiplicative", "cos", 1.0), 1.0,
                         NormKind("sup_on_grid"))
    if key == "cubic1d":
        return ModelSpec(1, (-1.0,), (1.0,), FKind("cubic"), BKind("additive"),
                         1.0, NormKind("euclidean"))
    if key == "stagnation":
        n = mode_count or 64
        return ModelSpec(n, tuple(-float(k * k) for k in range(1, n + 1)),
                         tuple(float(k) for k in range(1, n + 1)),
                         FKind("zero"), BKind("additive"), 1.0,
                         NormKind("euclidean"))
    raise ValueError(f"unknown builtin spec {name!r}")
