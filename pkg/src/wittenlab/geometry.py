"""Rotationally symmetric model manifolds, potentials and curvature tensors.

A model is the warped metric ``dr^2 + psi(r)^2 g_{S^{n-1}}`` on a radial
interval.  Every tensor is radial, so it is described by two eigenvalues:
one in the radial direction and one (with multiplicity n-1) tangential.
All eigenvalues are reported relative to the current metric
``g(t) = c(t) g_0``, which divides coordinate second-derivative data by
``c(t)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from .errors import GeometryError, InputError, UnsupportedFlowError

if TYPE_CHECKING:  # pragma: no cover
    from .flows import FlowSpec

ArrayFn = Callable[[np.ndarray], np.ndarray]

KINDS = ("euclidean", "sphere", "hyperbolic", "circle", "interval", "custom")
BOUNDARIES = ("pole-regular", "reflecting", "periodic")

# Tolerance used to decide whether a sample radius sits on a pole.
_POLE_TOL = 1e-12


def central_derivatives(fn: ArrayFn, r, h: float = 1e-3):
    """First and second derivatives by fourth-order central differences.

    Returns
    -------
    d1, d2 : ndarray
        Derivative estimates.
    err : float
        Truncation error scale ``h**4``; the true error is this times a
        fifth/sixth derivative bound of ``fn``.
    """
    r = np.asarray(r, dtype=float)
    fm2, fm1, f0, fp1, fp2 = (fn(r + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    return d1, d2, h**4


@dataclass(frozen=True)
class RadialModel:
    """Warped-product model ``dr^2 + psi(r)^2 g_{S^{n-1}}``.

    Use the class constructors (:meth:`sphere`, :meth:`euclidean`,
    :meth:`hyperbolic`, :meth:`circle`, :meth:`interval`, :meth:`custom`)
    rather than calling the dataclass directly.
    """

    kind: str
    n: int
    r_min: float
    r_max: float
    boundary: tuple
    psi_fn: ArrayFn = field(repr=False, compare=False)
    dpsi_fn: ArrayFn = field(repr=False, compare=False)
    d2psi_fn: ArrayFn = field(repr=False, compare=False)
    # Constant sectional curvature for the space forms; None for custom warps.
    curvature: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"dimension n must be an integer >= 1, got {self.n}")
        if not (np.isfinite(self.r_min) and np.isfinite(self.r_max)) or self.r_max <= self.r_min:
            raise InputError(f"invalid domain [{self.r_min}, {self.r_max}]")
        if len(self.boundary) != 2 or any(b not in BOUNDARIES for b in self.boundary):
            raise InputError(f"invalid boundary specification {self.boundary!r}")
        if ("periodic" in self.boundary) and self.boundary != ("periodic", "periodic"):
            raise InputError("periodic boundaries must be periodic at both ends")
        for side, r0 in zip(self.boundary, (self.r_min, self.r_max)):
            if side == "pole-regular":
                if self.n == 1:
                    raise InputError("pole-regular endpoints need n >= 2")
                if abs(float(self.psi_fn(np.array(r0)))) > 1e-12:
                    raise InputError(f"pole-regular endpoint at r={r0} needs psi=0")
                if abs(abs(float(self.dpsi_fn(np.array(r0)))) - 1.0) > 1e-8:
                    raise InputError(f"pole-regular endpoint at r={r0} needs |psi'|=1")

    # constructors ------------------------------------------------------
    @classmethod
    def sphere(cls, n: int = 2) -> "RadialModel":
        """Round unit sphere ``S^n`` in geodesic polar coordinates."""
        if n < 2:
            raise InputError("the sphere model needs n >= 2; use circle for n=1")
        return cls("sphere", n, 0.0, math.pi, ("pole-regular", "pole-regular"),
                   np.sin, np.cos, lambda r: -np.sin(r), 1.0)

    @classmethod
    def euclidean(cls, n: int = 2, r_max: float = 7.0) -> "RadialModel":
        """Euclidean ball of radius ``r_max`` with a reflecting rim."""
        left = "pole-regular" if n >= 2 else "reflecting"
        return cls("euclidean", n, 0.0, float(r_max), (left, "reflecting"),
                   lambda r: np.asarray(r, dtype=float) * 1.0,
                   lambda r: np.ones_like(np.asarray(r, dtype=float)),
                   lambda r: np.zeros_like(np.asarray(r, dtype=float)), 0.0)

    @classmethod
    def hyperbolic(cls, n: int = 3, r_max: float = 6.0) -> "RadialModel":
        """Hyperbolic space truncated at ``r_max`` with a reflecting rim."""
        if n < 2:
            raise InputError("the hyperbolic model needs n >= 2")
        return cls("hyperbolic", n, 0.0, float(r_max), ("pole-regular", "reflecting"),
                   np.sinh, np.cosh, np.sinh, -1.0)

    @classmethod
    def circle(cls) -> "RadialModel":
        """Unit circle of length ``2 pi``."""
        one = lambda r: np.ones_like(np.asarray(r, dtype=float))
        zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        return cls("circle", 1, 0.0, 2 * math.pi, ("periodic", "periodic"), one, zero, zero, 0.0)

    @classmethod
    def interval(cls, length: float = math.pi) -> "RadialModel":
        """Interval ``[0, length]`` with reflecting ends."""
        one = lambda r: np.ones_like(np.asarray(r, dtype=float))
        zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        return cls("interval", 1, 0.0, float(length), ("reflecting", "reflecting"),
                   one, zero, zero, 0.0)

    @classmethod
    def custom(cls, psi: ArrayFn, n: int, r_min: float, r_max: float, boundary,
               dpsi: ArrayFn | None = None, d2psi: ArrayFn | None = None,
               h: float = 1e-3) -> "RadialModel":
        """Model with a user warp.

        Missing derivatives are estimated by fourth-order central
        differences with step ``h`` (truncation error of order ``h**4``).
        """
        if dpsi is None or d2psi is None:
            def dpsi(r, _f=psi, _h=h):
                return central_derivatives(_f, r, _h)[0]

            def d2psi(r, _f=psi, _h=h):
                return central_derivatives(_f, r, _h)[1]
        return cls("custom", n, float(r_min), float(r_max), tuple(boundary), psi, dpsi, d2psi, None)

    # evaluation --------------------------------------------------------
    @property
    def length(self) -> float:
        return self.r_max - self.r_min

    @property
    def periodic(self) -> bool:
        return self.boundary[0] == "periodic"

    @property
    def area(self) -> float:
        """Volume of the unit ``S^{n-1}`` fibre (1 for one-dimensional models)."""
        if self.kind in ("circle", "interval") or (self.n == 1 and self.kind == "custom"):
            return 1.0
        return 2 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)

    def psi(self, r):
        return self.psi_fn(np.asarray(r, dtype=float))

    def dpsi(self, r):
        return self.dpsi_fn(np.asarray(r, dtype=float))

    def d2psi(self, r):
        return self.d2psi_fn(np.asarray(r, dtype=float))

    def pole_mask(self, r) -> np.ndarray:
        """Boolean mask of sample radii that coincide with a pole-regular end."""
        r = np.asarray(r, dtype=float)
        mask = np.zeros(r.shape, dtype=bool)
        if self.boundary[0] == "pole-regular":
            mask |= np.abs(r - self.r_min) <= _POLE_TOL
        if self.boundary[1] == "pole-regular":
            mask |= np.abs(r - self.r_max) <= _POLE_TOL
        return mask

    def check_radius(self, r) -> np.ndarray:
        """Validate radii against the closed domain; return them as an array."""
        r = np.asarray(r, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.r_max))
        if np.any(~np.isfinite(r)) or np.any(r < self.r_min - tol) or np.any(r > self.r_max + tol):
            raise InputError(f"radius outside the domain [{self.r_min}, {self.r_max}]")
        return r

    def sectional(self, r):
        """Radial and tangential sectional curvatures ``(-psi''/psi, (1-psi'^2)/psi^2)``.

        Space forms return their constant curvature, which is also the
        correct limit at the poles.
        """
        r = self.check_radius(r)
        if self.curvature is not None:
            k = np.full(r.shape, float(self.curvature))
            return k, k.copy()
        poles = self.pole_mask(r)
        rr = np.where(poles, r + np.where(r <= self.r_min + _POLE_TOL, 1e-4, -1e-4), r)
        p = self.psi(rr)
        if np.any(p <= 0):
            raise GeometryError("warp function is non-positive inside the domain")
        return -self.d2psi(rr) / p, (1 - self.dpsi(rr) ** 2) / p**2

    def log_derivative(self, r):
        """``psi'/psi`` with poles mapped to NaN (callers substitute limits)."""
        r = self.check_radius(r)
        p = self.psi(r)
        poles = self.pole_mask(r)
        safe = np.where(poles, 1.0, p)
        if np.any(safe <= 0):
            raise GeometryError("warp function is non-positive inside the domain")
        return np.where(poles, np.nan, self.dpsi(r) / safe)


# potentials ------------------------------------------------------------------

def _zeros(r, t=0.0):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class PotentialSpec:
    """Radial potential ``phi(r, t)`` with closed-form derivatives.

    Attributes
    ----------
    phi, dr, drr, dt, drt : callable
        ``phi`` and its derivatives ``d/dr``, ``d^2/dr^2``, ``d/dt``,
        ``d^2/(dr dt)``; each maps ``(r, t)`` to an array.
    spatially_constant : bool
        True when ``phi`` does not depend on ``r`` (required for ``m = n``).
    base, offset : optional
        Set by :meth:`shifted`: ``phi = base.phi + offset(t)``.
    time_dependent : bool
        False when ``phi`` (apart from ``offset``) ignores ``t``.
    """

    name: str
    phi: Callable = field(repr=False, compare=False)
    dr: Callable = field(repr=False, compare=False)
    drr: Callable = field(repr=False, compare=False)
    dt: Callable = field(default=_zeros, repr=False, compare=False)
    drt: Callable = field(default=_zeros, repr=False, compare=False)
    spatially_constant: bool = False
    params: tuple = ()
    base: Optional["PotentialSpec"] = field(default=None, repr=False, compare=False)
    offset: Optional[Callable] = field(default=None, repr=False, compare=False)
    time_dependent: bool = False

    def shifted(self, offset: Callable, doffset: Callable, label: str) -> "PotentialSpec":
        """Add a spatially constant function of time to ``phi``."""
        base = self

        def phi(r, t):
            return base.phi(r, t) + offset(t)

        def dt(r, t):
            return base.dt(r, t) + doffset(t)

        return PotentialSpec(f"{base.name}+{label}", phi, base.dr, base.drr, dt, base.drt,
                             base.spatially_constant, base.params, base, offset,
                             base.time_dependent)


def zero_potential() -> PotentialSpec:
    return PotentialSpec("zero", _zeros, _zeros, _zeros, spatially_constant=True)


def constant_potential(value: float) -> PotentialSpec:
    return PotentialSpec("constant", lambda r, t=0.0: np.full_like(np.asarray(r, dtype=float), value),
                         _zeros, _zeros, spatially_constant=True, params=(("value", value),))


def quadratic_potential(a: float = 1.0) -> PotentialSpec:
    """``phi = a r^2 / 2`` (smooth at a pole)."""
    return PotentialSpec(
        "quadratic",
        lambda r, t=0.0: 0.5 * a * np.asarray(r, dtype=float) ** 2,
        lambda r, t=0.0: a * np.asarray(r, dtype=float),
        lambda r, t=0.0: np.full_like(np.asarray(r, dtype=float), a),
        spatially_constant=(a == 0), params=(("a", a),))


def cosine_potential(a: float = 1.0) -> PotentialSpec:
    """``phi = a cos r``; smooth at both poles of the sphere."""
    return PotentialSpec(
        "cosine",
        lambda r, t=0.0: a * np.cos(r),
        lambda r, t=0.0: -a * np.sin(r),
        lambda r, t=0.0: -a * np.cos(r),
        spatially_constant=(a == 0), params=(("a", a),))


POTENTIALS = {
    "zero": zero_potential,
    "constant": constant_potential,
    "quadratic": quadratic_potential,
    "cosine": cosine_potential,
}


def make_potential(name: str, **params) -> PotentialSpec:
    """Build a potential from the preset registry."""
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise InputError(f"unknown potential preset {name!r}; known: {sorted(POTENTIALS)}") from None
    return factory(**params)


# curvature -------------------------------------------------------------------

@dataclass
class CurvatureSample:
    """Curvature eigenvalues at sample radii, in units of the current metric.

    ``*_rr`` is the radial eigenvalue and ``*_tan`` the tangential one.
    ``ricmn_*`` is NaN where undefined.
    """

    r: np.ndarray
    t: float
    ric_rr: np.ndarray
    ric_tan: np.ndarray
    hess_rr: np.ndarray
    hess_tan: np.ndarray
    ricL_rr: np.ndarray
    ricL_tan: np.ndarray
    ricmn_rr: np.ndarray
    ricmn_tan: np.ndarray
    h_rr: np.ndarray
    h_tan: np.ndarray
    tr_h: np.ndarray
    s_r: np.ndarray


def ricci_radial(model: RadialModel, r):
    """Ricci eigenvalues ``(ric_rr, ric_tan)`` of the reference metric.

    Uses ``ric_rr = -(n-1) psi''/psi`` and
    ``ric_tan = -psi''/psi + (n-2)(1-psi'^2)/psi^2``; both vanish for n=1.
    Pole samples use the regular limit.
    """
    r = model.check_radius(r)
    if model.n == 1:
        z = np.zeros(r.shape)
        return z, z.copy()
    k_rad, k_tan = model.sectional(r)
    n = model.n
    return (n - 1) * k_rad, k_rad + (n - 2) * k_tan


def _check_dimension(model: RadialModel, potential: PotentialSpec, m: float, strict: bool = False):
    n = model.n
    if m is None or (isinstance(m, float) and math.isnan(m)):
        raise InputError("dimension parameter m is required")
    if m < n:
        raise InputError(f"dimension parameter m={m} must satisfy m >= n={n}")
    if m == n:
        if strict:
            raise InputError(f"this quantity needs m > n (got m = n = {n})")
        if not potential.spatially_constant:
            raise InputError("m = n is only allowed when phi is spatially constant")


def _scale(flow: Optional["FlowSpec"], t: float) -> float:
    if flow is None:
        return 1.0
    c = float(flow.c(t))
    if not c > 0:
        raise GeometryError(f"homothety factor c({t}) = {c} is not positive")
    return c


def bakry_emery(model: RadialModel, potential: PotentialSpec, m: float, r, t: float = 0.0,
                flow: Optional["FlowSpec"] = None) -> CurvatureSample:
    """Ricci, Hessian of phi, ``Ric(L)`` and ``Ric_{m,n}(L)`` eigenvalues.

    Parameters
    ----------
    m : float
        Dimension parameter; ``math.inf`` gives ``Ric(L)``.
    flow : FlowSpec, optional
        Supplies ``c(t)``; when given the ``h`` fields are filled too.
        The potential of the flow is ignored here; pass it as ``potential``.
    """
    _check_dimension(model, potential, m)
    r = model.check_radius(r)
    c = _scale(flow, t)
    ric_rr, ric_tan = ricci_radial(model, r)
    d1 = np.asarray(potential.dr(r, t), dtype=float) * np.ones(r.shape)
    d2 = np.asarray(potential.drr(r, t), dtype=float) * np.ones(r.shape)
    if model.n == 1:
        hess_tan = np.zeros(r.shape)
    else:
        lg = model.log_derivative(r)
        hess_tan = np.where(np.isnan(lg), d2, np.nan_to_num(lg) * d1)
    hess_rr = d2
    ric_rr, ric_tan = ric_rr / c, ric_tan / c
    hess_rr, hess_tan = hess_rr / c, hess_tan / c
    ricL_rr, ricL_tan = ric_rr + hess_rr, ric_tan + hess_tan
    if math.isinf(m) or m == model.n:
        ricmn_rr = ricL_rr.copy()
    else:
        ricmn_rr = ricL_rr - d1**2 / ((m - model.n) * c)
    ricmn_tan = ricL_tan.copy()
    if model.n == 1:
        ric_tan = hess_tan = ricL_tan = ricmn_tan = np.full(r.shape, np.nan)
    hf = 0.0 if flow is None else flow.h_factor(t)
    h = np.full(r.shape, hf)
    return CurvatureSample(r, t, ric_rr, ric_tan, hess_rr, hess_tan, ricL_rr, ricL_tan,
                           ricmn_rr, ricmn_tan, h, h.copy(), np.full(r.shape, model.n * hf),
                           np.zeros(r.shape))


S_SIGN_VARIANTS = ("lemma", "sss")


def s_tensor(model: RadialModel, potential: PotentialSpec, flow: "FlowSpec", m: float, r,
             t: float, variant: str = "lemma"):
    """Radial component of the first-order commutator term ``S``.

    With ``variant='lemma'``
    ``S = 2h(grad phi, .) - <2 div h - grad tr h + grad d_t phi, .>
    + (2 tr h/(m-n)) <grad phi, .>``.
    The ``'sss'`` variant flips the signs of the ``grad tr h`` and
    ``grad d_t phi`` terms.  For homotheties ``div h`` and ``grad tr h``
    vanish.  Returns the component along the unit radial vector of g(t).
    """
    if variant not in S_SIGN_VARIANTS:
        raise InputError(f"unknown S sign variant {variant!r}")
    if m <= model.n:
        raise InputError(f"the S tensor needs m > n (got m={m}, n={model.n})")
    if not getattr(flow, "closed_form", True):
        raise UnsupportedFlowError(f"flow {flow.label!r} does not supply closed-form h data")
    r = model.check_radius(r)
    c = _scale(flow, t)
    hf = flow.h_factor(t)
    tr_h = model.n * hf
    grad_phi = np.asarray(potential.dr(r, t), dtype=float) * np.ones(r.shape) / math.sqrt(c)
    grad_phit = np.asarray(potential.drt(r, t), dtype=float) * np.ones(r.shape) / math.sqrt(c)
    # div h = 0 and grad tr h = 0 for homotheties.
    sign = -1.0 if variant == "lemma" else 1.0
    dim_term = 0.0 if math.isinf(m) else 2 * tr_h / (m - model.n)
    return 2 * hf * grad_phi + sign * grad_phit + dim_term * grad_phi


def curvature_sample(model: RadialModel, potential: PotentialSpec, m: float, r, t: float,
                     flow: Optional["FlowSpec"] = None, variant: str = "lemma") -> CurvatureSample:
    """:func:`bakry_emery` plus the ``S`` field when ``m > n`` and a flow is given."""
    cs = bakry_emery(model, potential, m, r, t, flow)
    if flow is not None and m > model.n:
        cs.s_r = s_tensor(model, potential, flow, m, cs.r, t, variant)
    return cs


class Condition(str, enum.Enum):
    """Curvature/flow premises, each read as ``tensor >= bound * g``."""

    CD = "CD(K,m)"                       # Ric_{m,n}(L) >= K
    CD_NEG = "CD(-K,m)"                  # Ric_{m,n}(L) >= -K
    SUPER_PERELMAN = "K-super-Perelman"  # h + Ric(L) >= -K
    SUPER_PERELMAN_M = "K-super-Perelman-m"  # h + Ric_{m,n}(L) >= -K
    SUPER_PERELMAN_LOWER = "super-Perelman>=K"  # h + Ric(L) >= K
    BACKWARD_ALPHA = "backward-alpha"    # (1-alpha) h + Ric_{m,n}(L) >= -K
    LYH_FLOW = "lyh-flow"                # e^{-4Kt}(h + Ric_mn + K) - e^{-2Kt} h >= alpha_K
    SECOND_ORDER_FLOW = "second-order-flow"  # 2h + Ric_{m,n}(L) >= -K


def _condition_eigs(cond: Condition, cs: CurvatureSample, K: float, t: float, alpha: float,
                    alpha_k: float):
    pairs = []
    for lab, ricL, ricmn, h in (("rr", cs.ricL_rr, cs.ricmn_rr, cs.h_rr),
                                ("tan", cs.ricL_tan, cs.ricmn_tan, cs.h_tan)):
        if cond is Condition.CD:
            lhs, rhs = ricmn, K
        elif cond is Condition.CD_NEG:
            lhs, rhs = ricmn, -K
        elif cond is Condition.SUPER_PERELMAN:
            lhs, rhs = h + ricL, -K
        elif cond is Condition.SUPER_PERELMAN_M:
            lhs, rhs = h + ricmn, -K
        elif cond is Condition.SUPER_PERELMAN_LOWER:
            lhs, rhs = h + ricL, K
        elif cond is Condition.BACKWARD_ALPHA:
            lhs, rhs = (1 - alpha) * h + ricmn, -K
        elif cond is Condition.LYH_FLOW:
            lhs = math.exp(-4 * K * t) * (h + ricmn + K) - math.exp(-2 * K * t) * h
            rhs = alpha_k
        elif cond is Condition.SECOND_ORDER_FLOW:
            lhs, rhs = 2 * h + ricmn, -K
        else:  # pragma: no cover
            raise InputError(f"unknown condition {cond}")
        pairs.append(lhs - rhs)
    return pairs


def flow_condition_check(model: RadialModel, potential: PotentialSpec, flow: Optional["FlowSpec"],
                         m: float, K: float, t: float, condition, r_grid=None,
                         eps: float = 1e-10, alpha: float = 0.0, alpha_k: float = 0.0):
    """Check a curvature premise on sample radii at time ``t``.

    Returns
    -------
    holds : bool
        ``worst_margin >= -eps``.
    worst_margin : float
        Minimum over samples and both eigen-directions of LHS - RHS.
    worst_r : float
        Radius where the minimum is attained.
    """
    cond = Condition(condition)
    if r_grid is None:
        r_grid = np.linspace(model.r_min, model.r_max, 201)
    if flow is not None:
        potential = flow.potential
    cs = bakry_emery(model, potential, m, r_grid, t, flow)
    margins = _condition_eigs(cond, cs, K, t, alpha, alpha_k)
    worst, worst_r = math.inf, float(cs.r[0])
    for arr in margins:
        arr = np.asarray(arr, dtype=float)
        if np.all(np.isnan(arr)):
            continue
        i = int(np.nanargmin(arr))
        if arr[i] < worst:
            worst, worst_r = float(arr[i]), float(cs.r[i])
    return worst >= -eps, worst, worst_r
