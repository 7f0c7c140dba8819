"""Entropy functionals and both sides of their dissipation identities.

Every W-entropy here has the shape ``W = H + t dH/dt`` with
``H = -int u log u dmu - Phi(t)`` for a gauge function ``Phi``.  The
``fd`` companion of a series is the centered difference of ``W`` on the
output times; ``rhs`` evaluates the dissipation identity on each state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expi

from .discretize import Discretization, gradient, hessian_components, quadrature
from .errors import InputError
from .geometry import bakry_emery
from .heatflow import HeatState

W_MODES = ("finite_difference", "formula_LYHHm", "closed_form_W0")
D_K_VARIANTS = ("derivation", "statement")

# Relative mass tolerance for W-functionals, which assume probability states.
MASS_TOL = 1e-6


@dataclass
class FunctionalSeries:
    """Values of one functional on a time base, with optional companions."""

    name: str
    t: np.ndarray
    values: np.ndarray
    companions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.t) <= 0):
            raise InputError("series timestamps must be strictly increasing")
        for key, val in self.companions.items():
            if len(val) != len(self.t):
                raise InputError(f"companion {key!r} does not share the time base")


def centered_derivative(t: Sequence[float], values: Sequence[float]) -> np.ndarray:
    """Centered differences on a (possibly non-uniform) grid, one-sided at the ends."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(t) < 3:
        raise InputError("finite-difference derivatives need at least three samples")
    return np.gradient(values, t, edge_order=2)


# time-only constants ----------------------------------------------------------

def c_k(K: float, t: float) -> float:
    """``C_K(t) = 2K / (e^{2Kt} - 1)``; ``1/t`` at K = 0."""
    if K == 0:
        return 1.0 / t
    return 2 * K / math.expm1(2 * K * t)


def d_k(K: float, t: float, variant: str = "derivation") -> float:
    """``D_K(t)``: ``2|K|/|1 - e^{-2Kt}|`` or, for ``variant='statement'``, ``1/|1 - e^{-2Kt}|``.

    Both satisfy ``D' = -C_K D``; only the first tends to ``1/t`` as K -> 0.
    """
    if variant not in D_K_VARIANTS:
        raise InputError(f"unknown D_K variant {variant!r}")
    if K == 0:
        return 1.0 / t
    denom = abs(math.expm1(-2 * K * t))
    return 2 * abs(K) / denom if variant == "derivation" else 1.0 / denom


def alpha_k(K: float, t: float) -> float:
    """``alpha_K = K tanh(Kt)``."""
    return K * math.tanh(K * t)


def beta_k(K: float, t: float) -> float:
    """``beta_K = sinh(2Kt)/(2K)``; ``t`` at K = 0."""
    if K == 0:
        return t
    return math.sinh(2 * K * t) / (2 * K)


def phi_mk(m: float, K: float, t: float, gauge: float = 0.0) -> float:
    """Gauge ``Phi_{m,K}(t) = (m/2)(1 + log 4 pi t) + (m/2) int_1^t (e^{4Ks}-1)/s ds``."""
    val = 0.5 * m * (1 + math.log(4 * math.pi * t))
    if K != 0:
        val += 0.5 * m * (expi(4 * K * t) - expi(4 * K) - math.log(t))
    return val + gauge


def dphi_mk(m: float, K: float, t: float) -> float:
    """``Phi_{m,K}'(t) = (m/2t) e^{4Kt}``."""
    return 0.5 * m / t * math.exp(4 * K * t)


def d2_tphi_mk(m: float, K: float, t: float) -> float:
    """``(t Phi_{m,K})'' = (m/2t) e^{4Kt}(1 + 4Kt)``."""
    return 0.5 * m / t * math.exp(4 * K * t) * (1 + 4 * K * t)


def phi_tilde(m: float, K: float, t: float) -> float:
    """``(m/2)(1 + log 4 pi t) + (mKt/2)(1 + Kt/6)``."""
    return 0.5 * m * (1 + math.log(4 * math.pi * t)) + 0.5 * m * K * t * (1 + K * t / 6)


def dphi_tilde(m: float, K: float, t: float) -> float:
    return 0.5 * m / t + 0.5 * m * K + m * K * K * t / 6


def d2_tphi_tilde(m: float, K: float, t: float) -> float:
    """``(t Phi~)'' = (m/2t)(1 + Kt)^2``."""
    return 0.5 * m / t * (1 + K * t) ** 2


def defect(m: float, K: float, t: float) -> float:
    """``(m/2t)[e^{4Kt}(1 + 4Kt) - (1 + Kt)^2]``."""
    return d2_tphi_mk(m, K, t) - d2_tphi_tilde(m, K, t)


# state functionals -------------------------------------------------------------

def _positive(u):
    if not np.all(u > 0):
        raise InputError("functionals need a strictly positive state")
    return u


def boltzmann_entropy(state: HeatState) -> float:
    """``H(u) = -int u log u dmu``."""
    u = _positive(state.u)
    return -quadrature(u * np.log(u), state.weights)


def fisher(state: HeatState, disc: Discretization) -> float:
    """``int |grad log u|^2 u dmu`` in Dirichlet-form (interface) discretization."""
    u = _positive(state.u)
    return disc.operator(state.t).dirichlet_form(u, np.log(u))


def fisher_pointwise(state: HeatState, disc: Discretization) -> float:
    """Fisher information from nodal centered differences of ``log u``."""
    u = _positive(state.u)
    g = gradient(np.log(u), disc.grid) ** 2 / disc.c(state.t)
    return quadrature(g * u, state.weights)


def _time(state: HeatState, kernel_time: bool) -> float:
    t = state.kernel_time if kernel_time else state.t
    if not t > 0:
        raise InputError(f"W-functionals need t > 0 (got {t})")
    return t


def _check_mass(state: HeatState):
    mass = state.mass
    if abs(mass - 1.0) > MASS_TOL:
        raise InputError(f"W-functionals need a mass-1 state (mass = {mass:.12g})")


def _check_m(disc: Discretization, m: float):
    n = disc.model.n
    if m < n:
        raise InputError(f"dimension parameter m={m} must satisfy m >= n={n}")
    if m == n and not disc.potential.spatially_constant:
        raise InputError("m = n is only allowed when phi is spatially constant")


def w_m(state: HeatState, disc: Discretization, m: float, mode: str = "formula_LYHHm",
        kernel_time: bool = True):
    """``(H_m, dH_m/dt, W_m)`` for a single mass-1 state.

    ``formula_LYHHm`` uses the Fisher information; ``closed_form_W0``
    integrates ``t|grad log u|^2 + f - m`` with nodal gradients.  The
    ``finite_difference`` route needs a time series; see :func:`series_w_m`.
    """
    if mode not in W_MODES:
        raise InputError(f"unknown dissipation mode {mode!r}")
    if mode == "finite_difference":
        raise InputError("finite_difference needs a trajectory; use series_w_m")
    _check_m(disc, m)
    _check_mass(state)
    t = _time(state, kernel_time)
    H = boltzmann_entropy(state)
    Hm = H - 0.5 * m * (1 + math.log(4 * math.pi * t))
    if mode == "formula_LYHHm":
        dHm = fisher(state, disc) - 0.5 * m / t
        return Hm, dHm, Hm + t * dHm
    fi = fisher_pointwise(state, disc)
    W = t * fi + H - 0.5 * m * math.log(4 * math.pi * t) - m
    return Hm, fi - 0.5 * m / t, W


def w_mk(state: HeatState, disc: Discretization, m: float, K: float, gauge: float = 0.0,
         kernel_time: bool = True):
    """``(H_{m,K}, dH_{m,K}/dt, W_{m,K})`` in the ``Phi_{m,K}`` gauge."""
    _check_m(disc, m)
    _check_mass(state)
    t = _time(state, kernel_time)
    Hmk = boltzmann_entropy(state) - phi_mk(m, K, t, gauge)
    dH = fisher(state, disc) - dphi_mk(m, K, t)
    return Hmk, dH, Hmk + t * dH


def _dissipation_integrals(state: HeatState, disc: Discretization, m: float, K: float,
                           t: float):
    """Spatial part of the W_{m,K} dissipation at ``t`` (kernel/shifted time)."""
    model, grid, flow = disc.model, disc.grid, disc.flow
    n = model.n
    u = _positive(state.u)
    lu = np.log(u)
    c = disc.c(state.t)
    rr, tan = hessian_components(lu, grid, model, flow, state.t)
    a = 0.5 * K + 0.5 / t
    hess = (rr + a) ** 2 + (n - 1) * (tan + a) ** 2
    g1 = gradient(lu, grid) / math.sqrt(c)
    mm = math.inf if m == n else m
    cs = bakry_emery(model, disc.potential, mm, grid.r, state.t, flow)
    h = 0.0 if flow.is_static else flow.h_factor(state.t)
    ric = (cs.ricmn_rr + K + h) * g1**2
    first = -2 * t * quadrature((hess + ric) * u, state.weights)
    second = 0.0
    if m > n:
        if math.isinf(m):
            raise InputError("the W_{m,K} dissipation needs finite m")
        dphi = np.asarray(disc.potential.dr(grid.r, state.t), dtype=float) / math.sqrt(c)
        sq = (dphi * g1 - (m - n) * (1 + K * t) / (2 * t)) ** 2
        second = -2 * t / (m - n) * quadrature(sq * u, state.weights)
    return first, second


def w_m_dissipation_rhs(state: HeatState, disc: Discretization, m: float, K: float = 0.0,
                        kernel_time: bool = True) -> float:
    """Right-hand side of the W_{m,K} dissipation identity (``K = 0`` gives W_m).

    ``-2t int [|Hess log u + (K/2 + 1/2t) g|^2 + (Ric_{m,n}(L) + K + h)(grad log u, grad log u)] u
    - (2t/(m-n)) int (grad phi . grad log u - (m-n)(1+Kt)/2t)^2 u
    - (m/2t)[e^{4Kt}(1+4Kt) - (1+Kt)^2]``; the ``h`` term only appears on flows.
    """
    _check_m(disc, m)
    _check_mass(state)
    t = _time(state, kernel_time)
    first, second = _dissipation_integrals(state, disc, m, K, t)
    return first + second - defect(m, K, t)


def w_tilde(state: HeatState, disc: Discretization, m: float, K: float,
            kernel_time: bool = True):
    """``(H~_{m,K}, W~_{m,K}, dW~/dt rhs)``; the rhs carries no defect term."""
    _check_m(disc, m)
    _check_mass(state)
    t = _time(state, kernel_time)
    Ht = boltzmann_entropy(state) - phi_tilde(m, K, t)
    dH = fisher(state, disc) - dphi_tilde(m, K, t)
    first, second = _dissipation_integrals(state, disc, m, K, t)
    return Ht, Ht + t * dH, first + second


def w_k(P: HeatState, Q: HeatState, disc: Discretization, K: float,
        variant: str = "derivation", t_start: float = 0.0):
    """``(H_K, dH_K/dt, W_K, dW_K/dt rhs)`` from co-evolved ``P = P_t f``, ``Q = P_t(f log f)``.

    Time is measured from ``t_start``, the time at which ``f`` was given.
    """
    u = P.u
    if not np.all(u > 0):
        raise InputError("W_K needs a strictly positive P_t f")
    if abs(P.t - Q.t) > 1e-12:
        raise InputError("co-evolved fields must share the timestamp")
    t = P.t - t_start
    if not t > 0:
        raise InputError("W_K needs t > t_start")
    D, C = d_k(K, t, variant), c_k(K, t)
    lu = np.log(u)
    E = quadrature(Q.u - u * lu, P.weights)
    fi = fisher(P, disc)
    H = D * E
    dH = D * (fi - C * E)
    W = H + beta_k(K, t) * dH
    model, grid, flow = disc.model, disc.grid, disc.flow
    rr, tan = hessian_components(lu, grid, model, flow, P.t)
    hess = rr**2 + (model.n - 1) * tan**2
    g1 = gradient(lu, grid) / math.sqrt(disc.c(P.t))
    cs = bakry_emery(model, disc.potential, math.inf, grid.r, P.t, flow)
    h = 0.0 if flow.is_static else flow.h_factor(P.t)
    integral = quadrature((hess + (cs.ricL_rr - K + h) * g1**2) * u, P.weights)
    pref = 2 * t if K == 0 else math.sinh(2 * K * t) / K
    return H, dH, W, -pref * D * integral


# series builders ----------------------------------------------------------------

def _gauged_series(name, states, disc, m, phi, dphi, rhs_fn, kernel_time=True):
    for s in states:
        _check_mass(s)
    ts = np.array([_time(s, kernel_time) for s in states])
    H = np.array([boltzmann_entropy(s) - phi(t) for s, t in zip(states, ts)])
    dH = np.array([fisher(s, disc) - dphi(t) for s, t in zip(states, ts)])
    W = H + ts * dH
    fd = centered_derivative(ts, W)
    rhs = np.array([rhs_fn(s, t) for s, t in zip(states, ts)])
    return FunctionalSeries(name, ts, W, {"H": H, "dH": dH, "fd": fd, "rhs": rhs})


def series_w_m(states, disc: Discretization, m: float, kernel_time: bool = True):
    """W_m with finite-difference and identity derivatives."""
    _check_m(disc, m)
    return _gauged_series(
        "W_m", states, disc, m,
        lambda t: phi_mk(m, 0.0, t), lambda t: dphi_mk(m, 0.0, t),
        lambda s, t: sum(_dissipation_integrals(s, disc, m, 0.0, t)), kernel_time)


def series_w_mk(states, disc: Discretization, m: float, K: float, gauge: float = 0.0,
                kernel_time: bool = True):
    _check_m(disc, m)
    return _gauged_series(
        "W_mK", states, disc, m,
        lambda t: phi_mk(m, K, t, gauge), lambda t: dphi_mk(m, K, t),
        lambda s, t: sum(_dissipation_integrals(s, disc, m, K, t)) - defect(m, K, t),
        kernel_time)


def series_w_tilde(states, disc: Discretization, m: float, K: float, kernel_time: bool = True):
    _check_m(disc, m)
    return _gauged_series(
        "W_tilde", states, disc, m,
        lambda t: phi_tilde(m, K, t), lambda t: dphi_tilde(m, K, t),
        lambda s, t: sum(_dissipation_integrals(s, disc, m, K, t)), kernel_time)


def series_w_k(P_states, Q_states, disc: Discretization, K: float,
               variant: str = "derivation", t_start: float = 0.0):
    rows = [w_k(P, Q, disc, K, variant, t_start) for P, Q in zip(P_states, Q_states)]
    ts = np.array([P.t - t_start for P in P_states])
    H, dH, W, rhs = (np.array(col) for col in zip(*rows))
    return FunctionalSeries("W_K", ts, W, {"H": H, "dH": dH, "fd": centered_derivative(ts, W),
                                           "rhs": rhs})
