"""Homothety flows ``g(t) = c(t) g_0`` with optional measure-preserving potentials."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import InputError, UnsupportedFlowError
from .geometry import PotentialSpec, RadialModel, zero_potential

COUPLINGS = ("independent", "measure-preserving")
FLOW_NAMES = ("static", "exponential", "shrinking_sphere", "custom")


@dataclass(frozen=True)
class FlowSpec:
    """A homothety flow.

    Attributes
    ----------
    c, dc : callable
        Scale factor ``c(t)`` with ``c(0) = 1`` and its derivative.
    potential : PotentialSpec
        The (possibly time-dependent) potential in force.
    coupling : str
        ``independent`` or ``measure-preserving``.
    """

    label: str
    model: RadialModel
    c: Callable[[float], float] = field(repr=False, compare=False)
    dc: Callable[[float], float] = field(repr=False, compare=False)
    potential: PotentialSpec = field(repr=False, compare=False)
    coupling: str = "independent"
    horizon: Optional[float] = None
    params: tuple = ()
    tau: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)

    closed_form = True

    @property
    def is_static(self) -> bool:
        return self.label == "static"

    def h_factor(self, t: float) -> float:
        """Eigenvalue of ``h = (1/2) d_t g`` relative to ``g(t)``: ``c'/(2c)``."""
        return float(self.dc(t)) / (2.0 * float(self.c(t)))

    def tr_h(self, t: float) -> float:
        return self.model.n * self.h_factor(t)

    def h_norm_sq(self, t: float) -> float:
        """``|h|^2_{g(t)} = n (c'/2c)^2``."""
        return self.model.n * self.h_factor(t) ** 2


def catalog(name: str, base: RadialModel, phi0: Optional[PotentialSpec] = None,
            coupling: str = "independent", T: Optional[float] = None, lam: float = 0.0,
            c: Optional[Callable] = None, dc: Optional[Callable] = None) -> FlowSpec:
    """Build a catalog flow.

    Parameters
    ----------
    name : {'static', 'exponential', 'shrinking_sphere', 'custom'}
    lam : float
        Rate for ``exponential``: ``c = exp(2 lam t)``.
    c, dc : callable
        Scale factor and derivative for ``custom``.
    T : float, optional
        Horizon; required to be before extinction for ``shrinking_sphere``.
    """
    if coupling not in COUPLINGS:
        raise InputError(f"unknown coupling {coupling!r}; known: {COUPLINGS}")
    phi0 = phi0 if phi0 is not None else zero_potential()
    n = base.n
    tau = None
    params: tuple = ()
    if name == "static":
        cf, dcf = (lambda t: 1.0), (lambda t: 0.0)
        tau = lambda t: float(t)
    elif name == "exponential":
        lam = float(lam)
        cf = lambda t: math.exp(2 * lam * t)
        dcf = lambda t: 2 * lam * math.exp(2 * lam * t)
        tau = (lambda t: float(t)) if lam == 0 else (lambda t: -math.expm1(-2 * lam * t) / (2 * lam))
        params = (("lambda", lam),)
    elif name == "shrinking_sphere":
        if base.kind != "sphere":
            raise InputError("shrinking_sphere needs a sphere base model")
        rate = 2.0 * (n - 1)
        extinction = 1.0 / rate
        if T is not None and not T < extinction:
            raise InputError(f"horizon T={T} reaches the extinction time; need T < {extinction:g}")
        cf = lambda t: 1.0 - rate * t
        dcf = lambda t: -rate
        tau = lambda t: -math.log1p(-rate * t) / rate
    elif name == "custom":
        if c is None:
            raise InputError("custom flows need a scale factor c(t)")
        if dc is None:
            raise UnsupportedFlowError("custom flow lacks a closed-form derivative c'(t)")
        if abs(float(c(0.0)) - 1.0) > 1e-12:
            raise InputError("custom scale factor must satisfy c(0) = 1")
        cf, dcf = c, dc
    else:
        raise InputError(f"unknown flow {name!r}; known: {FLOW_NAMES}")

    if T is not None:
        ts = np.linspace(0.0, T, 101)
        if any(not float(cf(s)) > 0 for s in ts):
            raise InputError(f"scale factor of flow {name!r} is not positive on [0, {T}]")

    potential = phi0
    if coupling == "measure-preserving" and name != "static":
        potential = phi0.shifted(lambda t: 0.5 * n * math.log(float(cf(t))),
                                 lambda t: 0.5 * n * float(dcf(t)) / float(cf(t)),
                                 "(n/2)log c")
    return FlowSpec(name, base, cf, dcf, potential, coupling, T, params, tau)


def static_flow(base: RadialModel, phi0: Optional[PotentialSpec] = None) -> FlowSpec:
    return catalog("static", base, phi0)


def time_reparametrization(flow: FlowSpec, t: float) -> float:
    """Static time ``tau(t) = int_0^t ds / c(s)`` matching the flowed solution.

    Valid when the spatial profile of phi does not depend on time, which
    holds for catalog potentials under either coupling.
    """
    probe = np.linspace(flow.model.r_min, flow.model.r_max, 33)
    for s in (0.0, 0.5 * (flow.horizon or 1.0)):
        if np.any(np.abs(np.asarray(flow.potential.drt(probe, s))) > 0):
            raise UnsupportedFlowError("time reparametrization needs a spatially static potential")
    if flow.tau is not None:
        return float(flow.tau(t))
    val, _ = integrate.quad(lambda s: 1.0 / float(flow.c(s)), 0.0, t, epsabs=1e-14, epsrel=1e-13)
    return float(val)
