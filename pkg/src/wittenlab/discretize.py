"""Grids, measure weights and the divergence-form Witten operator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, InputError
from .flows import FlowSpec, static_flow
from .geometry import PotentialSpec, RadialModel

# Gauss-Legendre points per cell for the exact cell volumes.
_GL_POINTS = 8


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the model domain.

    Non-periodic grids carry both endpoints (``dr = L/(N-1)``); periodic
    grids omit the duplicate endpoint (``dr = L/N``).
    """

    model: RadialModel
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 16:
            raise InputError(f"grid needs N >= 16 nodes, got {self.N}")

    @property
    def periodic(self) -> bool:
        return self.model.periodic

    @cached_property
    def dr(self) -> float:
        L = self.model.length
        return L / self.N if self.periodic else L / (self.N - 1)

    @cached_property
    def r(self) -> np.ndarray:
        i = np.arange(self.N)
        if self.periodic:
            return self.model.r_min + i * self.dr
        r = self.model.r_min + i * self.dr
        r[-1] = self.model.r_max
        return r

    @cached_property
    def mid(self) -> np.ndarray:
        """Interface radii; index ``k`` sits between nodes ``k`` and ``k+1``."""
        if self.periodic:
            return self.r + 0.5 * self.dr
        return 0.5 * (self.r[1:] + self.r[:-1])

    @cached_property
    def cells(self) -> tuple:
        """Lower and upper bounds of each node's control cell."""
        lo = self.r - 0.5 * self.dr
        hi = self.r + 0.5 * self.dr
        if not self.periodic:
            lo[0] = self.model.r_min
            hi[-1] = self.model.r_max
        return lo, hi

    def refined(self) -> "Grid":
        """Grid with half the spacing whose nodes include the current ones."""
        return Grid(self.model, 2 * self.N if self.periodic else 2 * (self.N - 1) + 1)

    def coarse_index(self, fine: "Grid") -> np.ndarray:
        """Indices of ``fine`` nodes that coincide with this grid's nodes."""
        ratio = round(self.dr / fine.dr)
        idx = np.arange(self.N) * ratio
        if np.max(np.abs(fine.r[idx] - self.r)) > 1e-9 * max(1.0, self.model.length):
            raise InputError("grids are not nested")
        return idx


def measure_density(model: RadialModel, potential: PotentialSpec, r, t: float):
    """Reference density ``area * psi^{n-1} e^{-phi}`` of mu with respect to dr."""
    r = np.asarray(r, dtype=float)
    base = model.psi(r) ** (model.n - 1) if model.n > 1 else np.ones(r.shape)
    return model.area * base * np.exp(-np.asarray(potential.phi(r, t), dtype=float))


@lru_cache(maxsize=4)
def _gauss_legendre(points: int):
    return np.polynomial.legendre.leggauss(points)


def cell_measure(grid: Grid, potential: PotentialSpec, t: float) -> np.ndarray:
    """Exact (to quadrature precision) mu_0-measure of each control cell."""
    if potential.offset is not None:
        return cell_measure(grid, potential.base, t) * math.exp(-float(potential.offset(t)))
    x, wq = _gauss_legendre(_GL_POINTS)
    lo, hi = grid.cells
    half = 0.5 * (hi - lo)
    pts = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
    dens = measure_density(grid.model, potential, pts.ravel(), t).reshape(pts.shape)
    return half * (dens @ wq)


@dataclass(frozen=True)
class MeasureWeights:
    """Node weights ``w_i`` of the measure mu at time ``t``."""

    w: np.ndarray
    t: float

    @property
    def total(self) -> float:
        return float(np.sum(self.w))


@dataclass(frozen=True)
class WittenOperator:
    """Discrete ``L = Delta - grad phi . grad`` in divergence form.

    ``(Lu)_i = (kappa_{i+1/2}(u_{i+1}-u_i) - kappa_{i-1/2}(u_i-u_{i-1})) / w_i``.
    """

    kappa: np.ndarray
    w: np.ndarray
    t: float
    periodic: bool

    def flux(self, u: np.ndarray) -> np.ndarray:
        """Interface fluxes ``kappa * (u_{k+1} - u_k)``."""
        return self.kappa * self.diff(u)

    def diff(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.periodic:
            return np.roll(u, -1) - u
        return np.diff(u)

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        """``K u`` with ``K`` the symmetric stiffness, so ``L = W^{-1} K``."""
        f = self.flux(u)
        if self.periodic:
            return f - np.roll(f, 1)
        out = np.zeros(len(self.w))
        out[:-1] += f
        out[1:] -= f
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.stiffness_apply(u) / self.w

    __call__ = apply

    def stiffness(self) -> sp.csc_matrix:
        N = len(self.w)
        k = self.kappa
        if self.periodic:
            rows = np.arange(N)
            nxt = (rows + 1) % N
            diag = -(k + np.roll(k, 1))
            mat = sp.coo_matrix((np.concatenate([diag, k, k]),
                                 (np.concatenate([rows, rows, nxt]),
                                  np.concatenate([rows, nxt, rows]))), shape=(N, N))
            return mat.tocsc()
        diag = np.zeros(N)
        diag[:-1] -= k
        diag[1:] -= k
        return sp.diags([k, diag, k], [-1, 0, 1], format="csc")

    def dirichlet_form(self, u: np.ndarray, v: np.ndarray) -> float:
        """``sum kappa (Delta u)(Delta v) = -<Lu, v>_mu``."""
        return float(np.sum(self.kappa * self.diff(u) * self.diff(v)))

    def norm_estimate(self) -> float:
        """Gershgorin bound on the operator norm of ``L``."""
        k = self.kappa
        if self.periodic:
            tot = k + np.roll(k, 1)
        else:
            tot = np.zeros(len(self.w))
            tot[:-1] += k
            tot[1:] += k
        return float(np.max(2 * tot / self.w))

    def positivity_bound(self) -> float:
        """``min_i w_i / (kappa_- + kappa_+)``: sufficient Crank-Nicolson step bound."""
        k = self.kappa
        if self.periodic:
            tot = k + np.roll(k, 1)
        else:
            tot = np.zeros(len(self.w))
            tot[:-1] += k
            tot[1:] += k
        return float(np.min(self.w / tot))


class Discretization:
    """Model, flow and grid bundled with cached weights and operators."""

    def __init__(self, model: RadialModel, grid: Grid, flow: Optional[FlowSpec] = None,
                 potential: Optional[PotentialSpec] = None):
        if grid.model is not model and grid.model != model:
            raise InputError("grid does not match the model domain")
        if flow is None:
            flow = static_flow(model, potential)
        elif potential is not None:
            raise InputError("pass the potential through the flow")
        self.model = model
        self.grid = grid
        self.flow = flow
        self.potential = flow.potential
        self._static = flow.is_static
        self._cache: dict = {}
        self._mu0 = None

    def refined(self, space: bool = True) -> "Discretization":
        return Discretization(self.model, self.grid.refined() if space else self.grid, self.flow)

    def _key(self, t):
        return 0.0 if self._static else float(t)

    def c(self, t: float) -> float:
        c = float(self.flow.c(t))
        if not c > 0:
            raise GeometryError(f"homothety factor c({t}) = {c} is not positive")
        return c

    def weights(self, t: float) -> MeasureWeights:
        key = ("w", self._key(t))
        if key not in self._cache:
            pot = self.potential
            if pot.offset is None and not pot.time_dependent:
                if self._mu0 is None:
                    self._mu0 = cell_measure(self.grid, pot, 0.0)
                mu = self._mu0
            else:
                mu = cell_measure(self.grid, pot, t)
            w = mu * self.c(t) ** (self.model.n / 2)
            self._remember(key, MeasureWeights(w, float(t)))
        return self._cache[key]

    def operator(self, t: float) -> WittenOperator:
        key = ("L", self._key(t))
        if key not in self._cache:
            self._remember(key, assemble(self.model, self.potential, self.flow, self.grid, t,
                                         weights=self.weights(t)))
        return self._cache[key]

    def _remember(self, key, value):
        if not self._static and len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = value


def assemble(model: RadialModel, potential: Optional[PotentialSpec], flow: Optional[FlowSpec],
             grid: Grid, t: float, weights: Optional[MeasureWeights] = None) -> WittenOperator:
    """Assemble the Witten operator of ``g(t) = c(t) g_0`` on ``grid``.

    Interface conductances are ``area psi^{n-1} e^{-phi} c^{n/2-1} / dr`` at
    the interface radius; node weights are exact cell measures.  Pole and
    reflecting ends carry no exterior flux.
    """
    if grid.model is not model and grid.model != model:
        raise InputError("grid does not match the model domain")
    if flow is None:
        flow = static_flow(model, potential)
    if potential is None:
        potential = flow.potential
    c = float(flow.c(t))
    if not c > 0:
        raise GeometryError(f"homothety factor c({t}) = {c} is not positive")
    kappa = measure_density(model, potential, grid.mid, t) * c ** (model.n / 2 - 1) / grid.dr
    if not np.all(kappa > 0) or not np.all(np.isfinite(kappa)):
        raise GeometryError("non-positive interface conductance")
    if weights is None:
        weights = MeasureWeights(cell_measure(grid, potential, t) * c ** (model.n / 2), float(t))
    if not np.all(weights.w > 0):
        raise GeometryError("non-positive node weight")
    return WittenOperator(kappa, weights.w, float(t), grid.periodic)


def gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Coordinate derivative ``du/dr``; second-order one-sided at open ends."""
    u = np.asarray(u, dtype=float)
    h = grid.dr
    if grid.periodic:
        return (np.roll(u, -1) - np.roll(u, 1)) / (2 * h)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    d[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    d[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    return d


def second_derivative(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Coordinate ``d^2u/dr^2``; second-order one-sided at open ends."""
    u = np.asarray(u, dtype=float)
    h2 = grid.dr**2
    if grid.periodic:
        return (np.roll(u, -1) - 2 * u + np.roll(u, 1)) / h2
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h2
    d[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / h2
    d[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / h2
    return d


def grad_sq(u: np.ndarray, grid: Grid, flow: Optional[FlowSpec] = None, t: float = 0.0) -> np.ndarray:
    """``|grad u|^2`` in the metric ``g(t)``."""
    if len(u) < 3:
        raise InputError("grad_sq needs at least three nodes")
    c = 1.0 if flow is None else float(flow.c(t))
    return gradient(u, grid) ** 2 / c


def hessian_components(f: np.ndarray, grid: Grid, model: RadialModel,
                       flow: Optional[FlowSpec] = None, t: float = 0.0):
    """Radial and tangential Hessian eigenvalues of a radial function in ``g(t)``.

    The tangential eigenvalue ``(psi'/psi) f'`` is replaced by ``f''`` at
    poles (its regular limit).
    """
    c = 1.0 if flow is None else float(flow.c(t))
    f1 = gradient(f, grid)
    f2 = second_derivative(f, grid)
    if model.n == 1:
        return f2 / c, np.zeros_like(f2)
    lg = model.log_derivative(grid.r)
    tan = np.where(np.isnan(lg), f2, np.nan_to_num(lg) * f1)
    return f2 / c, tan / c


def hessian_radial_sq(f: np.ndarray, grid: Grid, model: RadialModel,
                      flow: Optional[FlowSpec] = None, t: float = 0.0,
                      a: float = 0.0) -> np.ndarray:
    """``|Hess f + a g|^2`` per node (``a = 0`` gives ``|Hess f|^2``)."""
    rr, tan = hessian_components(f, grid, model, flow, t)
    return (rr + a) ** 2 + (model.n - 1) * (tan + a) ** 2


def quadrature(values: np.ndarray, weights) -> float:
    """``sum_i values_i w_i``."""
    w = weights.w if isinstance(weights, MeasureWeights) else np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != w.shape:
        raise InputError(f"length mismatch: {values.shape} vs {w.shape}")
    return float(np.dot(values, w))
