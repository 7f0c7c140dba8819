"""Time stepping of ``d_t u = L_t u``, initial data and a spectral oracle."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import splu
from scipy.special import eval_gegenbauer, roots_legendre

from .discretize import Discretization, MeasureWeights, quadrature
from .errors import InputError, SolverError

log = logging.getLogger(__name__)

SCHEMES = {"crank_nicolson": 0.5, "backward_euler": 1.0}

# Floor for log-densities of closed-form kernels (keeps far tails positive).
_LOG_FLOOR = -700.0


@dataclass
class HeatState:
    """Positive grid function at time ``t``.

    Attributes
    ----------
    t : float
        Flow time.
    t_shift : float
        Offset such that ``t + t_shift`` is the kernel time of a state that
        approximates a fundamental solution (0 otherwise).
    """

    u: np.ndarray
    t: float
    weights: MeasureWeights
    t_shift: float = 0.0

    @property
    def mass(self) -> float:
        return quadrature(self.u, self.weights)

    @property
    def kernel_time(self) -> float:
        return self.t + self.t_shift


@dataclass
class Trajectory:
    """Snapshots at output times plus per-step diagnostics."""

    states: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def sup_u(self) -> float:
        """Space-time maximum of ``u`` over every step, initial data included."""
        return float(self.diagnostics.get("sup_u", max(float(np.max(s.u)) for s in self.states)))


class _BandedSPD:
    """Cholesky factor of the tridiagonal SPD matrix ``W - a K`` (non-periodic grids)."""

    def __init__(self, op, a: float):
        k = op.kappa
        diag = op.w.copy()
        diag[:-1] += a * k
        diag[1:] += a * k
        ab = np.zeros((2, len(diag)))
        ab[0, 1:] = -a * k
        ab[1] = diag
        self._cb = cholesky_banded(ab)

    def solve(self, rhs):
        return cho_solve_banded((self._cb, False), rhs)


class Stepper:
    """Theta-scheme stepper with a cached factorization for static flows."""

    def __init__(self, disc: Discretization, scheme: str = "crank_nicolson"):
        if scheme not in SCHEMES:
            raise InputError(f"unknown scheme {scheme!r}; known: {sorted(SCHEMES)}")
        self.disc = disc
        self.scheme = scheme
        self.fallbacks = 0
        self._lu: dict = {}

    def _factor(self, theta: float, t_mid: float, dt: float):
        key = (theta, dt, None if self.disc.flow.is_static else t_mid)
        hit = self._lu.get(key)
        if hit is not None:
            return hit
        op = self.disc.operator(t_mid)
        try:
            if op.periodic:
                K = op.stiffness()
                W = sp.diags(op.w, format="csc")
                lu = splu((W - theta * dt * K).tocsc())
            else:
                lu = _BandedSPD(op, theta * dt)
        except (RuntimeError, np.linalg.LinAlgError) as exc:  # pragma: no cover - SPD systems
            raise SolverError(f"singular implicit solve at t={t_mid}, dt={dt}: {exc}") from exc
        if not self.disc.flow.is_static:
            self._lu.clear()
        self._lu[key] = (lu, op)
        return lu, op

    def _solve(self, u: np.ndarray, t: float, dt: float, theta: float) -> np.ndarray:
        t_mid = t + 0.5 * dt
        lu, op = self._factor(theta, t_mid, dt)
        rhs = op.w * u + (1 - theta) * dt * op.stiffness_apply(u)
        out = lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise SolverError(f"non-finite solution at t={t_mid}")
        return out

    def step_values(self, u: np.ndarray, t: float, dt: float, positive: bool = True) -> np.ndarray:
        """One step; ``positive=False`` skips the positivity safeguard (signed fields)."""
        if not dt > 0:
            raise InputError(f"time step must be positive, got {dt}")
        theta = SCHEMES[self.scheme]
        out = self._solve(u, t, dt, theta)
        if not positive:
            return out
        if theta < 1 and not np.all(out > 0):
            self.fallbacks += 1
            log.info("Crank-Nicolson step at t=%.6g lost positivity; retrying with backward Euler", t)
            out = self._solve(u, t, dt, 1.0)
        if not np.all(out > 0):
            raise SolverError(f"non-positive solution after backward Euler at t={t}")
        return out

    def step(self, state: HeatState, dt: float) -> HeatState:
        u = self.step_values(state.u, state.t, dt)
        t = state.t + dt
        return HeatState(u, t, self.disc.weights(t), state.t_shift)


def step(state: HeatState, disc: Discretization, dt: float,
         scheme: str = "crank_nicolson") -> HeatState:
    """Advance one step of the theta scheme with the midpoint-time operator."""
    return Stepper(disc, scheme).step(state, dt)


def _snap_steps(t0: float, times: Sequence[float], dt: float) -> list:
    out = []
    for tk in times:
        k = (tk - t0) / dt
        kr = round(k)
        if abs(k - kr) > 1e-6 or kr < 0:
            raise InputError(f"output time {tk} is not on the step grid (t0={t0}, dt={dt})")
        out.append(int(kr))
    if any(b <= a for a, b in zip(out, out[1:])):
        raise InputError("output times must be strictly increasing")
    return out


def evolve_fields(disc: Discretization, fields: Sequence[np.ndarray], t0: float, dt: float,
                  output_times: Sequence[float], scheme: str = "crank_nicolson",
                  t_shift: float = 0.0, signed: Sequence[bool] = ()):
    """Advance several initial data in lockstep under the same operators.

    The first field must be strictly positive; fields flagged in ``signed``
    may change sign and are not subject to the positivity safeguard.
    Returns one :class:`Trajectory` per field.
    """
    steps = _snap_steps(t0, output_times, dt)
    stepper = Stepper(disc, scheme)
    us = [np.asarray(f, dtype=float).copy() for f in fields]
    signed = list(signed) + [False] * (len(us) - len(signed))
    for u, sg in zip(us, signed):
        if not sg and not np.all(u > 0):
            raise InputError("initial datum must be strictly positive")
    out_steps = set(steps)
    w0 = disc.weights(t0)
    mass0 = [quadrature(u, w0) for u in us]
    sup_u = [float(np.max(u)) for u in us]
    outs = [[] for _ in us]
    diag = {"t": [], "min_u": [], "mass_drift": [], "boundary_flux": [], "boundary_mass": []}
    if steps and steps[0] == 0:
        for j, u in enumerate(us):
            outs[j].append(HeatState(u.copy(), t0, w0, t_shift))
    nmax = steps[-1] if steps else 0
    for k in range(1, nmax + 1):
        t_prev = t0 + (k - 1) * dt
        t = t0 + k * dt
        for j in range(len(us)):
            us[j] = stepper.step_values(us[j], t_prev, dt, not signed[j])
            sup_u[j] = max(sup_u[j], float(np.max(us[j])))
        u = us[0]
        w = disc.weights(t)
        diag["t"].append(t)
        diag["min_u"].append(float(np.min(u)))
        diag["mass_drift"].append(quadrature(u, w) / mass0[0] - 1.0)
        if not disc.grid.periodic:
            op = disc.operator(t)
            # Flux through the last interior interface: how much mass is still
            # moving toward the outer end (the end itself carries no flux).
            diag["boundary_flux"].append(abs(float(op.kappa[-1] * (u[-1] - u[-2]))))
            diag["boundary_mass"].append(float(u[-1] * w.w[-1]) / mass0[0])
        if k in out_steps:
            for j in range(len(us)):
                outs[j].append(HeatState(us[j].copy(), t, w, t_shift))
    trajs = []
    for j in range(len(us)):
        d = {key: np.asarray(v) for key, v in diag.items()}
        d["sup_u"] = sup_u[j]
        d["fallbacks"] = stepper.fallbacks
        d["positivity_bound"] = disc.operator(t0).positivity_bound()
        trajs.append(Trajectory(outs[j], d))
    return trajs


def run(disc: Discretization, initial: HeatState, dt: float, output_times: Sequence[float],
        scheme: str = "crank_nicolson") -> Trajectory:
    """Evolve ``initial`` and record snapshots at ``output_times``."""
    return evolve_fields(disc, [initial.u], initial.t, dt, output_times, scheme,
                         initial.t_shift)[0]


def march(disc: Discretization, initial: HeatState, times: Sequence[float],
          scheme: str = "crank_nicolson") -> Trajectory:
    """Step through an arbitrary increasing list of times, one step per interval.

    Useful when output times are not uniformly spaced, such as static runs
    sampled at reparametrized times.
    """
    times = [float(x) for x in times]
    if any(b <= a for a, b in zip([initial.t] + times, times)):
        raise InputError("march needs times increasing from the initial time")
    stepper = Stepper(disc, scheme)
    states = [initial]
    u, t = initial.u, initial.t
    for tk in times:
        u = stepper.step_values(u, t, tk - t)
        t = tk
        states.append(HeatState(u, t, disc.weights(t), initial.t_shift))
    return Trajectory(states, {"fallbacks": stepper.fallbacks})


# initial data ----------------------------------------------------------------

def eigenfunction(model, l: int, r) -> np.ndarray:
    """Radial Laplace eigenfunction of degree ``l`` normalized to 1 at ``r = 0``.

    Circle: ``cos(l r)``; interval: ``cos(l pi r / L)``; sphere ``S^n``:
    Gegenbauer ``C_l^{(n-1)/2}(cos r)`` (Legendre for n = 2).
    """
    r = np.asarray(r, dtype=float)
    if model.kind == "circle":
        return np.cos(l * r)
    if model.kind == "interval":
        return np.cos(l * math.pi * (r - model.r_min) / model.length)
    if model.kind == "sphere":
        alpha = 0.5 * (model.n - 1)
        return eval_gegenbauer(l, alpha, np.cos(r)) / eval_gegenbauer(l, alpha, 1.0)
    raise InputError(f"no closed-form eigenbasis for model kind {model.kind!r}")


def eigenvalue(model, l: int) -> float:
    """Laplace eigenvalue belonging to :func:`eigenfunction`."""
    if model.kind == "circle":
        return float(l * l)
    if model.kind == "interval":
        return (l * math.pi / model.length) ** 2
    if model.kind == "sphere":
        return float(l * (l + model.n - 1))
    raise InputError(f"no closed-form eigenbasis for model kind {model.kind!r}")


def closed_form_log_kernel(model, potential, t: float, r) -> Optional[np.ndarray]:
    """Log of an exact heat kernel centred at ``r = 0``, or None if unavailable."""
    if not potential.spatially_constant:
        return None
    r = np.asarray(r, dtype=float)
    n = model.n
    if model.kind == "euclidean" and n >= 2:
        return -0.5 * n * math.log(4 * math.pi * t) - r**2 / (4 * t)
    if model.kind == "hyperbolic" and n == 3:
        ratio = np.where(r > 0, r / np.sinh(np.where(r > 0, r, 1.0)), 1.0)
        return -1.5 * math.log(4 * math.pi * t) + np.log(ratio) - t - r**2 / (4 * t)
    if model.kind == "circle":
        k = np.arange(-8, 9)
        d = r[:, None] + 2 * math.pi * k[None, :]
        terms = np.exp(-d**2 / (4 * t))
        return np.log(terms.sum(axis=1)) - 0.5 * math.log(4 * math.pi * t)
    return None


def _parametrix(model, r, s):
    """Leading small-time kernel shape ``exp(-r^2/4s) (r/psi)^{(n-1)/2}`` (log)."""
    r = np.asarray(r, dtype=float)
    out = -r**2 / (4 * s)
    if model.n > 1:
        poles = model.pole_mask(r) | (r <= 0)
        p = model.psi(np.where(poles, 1.0, r))
        ratio = np.where(poles, 1.0, np.where(poles, 1.0, r) / np.where(p > 0, p, 1.0))
        # The far pole of the sphere is a caustic; clip the amplitude there.
        ratio = np.clip(ratio, 0.0, 1e6)
        out = out + 0.5 * (model.n - 1) * np.log(np.maximum(ratio, 1e-300))
    return out


def _normalized_state(disc: Discretization, log_u: np.ndarray, t: float, t_shift: float = 0.0):
    log_u = np.maximum(log_u - np.max(log_u), _LOG_FLOOR)
    u = np.exp(log_u)
    w = disc.weights(t)
    u = u / quadrature(u, w)
    if not np.all(u > 0):
        raise InputError("initial datum is not strictly positive")
    return HeatState(u, t, w, t_shift)


def make_initial(kind: str, disc: Discretization, t: float = 0.0, *, center: float = 0.0,
                 width: float = 0.1, t0: float = 0.01, l: int = 1, amplitude: float = 0.5,
                 dt: Optional[float] = None, scheme: str = "crank_nicolson") -> HeatState:
    """Build an initial datum.

    Parameters
    ----------
    kind : {'uniform', 'eigen_perturbation', 'normalized_gaussian_bump', 'kernel_burnin'}
    width : float
        Standard deviation of the Gaussian bump; must be at least ``4 dr``.
    t0 : float
        Kernel time represented by a ``kernel_burnin`` datum.
    """
    grid, model = disc.grid, disc.model
    r = grid.r
    if kind == "uniform":
        w = disc.weights(t)
        return HeatState(np.full(grid.N, 1.0 / w.total), t, w)
    if kind == "eigen_perturbation":
        e = eigenfunction(model, l, r)
        if abs(amplitude) * np.max(np.abs(e)) >= 1:
            raise InputError(f"amplitude {amplitude} makes the datum non-positive")
        return HeatState(1.0 + amplitude * e, t, disc.weights(t))
    if kind == "normalized_gaussian_bump":
        if width < 4 * grid.dr:
            raise InputError(f"bump width {width} is under-resolved (need >= {4 * grid.dr:g})")
        d = r - center
        if grid.periodic:
            d = (d + math.pi) % (2 * math.pi) - math.pi
        return _normalized_state(disc, -d**2 / (2 * width**2), t)
    if kind == "kernel_burnin":
        if not t0 > 0:
            raise InputError("kernel burn-in time must be positive")
        exact = closed_form_log_kernel(model, disc.potential, t0, r)
        if exact is not None:
            if math.sqrt(2 * t0) < 4 * grid.dr:
                raise InputError(f"kernel width at t0={t0} is under-resolved on this grid")
            return _normalized_state(disc, exact, t, t_shift=t0 - t)
        # Parametrix at time s, then evolve on the grid for t0 - s.
        s = max(0.5 * t0, 8 * grid.dr**2)
        if s >= t0:
            raise InputError(f"kernel burn-in time t0={t0} is under-resolved on this grid")
        start = _normalized_state(disc, _parametrix(model, r, s), t - (t0 - s))
        n_sub = max(20, int(math.ceil((t0 - s) / (dt or (t0 - s) / 20))))
        h = (t0 - s) / n_sub
        traj = evolve_fields(disc, [start.u], start.t, h, [start.t + n_sub * h], scheme)[0]
        end = traj.states[-1]
        w = disc.weights(t)
        return HeatState(end.u / quadrature(end.u, w), t, w, t_shift=t0 - t)
    raise InputError(f"unknown initial datum kind {kind!r}")


# spectral oracle ---------------------------------------------------------------

@dataclass
class SpectralResult:
    values: np.ndarray
    coefficients: np.ndarray
    tail_bound: float


@lru_cache(maxsize=8)
def _legendre(points: int):
    return roots_legendre(points)


def spectral_reference(disc: Discretization, initial, t, modes: int = 64,
                       quad_points: int = 1024) -> SpectralResult:
    """Eigen-expansion solution on circle, reflecting interval or sphere.

    Parameters
    ----------
    t : float or sequence of float
        Evaluation time(s); a sequence gives ``values`` of shape ``(len(t), N)``.
    initial : callable or ndarray
        Initial datum as a function of ``r`` (projected by high-order
        quadrature) or as node values (weighted node projection).
    modes : int
        Number of radial modes kept (Fourier pairs on the circle).

    Notes
    -----
    ``tail_bound`` is the weighted L2 norm of the projection residual of the
    initial datum, an upper bound for the truncation error in L2 at any t.
    """
    model = disc.model
    if model.kind not in ("circle", "interval", "sphere"):
        raise InputError(f"spectral reference does not support {model.kind!r}")
    if not (disc.potential.spatially_constant and disc.flow.is_static):
        raise InputError("spectral reference needs phi constant and a static flow")
    r_nodes = disc.grid.r
    if callable(initial):
        if model.kind == "circle":
            x = np.arange(quad_points) * (2 * math.pi / quad_points)
            wq = np.full(quad_points, 2 * math.pi / quad_points)
        else:
            xg, wg = _legendre(quad_points)
            x = model.r_min + 0.5 * model.length * (xg + 1)
            wq = 0.5 * model.length * wg
        if model.n > 1:
            wq = wq * model.psi(x) ** (model.n - 1)
        f = np.asarray(initial(x), dtype=float)
    else:
        x = r_nodes
        w = disc.weights(0.0).w
        wq = w / model.area
        f = np.asarray(initial, dtype=float)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    values = np.zeros((len(times), len(r_nodes)))
    resid = f.copy()
    coefs = []
    for l in range(modes):
        bases = [eigenfunction(model, l, x)]
        node_bases = [eigenfunction(model, l, r_nodes)]
        if model.kind == "circle" and l > 0:
            bases.append(np.sin(l * x))
            node_bases.append(np.sin(l * r_nodes))
        lam = eigenvalue(model, l)
        for b, bn in zip(bases, node_bases):
            norm = float(np.dot(wq, b * b))
            ck = float(np.dot(wq, f * b)) / norm
            coefs.append(ck)
            resid -= ck * b
            values += ck * np.exp(-lam * times)[:, None] * bn[None, :]
    tail = math.sqrt(max(float(np.dot(wq, resid * resid)), 0.0))
    if np.ndim(t) == 0:
        values = values[0]
    return SpectralResult(values, np.array(coefs), tail)
