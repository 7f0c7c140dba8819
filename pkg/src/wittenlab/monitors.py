"""Pointwise and integrated inequality monitors with discretization tolerances.

Every check returns a :class:`ViolationReport` holding per-(t, sample)
margins ``bound - quantity``; a negative margin is a candidate violation.
Checks verify their curvature premise first unless flagged as negative
controls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expi

from .discretize import Discretization, grad_sq
from .errors import InputError
from .geometry import Condition, flow_condition_check, s_tensor
from .heatflow import HeatState, Trajectory, evolve_fields

VERDICTS = ("holds", "holds-within-tolerance", "violated")

# Pole exclusion band in grid spacings.
POLE_BAND = 3


class PremiseError(InputError):
    """A monitor's premise fails and the monitor is not a negative control."""


@dataclass
class ToleranceModel:
    """``tau(dr, dt) = safety * (C1 dr^2 + C2 dt^2)``.

    Calibrated models also keep constants per output row, since the
    discretization error of a margin scales with the margin's own size
    (large at early times, small later). ``C1`` and ``C2`` are then the
    row maxima and ``tau`` is the loosest row value.
    """

    C1: float = 0.0
    C2: float = 0.0
    safety: float = 2.0
    row_t: Optional[np.ndarray] = None
    row_keys: Optional[list] = None
    row_c1: Optional[np.ndarray] = None
    row_c2: Optional[np.ndarray] = None

    def tau(self, dr: float, dt: float) -> float:
        return self.safety * (self.C1 * dr * dr + self.C2 * dt * dt)

    def tau_rows(self, report: "ViolationReport", dr: float, dt: float) -> np.ndarray:
        """Per-row tolerance for ``report``; rows are matched by key, else by nearest time."""
        if self.row_t is None:
            return np.full(len(report.t), self.tau(dr, dt))
        index = {k: i for i, k in enumerate(self.row_keys)}
        keys = _keys(report.row_keys if report.row_keys is not None else report.t)
        out = np.empty(len(keys))
        for i, k in enumerate(keys):
            j = index.get(k)
            if j is None:
                j = int(np.argmin(np.abs(self.row_t - report.t[i])))
            out[i] = self.safety * (self.row_c1[j] * dr * dr + self.row_c2[j] * dt * dt)
        return out

    @classmethod
    def calibrate(cls, base: "ViolationReport", space: "ViolationReport",
                  time: "ViolationReport", dr: float, dt: float, safety: float = 2.0):
        """Richardson constants from runs with ``dr`` halved and ``dt`` halved.

        For a second-order quantity ``Q_h - Q_{h/2} = (3/4) C h^2``.
        """
        d_r = _row_diffs(base, space) / (0.75 * dr * dr)
        d_t = _row_diffs(base, time) / (0.75 * dt * dt)
        keys = _keys(base.row_keys if base.row_keys is not None else base.t)
        return cls(float(np.max(d_r)), float(np.max(d_t)), safety, base.t.copy(), keys, d_r, d_t)

    def to_dict(self) -> dict:
        return {"C1": self.C1, "C2": self.C2, "safety": self.safety,
                "per_row": self.row_t is not None}


def _keys(arr) -> list:
    return [tuple(np.round(np.atleast_1d(a), 9)) for a in arr]


def _row_diffs(a: "ViolationReport", b: "ViolationReport") -> np.ndarray:
    """Largest margin difference per row of ``a`` over samples present in both reports.

    Rows of ``a`` missing from ``b`` inherit the largest difference found.
    """
    ka = _keys(a.row_keys if a.row_keys is not None else a.t)
    kb = _keys(b.row_keys if b.row_keys is not None else b.t)
    tb = {k: i for i, k in enumerate(kb)}
    cb = {k: j for j, k in enumerate(_keys(b.coords))}
    cols = [(j, cb[k]) for j, k in enumerate(_keys(a.coords)) if k in cb]
    rows = [(i, tb[k]) for i, k in enumerate(ka) if k in tb]
    if not rows or not cols:
        raise InputError(f"refined report for {a.inequality!r} shares no sample points")
    ja, jb = map(list, zip(*cols))
    out = np.full(len(ka), np.nan)
    for i, ib in rows:
        d = np.abs(a.margins[i, ja] - b.margins[ib, jb])
        d = d[np.isfinite(d)]
        out[i] = float(np.max(d)) if d.size else 0.0
    fill = np.nanmax(out) if np.any(np.isfinite(out)) else 0.0
    return np.where(np.isfinite(out), out, fill)


def _max_common_diff(a: "ViolationReport", b: "ViolationReport") -> float:
    """Largest margin difference over (t, sample) points present in both reports."""
    return float(np.max(_row_diffs(a, b)))


@dataclass
class ViolationReport:
    """Margins of one inequality and the resulting verdict."""

    inequality: str
    t: np.ndarray
    coords: np.ndarray
    margins: np.ndarray
    premise_verdict: str
    premise_margin: float = math.nan
    negative_control: bool = False
    tolerance: float = 0.0
    verdict: str = ""
    refinement_verdict: Optional[str] = None
    extra: dict = field(default_factory=dict)
    # Optional per-row identifiers used when rows are not keyed by time alone.
    row_keys: Optional[list] = None
    row_tolerance: Optional[np.ndarray] = field(default=None, repr=False)
    # Solver time of each row (``t`` may be kernel time or time since a start).
    solver_t: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.coords = np.asarray(self.coords, dtype=float)
        self.margins = np.asarray(self.margins, dtype=float)
        self.solver_t = self.t.copy() if self.solver_t is None else np.asarray(self.solver_t, float)
        if self.margins.shape != (len(self.t), len(self.coords)):
            raise InputError("margin array does not match the sample layout")
        if not self.verdict:
            self.set_tolerance(self.tolerance)

    @property
    def worst_index(self):
        m = np.where(np.isfinite(self.margins), self.margins, np.inf)
        return np.unravel_index(int(np.argmin(m)), m.shape)

    @property
    def worst_margin(self) -> float:
        i, j = self.worst_index
        return float(self.margins[i, j])

    @property
    def worst_location(self) -> dict:
        i, j = self.worst_index
        loc = np.atleast_1d(self.coords[j])
        out = {"t": float(self.t[i]), "r": float(loc[0])}
        if loc.size > 1:
            out["r2"] = float(loc[1])
        if self.row_keys is not None and len(np.atleast_1d(self.row_keys[i])) > 1:
            out["t0"] = float(np.atleast_1d(self.row_keys[i])[0])
        return out

    def set_tolerance(self, tau):
        """Set a scalar or per-row tolerance and recompute the verdict."""
        tau = np.broadcast_to(np.asarray(tau, dtype=float), (len(self.t),)).copy()
        self.row_tolerance = tau
        self.tolerance = float(np.max(tau)) if tau.size else 0.0
        w = self.worst_margin
        m = np.where(np.isfinite(self.margins), self.margins, np.inf)
        if w >= 0:
            self.verdict = "holds"
        elif np.all(m >= -tau[:, None]):
            self.verdict = "holds-within-tolerance"
        else:
            self.verdict = "violated"
        return self

    @property
    def excess(self) -> float:
        """Most negative ``margin + tau`` over the samples (negative means beyond tolerance)."""
        m = np.where(np.isfinite(self.margins), self.margins, np.inf)
        return float(np.min(m + self.row_tolerance[:, None])) if m.size else math.inf

    def apply_refinement(self, refined: "ViolationReport"):
        """Keep a violation only if it persists (does not halve) under refinement."""
        if self.verdict != "violated":
            self.refinement_verdict = "not-needed"
            return self
        rw = refined.worst_margin
        persistent = refined.excess < 0 and rw < 0.5 * self.worst_margin
        self.refinement_verdict = "persistent" if persistent else "not-persistent"
        if not persistent:
            self.verdict = "holds-within-tolerance"
        self.extra["refined_worst_margin"] = rw
        return self

    @property
    def detected(self) -> bool:
        return self.verdict == "violated" and self.refinement_verdict in (None, "persistent")

    def to_dict(self) -> dict:
        out = {
            "inequality": self.inequality,
            "premise_verdict": self.premise_verdict,
            "premise_margin": _finite(self.premise_margin),
            "negative_control": self.negative_control,
            "worst_margin": _finite(self.worst_margin),
            "worst_location": self.worst_location,
            "tolerance": self.tolerance,
            "tolerance_at_worst": float(self.row_tolerance[self.worst_index[0]]),
            "verdict": self.verdict,
            "refinement_verdict": self.refinement_verdict,
        }
        if self.negative_control:
            out["control_outcome"] = "expected-and-found" if self.detected else "expected-but-missing"
        out["extra"] = {k: _finite(v) if isinstance(v, float) else v for k, v in self.extra.items()}
        return out


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


# premises ----------------------------------------------------------------------

def check_premise(disc: Discretization, condition, m: float, K: float, times: Sequence[float],
                  negative_control: bool = False, eps: float = 1e-10, alpha: float = 0.0,
                  alpha_k: Optional[Callable[[float], float]] = None):
    """Evaluate a premise on the grid at every time; return (verdict, worst margin)."""
    worst = math.inf
    for t in times:
        ak = 0.0 if alpha_k is None else float(alpha_k(t))
        _, margin, _ = flow_condition_check(disc.model, disc.potential, disc.flow, m, K, t,
                                            condition, disc.grid.r, eps, alpha, ak)
        worst = min(worst, margin)
    ok = worst >= -eps
    if negative_control:
        return "negative_control", worst
    if not ok:
        raise PremiseError(f"premise {Condition(condition).value} fails (worst margin {worst:.6g}); "
                           "flag the monitor as a negative control to run it anyway")
    return "verified", worst


def _premise_times(states, horizon=None) -> list:
    ts = [s.t for s in states]
    if horizon is not None:
        ts = ts + [horizon]
    return sorted(set([0.0] + ts))


# sample selection ----------------------------------------------------------------

def node_mask(disc: Discretization, r_window=None, pole_band: int = POLE_BAND) -> np.ndarray:
    """Nodes inside ``r_window`` and outside the pole exclusion band."""
    r = disc.grid.r
    mask = np.ones(r.shape, dtype=bool)
    model = disc.model
    band = pole_band * disc.grid.dr * (1 + 1e-9)
    if model.boundary[0] == "pole-regular":
        mask &= r - model.r_min >= band
    if model.boundary[1] == "pole-regular":
        mask &= model.r_max - r >= band
    if r_window is not None:
        lo, hi = r_window
        if lo is not None:
            mask &= r >= lo - 1e-12
        if hi is not None:
            mask &= r <= hi + 1e-12
    return mask


def _select_states(states, t_window, clock):
    out = []
    for s in states:
        t = clock(s)
        if not t > 0:
            continue
        if t_window is not None:
            lo, hi = t_window
            if (lo is not None and t < lo - 1e-12) or (hi is not None and t > hi + 1e-12):
                continue
        out.append(s)
    if not out:
        raise InputError("no output times fall inside the monitor window")
    return out


def _clock(time_origin: str, t_start: float):
    if time_origin == "kernel":
        return lambda s: s.kernel_time
    if time_origin == "elapsed":
        return lambda s: s.t - t_start
    raise InputError(f"unknown time origin {time_origin!r}")


def _log_quantities(state: HeatState, disc: Discretization):
    u = state.u
    if not np.all(u > 0):
        raise InputError("monitors need strictly positive states")
    g2 = grad_sq(np.log(u), disc.grid, disc.flow, state.t)
    lu = disc.operator(state.t).apply(u) / u
    return u, g2, lu


def _pointwise(name, states, disc, clock, mask, margin_fn, premise, extra=None,
               negative_control=False):
    ts, rows = [], []
    for s in states:
        t = clock(s)
        u, g2, lu = _log_quantities(s, disc)
        rows.append(margin_fn(t, s, u, g2, lu)[mask])
        ts.append(t)
    verdict, pm = premise
    return ViolationReport(name, ts, disc.grid.r[mask], np.array(rows), verdict, pm,
                           negative_control, extra=dict(extra or {}),
                           solver_t=[s.t for s in states])


# flow constants ------------------------------------------------------------------

def flow_constants(disc: Discretization, m: float, horizon: float, variant: str = "lemma",
                   samples: int = 101):
    """``A^2 = max(|h|^2 + (tr h)^2/(m-n))`` and ``B = max |S|`` over ``[0, T]``."""
    flow, model = disc.flow, disc.model
    n = model.n
    ts = np.linspace(0.0, horizon, samples)
    if flow.is_static:
        return 0.0, 0.0
    if m <= n:
        raise InputError("flow constants need m > n")
    A2 = max(flow.h_norm_sq(t) + (0.0 if math.isinf(m) else flow.tr_h(t) ** 2 / (m - n))
             for t in ts)
    B = max(float(np.max(np.abs(s_tensor(model, disc.potential, flow, m, disc.grid.r, t, variant))))
            for t in ts)
    return A2, B


def _minimize_positive(fn, lo=-14.0, hi=10.0) -> float:
    """Minimize ``fn(gamma)`` over ``gamma > 0`` by a bounded search in ``log gamma``."""
    res = minimize_scalar(lambda x: fn(math.exp(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return math.exp(res.x)


# Li-Yau ---------------------------------------------------------------------------

LI_YAU_VARIANTS = ("static_CD0m", "static_CDKm_eq_LYK", "flow_thm18")


def thm18_bracket(m, alpha, K, A2, B, T, gamma=None):
    """Return ``(bracket, gamma)`` for the flow Li-Yau bound ``(m alpha^2/4t) * bracket``."""
    def bracket(g):
        inner = 4 * A2 + (2 * K + g) ** 2 / (alpha - 1) ** 2
        if B > 0:
            inner += 2 * B * B / g
        return 1 + math.sqrt(1 + T * T / m * inner)

    if gamma is None:
        gamma = 0.0 if B == 0 and K >= 0 else _minimize_positive(bracket)
    return bracket(gamma), gamma


def li_yau_check(traj: Trajectory, disc: Discretization, m: float, alpha: float = 1.0,
                 K: float = 0.0, variant: str = "static_CD0m", horizon: Optional[float] = None,
                 gamma: Optional[float] = None, negative_control: bool = False,
                 time_origin: str = "kernel", t_start: float = 0.0, t_window=None,
                 r_window=None, s_variant: str = "lemma") -> ViolationReport:
    """Li-Yau quantity ``Q = |grad u|^2/u^2 - alpha Lu/u`` against the variant bound."""
    if variant not in LI_YAU_VARIANTS:
        raise InputError(f"unknown Li-Yau variant {variant!r}")
    if alpha < 1:
        raise InputError("Li-Yau checks need alpha >= 1")
    if variant != "static_CD0m" and alpha <= 1:
        raise InputError(f"variant {variant} needs alpha > 1")
    if variant.startswith("static") and not disc.flow.is_static:
        raise InputError(f"variant {variant} needs a static flow")
    clock = _clock(time_origin, t_start)
    states = _select_states(traj.states, t_window, clock)
    T = horizon if horizon is not None else max(s.t for s in traj.states)
    extra = {"variant": variant, "alpha": alpha, "K": K, "m": m}
    if variant == "static_CD0m":
        premise = check_premise(disc, Condition.CD, m, 0.0, [0.0], negative_control)

        def bound(t):
            return m * alpha**2 / (2 * t)
    elif variant == "static_CDKm_eq_LYK":
        premise = check_premise(disc, Condition.CD_NEG, m, K, [0.0], negative_control)

        def bound(t):
            return m * alpha**2 / (2 * t) + m * alpha**2 * K / (math.sqrt(2) * (alpha - 1))
    else:
        premise = check_premise(disc, Condition.BACKWARD_ALPHA, m, K, _premise_times(traj.states, T),
                                negative_control, alpha=alpha)
        A2, B = flow_constants(disc, m, T, s_variant)
        br, gamma = thm18_bracket(m, alpha, K, A2, B, T, gamma)
        extra.update({"A2": A2, "B": B, "gamma": gamma, "T": T})

        def bound(t):
            return m * alpha**2 / (4 * t) * br

    def margin(t, s, u, g2, lu):
        return bound(t) - (g2 - alpha * lu)

    return _pointwise(f"li_yau[{variant}]", states, disc, clock, node_mask(disc, r_window), margin,
                      premise, extra, negative_control)


# Hamilton gradient estimates ----------------------------------------------------

def _hh_factor(K: float, t: float) -> float:
    return 1.0 / t if K == 0 else 2 * K / (-math.expm1(-2 * K * t))


def hamilton_gradient_check(traj: Trajectory, disc: Discretization, K: float = 0.0,
                            form: str = "HH", negative_control: bool = False,
                            t_start: float = 0.0, t_window=None, r_window=None,
                            A: Optional[float] = None) -> ViolationReport:
    """``|grad u|^2/u^2 <= F(t) log(A/u)`` with ``F = 2K/(1-e^{-2Kt})`` (HH) or ``1/t + 2K`` (Ham)."""
    if K < 0:
        raise InputError("Hamilton's gradient estimate needs K >= 0")
    if form not in ("HH", "Ham"):
        raise InputError(f"unknown bound form {form!r}")
    clock = _clock("elapsed", t_start)
    states = _select_states(traj.states, t_window, clock)
    premise = check_premise(disc, Condition.SUPER_PERELMAN, math.inf, K,
                            _premise_times(traj.states), negative_control)
    A = traj.sup_u if A is None else A

    def margin(t, s, u, g2, lu):
        F = _hh_factor(K, t) if form == "HH" else 1.0 / t + 2 * K
        return F * np.log(A / u) - g2

    return _pointwise(f"hamilton_gradient[{form}]", states, disc, clock, node_mask(disc, r_window),
                      margin, premise, {"K": K, "A": A}, negative_control)


# Li-Yau-Hamilton -----------------------------------------------------------------

LYH_VARIANTS = ("static_thm14", "flow_thm19")


def _lyh_flow_min_eig(disc: Discretization, m: float, K: float, t: float) -> float:
    _, margin, _ = flow_condition_check(disc.model, disc.potential, disc.flow, m, K, t,
                                        Condition.LYH_FLOW, disc.grid.r, alpha_k=0.0)
    return margin


def thm19_bracket(disc, m, K, A2, B, T, gamma=None, alpha_k=None, samples: int = 400):
    """Return ``(bracket, gamma)`` for the flow LYH bound ``(m e^{4Kt}/2t) * bracket``.

    With ``alpha_k=None`` the best admissible ``alpha_K(s) = min(lambda(s), gamma/2)``
    is used, ``lambda(s)`` being the smallest premise eigenvalue at time s.
    """
    s = np.linspace(T / samples, T, samples)
    lam = np.array([_lyh_flow_min_eig(disc, m, K, si) for si in s])
    if K == 0:
        denom = np.zeros_like(s)
    else:
        denom = 4 * np.exp(-4 * K * s) * np.expm1(-2 * K * s) ** 2

    def bracket(g):
        ak = np.minimum(lam, 0.5 * g) if alpha_k is None else np.array([alpha_k(si) for si in s])
        num = s**2 * (2 * ak - g) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(num == 0, 0.0, num / denom)
        inner = A2 * T * T / m + float(np.max(t1))
        if B > 0:
            inner += float(np.max(s**2 * np.exp(-4 * K * s))) * B * B / (2 * m * g)
        return 1 + math.sqrt(inner)

    if gamma is None:
        gamma = 0.0 if B == 0 and bracket(0.0) < math.inf else _minimize_positive(bracket)
    return bracket(gamma), gamma


def lyh_check(traj: Trajectory, disc: Discretization, m: float, K: float = 0.0,
              variant: str = "static_thm14", horizon: Optional[float] = None,
              gamma: Optional[float] = None, alpha_k: Optional[Callable] = None,
              negative_control: bool = False, time_origin: str = "kernel", t_start: float = 0.0,
              t_window=None, r_window=None, s_variant: str = "lemma") -> ViolationReport:
    """Li-Yau-Hamilton inequality, static or flow form."""
    if variant not in LYH_VARIANTS:
        raise InputError(f"unknown LYH variant {variant!r}")
    if K < 0:
        raise InputError("LYH checks need K >= 0")
    clock = _clock(time_origin, t_start)
    states = _select_states(traj.states, t_window, clock)
    extra = {"variant": variant, "K": K, "m": m}
    if variant == "static_thm14":
        if not disc.flow.is_static:
            raise InputError("static_thm14 needs a static flow")
        premise = check_premise(disc, Condition.CD_NEG, m, K, [0.0], negative_control)

        def margin(t, s, u, g2, lu):
            return lu - math.exp(-2 * K * t) * g2 + math.exp(2 * K * t) * m / (2 * t)
    else:
        T = horizon if horizon is not None else max(s.t for s in traj.states)
        if alpha_k is not None:
            premise = check_premise(disc, Condition.LYH_FLOW, m, K, _premise_times(traj.states, T),
                                    negative_control, alpha_k=alpha_k)
        else:
            # The default alpha_K never exceeds the smallest premise eigenvalue.
            premise = ("negative_control" if negative_control else "verified", math.nan)
        A2, B = flow_constants(disc, m, T, s_variant)
        br, gamma = thm19_bracket(disc, m, K, A2, B, T, gamma, alpha_k)
        if not math.isfinite(br):
            raise PremiseError("the flow LYH bound is infinite for these data")
        extra.update({"A2": A2, "B": B, "gamma": gamma, "T": T})

        def margin(t, s, u, g2, lu):
            bound = m * math.exp(4 * K * t) / (2 * t) * br
            return bound - (g2 - math.exp(2 * K * t) * lu)

    return _pointwise(f"lyh[{variant}]", states, disc, clock, node_mask(disc, r_window), margin,
                      premise, extra, negative_control)


# second order ---------------------------------------------------------------------

SECOND_ORDER_VARIANTS = ("static_HH3", "flow_HHH")


def _k_factor(K: float, t: float) -> float:
    return 1.0 / t if K == 0 else K / (-math.expm1(-K * t))


def second_order_check(traj: Trajectory, disc: Discretization, m: float, K: float = 0.0,
                       variant: str = "static_HH3", alpha: float = 0.5,
                       horizon: Optional[float] = None, negative_control: bool = False,
                       t_start: float = 0.0, t_window=None, r_window=None,
                       A: Optional[float] = None, s_variant: str = "lemma") -> ViolationReport:
    """``Lu/u + |grad u|^2/u^2 <= K/(1-e^{-Kt}) [m + 4 log(A/u)]`` and its flow form.

    The flow form divides by ``1 - alpha`` and adds ``C t`` inside the bracket.
    """
    if variant not in SECOND_ORDER_VARIANTS:
        raise InputError(f"unknown second-order variant {variant!r}")
    clock = _clock("elapsed", t_start)
    states = _select_states(traj.states, t_window, clock)
    A = traj.sup_u if A is None else A
    extra = {"variant": variant, "K": K, "m": m, "A": A}
    if variant == "static_HH3":
        if K < 0:
            raise InputError("static_HH3 needs K >= 0")
        if not disc.flow.is_static:
            raise InputError("static_HH3 needs a static flow")
        premise = check_premise(disc, Condition.CD_NEG, m, K, [0.0], negative_control)
        a_eff, C = 0.0, 0.0
    else:
        T = horizon if horizon is not None else max(s.t for s in traj.states)
        premise = check_premise(disc, Condition.SECOND_ORDER_FLOW, m, K,
                                _premise_times(traj.states, T), negative_control)
        A2, B = flow_constants(disc, m, T, s_variant)
        if B == 0:
            a_eff = 0.0
        elif not 0 < alpha < 1:
            raise InputError("flow_HHH needs alpha in (0, 1)")
        else:
            a_eff = alpha
        if K <= 0:
            if B > 0 or A2 > 0:
                raise InputError("flow_HHH with a moving metric needs K > 0")
            C = 0.0
        else:
            C = (1 - a_eff) / (2 * K) * A2
            if B > 0:
                C += (1 - a_eff) ** 2 * B * B / (8 * a_eff * K * K)
        extra.update({"A2": A2, "B": B, "alpha": a_eff, "C": C})

    def margin(t, s, u, g2, lu):
        bound = _k_factor(K, t) / (1 - a_eff) * (m + 4 * np.log(A / u) + C * t)
        return bound - (lu + g2)

    return _pointwise(f"second_order[{variant}]", states, disc, clock, node_mask(disc, r_window),
                      margin, premise, extra, negative_control)


# semigroup inequalities ----------------------------------------------------------

@dataclass
class CoevolvedFields:
    """``P_t f``, ``P_t(f log f)`` and ``P_t(|grad f|^2/f)`` in lockstep."""

    f: Trajectory
    flogf: Trajectory
    grad: Trajectory
    t_start: float

    @property
    def times(self) -> np.ndarray:
        return self.f.times


def coevolve(disc: Discretization, f: np.ndarray, dt: float, output_times: Sequence[float],
             t_start: float = 0.0, scheme: str = "crank_nicolson",
             dynamic_range: float = 1e8) -> CoevolvedFields:
    """Evolve ``f``, ``f log f`` and ``|grad f|^2/f`` under the same operators."""
    f = np.asarray(f, dtype=float)
    if not np.all(f > 0):
        raise InputError("coevolve needs f > 0")
    g = grad_sq(f, disc.grid, disc.flow, t_start) / f
    if np.max(g) > dynamic_range * max(1.0, float(np.max(f))):
        raise InputError("|grad f|^2/f exceeds the configured dynamic range")
    # Only P_t f must stay strictly positive; |grad f|^2/f may vanish identically.
    P, Q, G = evolve_fields(disc, [f, f * np.log(f), g], t_start, dt, output_times, scheme,
                            signed=[False, True, True])
    return CoevolvedFields(P, Q, G, t_start)


def _lsi_factor(K: float, t: float) -> float:
    return t if K == 0 else math.expm1(2 * K * t) / (2 * K)


def _semigroup_states(fields: CoevolvedFields, t_window):
    out = []
    for P, Q, G in zip(fields.f.states, fields.flogf.states, fields.grad.states):
        t = P.t - fields.t_start
        if t <= 0:
            continue
        if t_window is not None:
            lo, hi = t_window
            if (lo is not None and t < lo - 1e-12) or (hi is not None and t > hi + 1e-12):
                continue
        out.append((t, P, Q, G))
    if not out:
        raise InputError("no output times fall inside the monitor window")
    return out


def _semigroup_report(name, fields, disc, K, negative_control, t_window, r_window, margin_fn):
    premise = check_premise(disc, Condition.SUPER_PERELMAN, math.inf, K,
                            _premise_times(fields.f.states), negative_control)
    mask = node_mask(disc, r_window, pole_band=0)
    ts, rows, st = [], [], []
    for t, P, Q, G in _semigroup_states(fields, t_window):
        rows.append(margin_fn(t, P, Q, G)[mask])
        ts.append(t)
        st.append(P.t)
    verdict, pm = premise
    return ViolationReport(name, ts, disc.grid.r[mask], np.array(rows), verdict, pm,
                           negative_control, extra={"K": K}, solver_t=st)


def lsi_check(fields: CoevolvedFields, disc: Discretization, K: float,
              negative_control: bool = False, t_window=None, r_window=None) -> ViolationReport:
    """Local log-Sobolev inequality under ``h + Ric(L) >= -K``."""
    def margin(t, P, Q, G):
        deficit = Q.u - P.u * np.log(P.u)
        return _lsi_factor(K, t) * G.u - deficit

    return _semigroup_report("lsi", fields, disc, K, negative_control, t_window, r_window, margin)


def rlsi_check(fields: CoevolvedFields, disc: Discretization, K: float,
               negative_control: bool = False, t_window=None, r_window=None) -> ViolationReport:
    """Reverse local log-Sobolev inequality under ``h + Ric(L) >= -K``."""
    def margin(t, P, Q, G):
        deficit = Q.u - P.u * np.log(P.u)
        lhs = grad_sq(P.u, disc.grid, disc.flow, P.t) / P.u
        return _hh_factor(K, t) * deficit - lhs

    return _semigroup_report("rlsi", fields, disc, K, negative_control, t_window, r_window, margin)


# integrated Harnack ---------------------------------------------------------------

INTEGRATED_VARIANTS = ("same_time_cor1", "two_time_cor2")


def sample_radii(disc: Discretization, r_window=None, count: int = 48) -> np.ndarray:
    """Evenly strided node radii for pair sampling."""
    r = disc.grid.r[node_mask(disc, r_window)]
    stride = max(1, int(math.ceil(len(r) / count)))
    return r[::stride]


def _node_index(disc: Discretization, radii) -> np.ndarray:
    idx = np.rint((np.asarray(radii) - disc.grid.r[0]) / disc.grid.dr).astype(int)
    if np.any(np.abs(disc.grid.r[idx] - radii) > 1e-9):
        raise InputError("sample radii are not grid nodes")
    return idx


def _ray_distance(disc: Discretization, rx, ry, t):
    d = np.abs(rx - ry)
    if disc.grid.periodic:
        d = np.minimum(d, disc.model.length - d)
    return math.sqrt(disc.c(t)) * d


def integrated_harnack_check(traj: Trajectory, disc: Discretization, variant: str,
                             K: float = 0.0, m: Optional[float] = None, delta: float = 1.0,
                             radii=None, negative_control: bool = False, t_start: float = 0.0,
                             time_origin: str = "kernel", t_window=None, r_window=None,
                             A: Optional[float] = None, max_times: int = 12) -> ViolationReport:
    """Same-time (delta) and two-time Harnack inequalities over node pairs.

    Margins are in log form: ``log(bound) - log(u(x))``.
    """
    if variant not in INTEGRATED_VARIANTS:
        raise InputError(f"unknown integrated Harnack variant {variant!r}")
    if radii is None:
        radii = sample_radii(disc, r_window)
    idx = _node_index(disc, radii)
    rx, ry = np.meshgrid(radii, radii, indexing="ij")
    ix, iy = np.meshgrid(idx, idx, indexing="ij")
    off = rx != ry
    coords = np.stack([rx[off], ry[off]], axis=1)
    ix, iy = ix[off], iy[off]
    if variant == "same_time_cor1":
        if not delta > 0:
            raise InputError("cor1 needs delta > 0")
        if K < 0:
            raise InputError("cor1 needs K >= 0")
        clock = _clock("elapsed", t_start)
        states = _select_states(traj.states, t_window, clock)
        premise = check_premise(disc, Condition.SUPER_PERELMAN, math.inf, K,
                                _premise_times(traj.states), negative_control)
        A = traj.sup_u if A is None else A
        rows, ts = [], []
        for s in states:
            t = clock(s)
            lu = np.log(s.u)
            d2 = _ray_distance(disc, coords[:, 0], coords[:, 1], s.t) ** 2
            expo = (1 + 1 / delta) / (4 * (1 + delta)) * _hh_factor(K, t) * d2
            bound = (lu[iy] + delta * math.log(A)) / (1 + delta) + expo
            rows.append(bound - lu[ix])
            ts.append(t)
        verdict, pm = premise
        return ViolationReport("integrated_harnack[same_time_cor1]", ts, coords, np.array(rows),
                               verdict, pm, negative_control, extra={"K": K, "delta": delta, "A": A},
                               solver_t=[s.t for s in states])

    if m is None:
        raise InputError("two_time_cor2 needs m")
    if K < 0:
        raise InputError("cor2 needs K >= 0")
    if not disc.flow.is_static:
        raise InputError("two_time_cor2 needs a static flow")
    clock = _clock(time_origin, t_start)
    states = _select_states(traj.states, t_window, clock)
    premise = check_premise(disc, Condition.CD_NEG, m, K, [0.0], negative_control)
    states = states[::max(1, int(math.ceil(len(states) / max_times)))]
    d2 = _ray_distance(disc, coords[:, 0], coords[:, 1], 0.0) ** 2
    rows, tkeys, st = [], [], []
    for a, sa in enumerate(states):
        for sb in states[a + 1:]:
            tau, T = clock(sa), clock(sb)
            if K == 0:
                dist = d2 / (4 * (T - tau))
                time_term = 0.5 * m * math.log(T / tau)
            else:
                dist = K * d2 / (2 * (math.exp(-2 * K * tau) - math.exp(-2 * K * T)))
                time_term = 0.5 * m * (expi(2 * K * T) - expi(2 * K * tau))
            lx, ly = np.log(sa.u)[ix], np.log(sb.u)[iy]
            rows.append(ly + dist + time_term - lx)
            tkeys.append((tau, T))
            st.append(sb.t)
    verdict, pm = premise
    rep = ViolationReport("integrated_harnack[two_time_cor2]", [k[1] for k in tkeys], coords,
                          np.array(rows), verdict, pm, negative_control,
                          extra={"K": K, "m": m, "time_pairs": len(tkeys)}, row_keys=tkeys,
                          solver_t=st)
    return rep
