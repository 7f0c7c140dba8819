"""Scenario configuration and the run pipeline behind the command line.

A scenario is an INI file with sections ``model``, ``potential``, ``flow``,
``initial``, ``solve``, ``functionals``, ``tolerances``, ``refinement``
and any number of ``monitor.<name>`` sections.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from . import functionals as fn
from . import monitors as mon
from .discretize import Discretization, Grid
from .errors import ConfigError, WittenLabError
from .flows import catalog
from .geometry import RadialModel, make_potential
from .heatflow import eigenfunction, make_initial, run, spectral_reference

FUNCTIONAL_HEADERS = ("H", "fisher", "H_m", "W_m", "dWm_fd", "dWm_rhs", "H_K", "W_K", "dWK_fd",
                      "dWK_rhs", "H_mK", "W_mK", "dWmK_fd", "dWmK_rhs", "W_tilde", "dWt_fd",
                      "dWt_rhs")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 2, 3
# A negative control whose violation was not detected.
EXIT_CONTROL_MISSED = 4

MONITOR_CHECKS = ("li_yau", "hamilton_gradient", "lyh", "second_order", "lsi", "rlsi",
                  "integrated_harnack")


# parsing helpers -----------------------------------------------------------------

def _num(value: str, path: str) -> float:
    v = value.strip().lower()
    if v in ("inf", "infinity", "+inf"):
        return math.inf
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"expected a number, got {value!r}", path) from None


def _bool(value: str, path: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}", path)


class _Section:
    """Typed accessor over one config section that records the key path."""

    def __init__(self, name: str, data: dict):
        self.name = name
        self.data = dict(data)

    def path(self, key):
        return f"{self.name}.{key}"

    def has(self, key):
        return key in self.data

    def str(self, key, default=None):
        if key not in self.data:
            if default is None:
                raise ConfigError("missing required key", self.path(key))
            return default
        return self.data[key].strip().strip('"').strip("'")

    def num(self, key, default=None):
        if key not in self.data:
            if default is None:
                raise ConfigError("missing required key", self.path(key))
            return default
        return _num(self.data[key], self.path(key))

    def int(self, key, default=None):
        v = self.num(key, default)
        if v is None or int(v) != v:
            raise ConfigError(f"expected an integer, got {v!r}", self.path(key))
        return int(v)

    def bool(self, key, default=False):
        return _bool(self.data[key], self.path(key)) if key in self.data else default

    def opt(self, key):
        return self.num(key) if key in self.data else None


@dataclass
class ScenarioConfig:
    """Parsed scenario; ``sections`` maps section names to raw key/value dicts."""

    name: str
    sections: dict
    source: str = ""

    def section(self, name) -> _Section:
        return _Section(name, self.sections.get(name, {}))

    @property
    def monitor_names(self) -> list:
        return [s.split(".", 1)[1] for s in self.sections if s.startswith("monitor.")]


def parse_config(text: str, name: str = "scenario", source: str = "") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}", source) from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    known = {"scenario", "model", "potential", "flow", "initial", "solve", "functionals",
             "tolerances", "refinement"}
    for s in sections:
        if s not in known and not s.startswith("monitor."):
            raise ConfigError(f"unknown section [{s}]", source)
    if "scenario" in sections and "name" in sections["scenario"]:
        name = sections["scenario"]["name"].strip()
    return ScenarioConfig(name, sections, source)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path) from None
    stem = os.path.splitext(os.path.basename(path))[0]
    return parse_config(text, stem, path)


# validation ------------------------------------------------------------------------

ALLOWED_KEYS = {
    "scenario": {"name"},
    "model": {"kind", "n", "N", "r_max", "length"},
    "potential": {"preset", "value", "a"},
    "flow": {"name", "lambda", "coupling"},
    "initial": {"kind", "center", "width", "t0", "l", "amplitude"},
    "solve": {"dt", "horizon", "scheme", "output_times"},
    "functionals": {"m", "K", "K_mk", "gauge", "d_k_variant", "s_sign_variant", "kernel_time"},
    "tolerances": {"mode", "C1", "C2", "safety"},
    "refinement": {"levels", "oracle"},
}
MONITOR_KEYS = {"check", "variant", "form", "m", "K", "alpha", "delta", "gamma",
                "negative_control", "time_origin", "t_min", "t_max", "r_min", "r_max"}


def validate(cfg: ScenarioConfig):
    """Reject unknown keys and dimension parameters below the model dimension."""
    for sec, data in cfg.sections.items():
        allowed = MONITOR_KEYS if sec.startswith("monitor.") else ALLOWED_KEYS[sec]
        for key in data:
            if key not in allowed:
                raise ConfigError(f"unknown key; allowed: {sorted(allowed)}", f"{sec}.{key}")
    n = build_model(cfg).n
    for sec in ["functionals"] + [f"monitor.{m}" for m in cfg.monitor_names]:
        s = cfg.section(sec)
        if s.has("m") and s.num("m") < n:
            raise ConfigError(f"dimension parameter m={s.num('m'):g} violates the precondition "
                              f"m >= n (n={n})", s.path("m"))
    for name in cfg.monitor_names:
        s = cfg.section(f"monitor.{name}")
        if s.str("check") not in MONITOR_CHECKS:
            raise ConfigError(f"unknown check; known: {list(MONITOR_CHECKS)}", s.path("check"))


# building blocks -------------------------------------------------------------------

def build_model(cfg: ScenarioConfig) -> RadialModel:
    s = cfg.section("model")
    kind = s.str("kind")
    try:
        if kind == "sphere":
            return RadialModel.sphere(s.int("n", 2))
        if kind == "euclidean":
            return RadialModel.euclidean(s.int("n", 2), s.num("r_max", 7.0))
        if kind == "hyperbolic":
            return RadialModel.hyperbolic(s.int("n", 3), s.num("r_max", 6.0))
        if kind == "circle":
            return RadialModel.circle()
        if kind == "interval":
            return RadialModel.interval(s.num("length", math.pi))
    except WittenLabError as exc:
        raise ConfigError(str(exc), "model") from None
    raise ConfigError(f"unknown model kind {kind!r}", s.path("kind"))


@dataclass
class Resolution:
    """Refinement exponents: spacing ``dr / 2^space`` and step ``dt / 2^time``."""

    space: int = 0
    time: int = 0


@dataclass
class RunResult:
    disc: Discretization
    dt: float
    traj: object
    reports: dict
    series: dict
    fields: object = None
    diagnostics: dict = field(default_factory=dict)


def _output_times(s: _Section, dt: float, time_level: int, horizon: float):
    spec = s.str("output_times", f"{dt}:{horizon}:{dt}")
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("expected start:stop:step", s.path("output_times"))
    start, stop, step = (_num(p, s.path("output_times")) for p in parts)
    if not (0 <= start <= stop <= horizon + 1e-12) or step <= 0:
        raise ConfigError("output times must lie in [0, horizon] with a positive step",
                          s.path("output_times"))
    step = step / 2**time_level
    count = int(round((stop - start) / step))
    times = [start + k * step for k in range(count + 1)]
    ratio = step / dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError("output step must be a multiple of solve.dt", s.path("output_times"))
    return [round(t / dt) * dt for t in times]


def _window(ms: _Section, lo, hi):
    a, b = ms.opt(lo), ms.opt(hi)
    return None if a is None and b is None else (a, b)


def execute(cfg: ScenarioConfig, res: Resolution = Resolution(), radii_hint=None,
            with_monitors: bool = True) -> RunResult:
    """Run the solve, functionals and monitors at one resolution."""
    validate(cfg)
    model = build_model(cfg)
    ms = cfg.section("model")
    try:
        grid = Grid(model, ms.int("N", 400))
    except WittenLabError as exc:
        raise ConfigError(str(exc), ms.path("N")) from None
    for _ in range(res.space):
        grid = grid.refined()
    ps = cfg.section("potential")
    pname = ps.str("preset", "zero")
    pparams = {k: ps.num(k) for k in ps.data if k != "preset"}
    try:
        potential = make_potential(pname, **pparams)
    except (TypeError, WittenLabError) as exc:
        raise ConfigError(f"bad potential: {exc}", "potential") from None
    ss = cfg.section("solve")
    dt = ss.num("dt", 1e-3) / 2**res.time
    horizon = ss.num("horizon", 1.0)
    scheme = ss.str("scheme", "crank_nicolson")
    fs = cfg.section("flow")
    try:
        flow = catalog(fs.str("name", "static"), model, potential, fs.str("coupling", "independent"),
                       T=horizon, lam=fs.num("lambda", 0.0))
    except WittenLabError as exc:
        raise ConfigError(str(exc), "flow") from None
    disc = Discretization(model, grid, flow)
    times = _output_times(ss, dt, res.time, horizon)

    ins = cfg.section("initial")
    kind = ins.str("kind")
    kw = {}
    for key in ("center", "width", "t0", "amplitude"):
        if ins.has(key):
            kw[key] = ins.num(key)
    if ins.has("l"):
        kw["l"] = ins.int("l")
    try:
        u0 = make_initial(kind, disc, 0.0, dt=dt, scheme=scheme, **kw)
    except WittenLabError as exc:
        raise ConfigError(str(exc), "initial") from None
    if times[0] == 0.0:
        times_run = times
    else:
        times_run = [0.0] + times
    try:
        traj = run(disc, u0, dt, times_run, scheme)
    except WittenLabError as exc:
        raise ConfigError(str(exc), "solve") from None
    traj.states = [s for s in traj.states if any(abs(s.t - t) < 1e-12 for t in times)]

    fcfg = cfg.section("functionals")
    fields = None
    needs_fields = with_monitors and (fcfg.has("K") or any(
        cfg.section(f"monitor.{n}").str("check", "") in ("lsi", "rlsi") for n in cfg.monitor_names))
    if needs_fields:
        fields = mon.coevolve(disc, u0.u, dt, times_run, 0.0, scheme)
        for tr in (fields.f, fields.flogf, fields.grad):
            tr.states = [s for s in tr.states if s.t > 0 and any(abs(s.t - t) < 1e-12 for t in times)]
    series = compute_series(cfg, disc, traj, fields) if with_monitors else {}
    reports = {}
    for name in (cfg.monitor_names if with_monitors else ()):
        reports[name] = run_monitor(cfg, name, disc, traj, fields, horizon, radii_hint)
    diag = {
        "fallbacks": int(traj.diagnostics.get("fallbacks", 0)),
        "max_mass_drift": float(np.max(np.abs(traj.diagnostics["mass_drift"])))
        if len(traj.diagnostics["mass_drift"]) else 0.0,
        "max_boundary_flux": float(np.max(traj.diagnostics["boundary_flux"]))
        if len(traj.diagnostics.get("boundary_flux", [])) else 0.0,
        "positivity_bound": float(traj.diagnostics["positivity_bound"]),
        "N": grid.N, "dr": grid.dr, "dt": dt,
    }
    return RunResult(disc, dt, traj, reports, series, fields, diag)


def compute_series(cfg: ScenarioConfig, disc, traj, fields) -> dict:
    """Functional columns on the output-time base (NaN where not configured)."""
    f = cfg.section("functionals")
    states = traj.states
    nt = len(states)
    cols = {h: np.full(nt, np.nan) for h in FUNCTIONAL_HEADERS}
    cols["t"] = np.array([s.t for s in states])
    cols["H"] = np.array([fn.boltzmann_entropy(s) for s in states])
    cols["fisher"] = np.array([fn.fisher(s, disc) for s in states])
    kernel_time = f.bool("kernel_time", True)
    try:
        if f.has("m") and nt >= 3:
            m = f.num("m")
            a = fn.series_w_m(states, disc, m, kernel_time)
            cols["H_m"], cols["W_m"] = a.companions["H"], a.values
            cols["dWm_fd"], cols["dWm_rhs"] = a.companions["fd"], a.companions["rhs"]
            if f.has("K_mk"):
                K = f.num("K_mk")
                b = fn.series_w_mk(states, disc, m, K, f.num("gauge", 0.0), kernel_time)
                cols["H_mK"], cols["W_mK"] = b.companions["H"], b.values
                cols["dWmK_fd"], cols["dWmK_rhs"] = b.companions["fd"], b.companions["rhs"]
                c = fn.series_w_tilde(states, disc, m, K, kernel_time)
                cols["W_tilde"] = c.values
                cols["dWt_fd"], cols["dWt_rhs"] = c.companions["fd"], c.companions["rhs"]
        if f.has("K") and fields is not None and nt >= 3:
            d = fn.series_w_k(fields.f.states, fields.flogf.states, disc, f.num("K"),
                              f.str("d_k_variant", "derivation"), fields.t_start)
            cols["H_K"], cols["W_K"] = d.companions["H"], d.values
            cols["dWK_fd"], cols["dWK_rhs"] = d.companions["fd"], d.companions["rhs"]
    except WittenLabError as exc:
        raise ConfigError(str(exc), "functionals") from None
    return cols


def run_monitor(cfg, name, disc, traj, fields, horizon, radii_hint=None):
    ms = cfg.section(f"monitor.{name}")
    check = ms.str("check")
    if check not in MONITOR_CHECKS:
        raise ConfigError(f"unknown check {check!r}; known: {MONITOR_CHECKS}", ms.path("check"))
    neg = ms.bool("negative_control", False)
    tw = _window(ms, "t_min", "t_max")
    rw = _window(ms, "r_min", "r_max")
    K = ms.num("K", 0.0)
    common = dict(negative_control=neg, t_window=tw, r_window=rw)
    origin = ms.str("time_origin", "kernel")
    sv = cfg.section("functionals").str("s_sign_variant", "lemma")
    try:
        if check == "li_yau":
            return mon.li_yau_check(traj, disc, ms.num("m"), ms.num("alpha", 1.0), K,
                                    ms.str("variant", "static_CD0m"), horizon, ms.opt("gamma"),
                                    time_origin=origin, s_variant=sv, **common)
        if check == "hamilton_gradient":
            return mon.hamilton_gradient_check(traj, disc, K, ms.str("form", "HH"), **common)
        if check == "lyh":
            return mon.lyh_check(traj, disc, ms.num("m"), K, ms.str("variant", "static_thm14"),
                                 horizon, ms.opt("gamma"), time_origin=origin, s_variant=sv,
                                 **common)
        if check == "second_order":
            return mon.second_order_check(traj, disc, ms.num("m"), K,
                                          ms.str("variant", "static_HH3"), ms.num("alpha", 0.5),
                                          horizon, s_variant=sv, **common)
        if check in ("lsi", "rlsi"):
            f = mon.lsi_check if check == "lsi" else mon.rlsi_check
            return f(fields, disc, K, **common)
        radii = None if radii_hint is None else radii_hint.get(name)
        return mon.integrated_harnack_check(traj, disc, ms.str("variant", "same_time_cor1"), K,
                                            ms.opt("m"), ms.num("delta", 1.0), radii,
                                            time_origin=origin, **common)
    except WittenLabError as exc:
        raise ConfigError(str(exc), f"monitor.{name}") from None


# pipeline ------------------------------------------------------------------------

def _radii_hint(result: RunResult) -> dict:
    return {name: np.unique(rep.coords[:, 0]) for name, rep in result.reports.items()
            if rep.inequality.startswith("integrated_harnack")}


def calibrate(cfg: ScenarioConfig, base: Optional[RunResult] = None):
    """Per-monitor tolerance models from space-halved and time-halved runs."""
    t = cfg.section("tolerances")
    safety = t.num("safety", 2.0)
    mode = t.str("mode", "calibrate")
    if base is None:
        base = execute(cfg)
    if mode == "fixed":
        tm = mon.ToleranceModel(t.num("C1"), t.num("C2"), safety)
        return {name: tm for name in base.reports}, base
    if mode != "calibrate":
        raise ConfigError(f"unknown tolerance mode {mode!r}", t.path("mode"))
    hint = _radii_hint(base)
    space = execute(cfg, Resolution(1, 0), hint)
    time = execute(cfg, Resolution(0, 1), hint)
    dr, dt = base.disc.grid.dr, base.dt
    out = {}
    for name, rep in base.reports.items():
        out[name] = mon.ToleranceModel.calibrate(rep, space.reports[name], time.reports[name],
                                                 dr, dt, safety)
    return out, base


def format_csv(series: dict, reports: dict) -> str:
    """Deterministic CSV text: 17 significant digits, LF line endings.

    Monitor columns hold the worst margin over all samples at that solver time.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(reports)
    w.writerow(["t", *FUNCTIONAL_HEADERS, *[f"margin:{n}" for n in names]])
    per_t = {}
    for n, rep in reports.items():
        lookup = {}
        with np.errstate(all="ignore"):
            finite = np.where(np.isfinite(rep.margins), rep.margins, np.inf)
            col = np.min(finite, axis=1) if finite.size else np.array([])
        for tk, v in zip(rep.solver_t, col):
            key = round(float(tk), 9)
            lookup[key] = min(v, lookup.get(key, math.inf))
        per_t[n] = lookup
    for i, ti in enumerate(series["t"]):
        row = [_fmt(ti)] + [_fmt(series[h][i]) for h in FUNCTIONAL_HEADERS]
        row += [_fmt(per_t[n].get(round(float(ti), 9), math.nan)) for n in names]
        w.writerow(row)
    return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "nan"
    return format(x, ".17g")


IDENTITY_COLUMNS = {"W_m": ("dWm_fd", "dWm_rhs"), "W_K": ("dWK_fd", "dWK_rhs"),
                    "W_mK": ("dWmK_fd", "dWmK_rhs"), "W_tilde": ("dWt_fd", "dWt_rhs")}


def identity_residuals(series: dict) -> dict:
    """Largest ``|fd - rhs|`` per W-functional over interior output times.

    The end samples use one-sided differences and are left out.
    """
    out = {}
    for name, (fd, rhs) in IDENTITY_COLUMNS.items():
        r = np.abs(np.asarray(series.get(fd, []))[1:-1] - np.asarray(series.get(rhs, []))[1:-1])
        r = r[np.isfinite(r)]
        if r.size:
            out[name] = float(np.max(r))
    return out


def oracle_errors(cfg: ScenarioConfig, levels: int):
    """Sup errors against the spectral oracle at ``levels + 1`` nested resolutions.

    Only eigen-perturbation data have a closed-form initial profile; other
    data return None.
    """
    ins = cfg.section("initial")
    if ins.str("kind") != "eigen_perturbation":
        return None
    l, amp = ins.int("l", 1), ins.num("amplitude", 0.5)
    errs = []
    for k in range(levels + 1):
        res = execute(cfg, Resolution(k, k), with_monitors=False)
        disc = res.disc

        def f0(r, _m=disc.model):
            return 1.0 + amp * eigenfunction(_m, l, r)

        states = res.traj.states
        try:
            ref = spectral_reference(disc, f0, [st.t for st in states]).values
        except WittenLabError as exc:
            raise ConfigError(str(exc), "refinement.oracle") from None
        errs.append(float(max(np.max(np.abs(st.u - v)) for st, v in zip(states, ref))))
    return {"errors": errs, "orders": _orders(errs)}


def _orders(errs):
    return [math.log2(a / b) if a > 0 and b > 0 else None for a, b in zip(errs, errs[1:])]


@dataclass
class ScenarioOutcome:
    exit_code: int
    report: dict
    csv_text: str
    base: RunResult
    refined: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)


def _exit_code(reports: dict) -> int:
    code = EXIT_OK
    for rep in reports.values():
        if rep.negative_control:
            continue
        if rep.verdict == "violated":
            code = EXIT_VIOLATION
    if code == EXIT_OK and any(r.negative_control and not r.detected for r in reports.values()):
        code = EXIT_CONTROL_MISSED
    return code


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None, refine: Optional[int] = None,
                 seed: int = 0) -> ScenarioOutcome:
    """Execute the full pipeline and optionally write artifacts to ``out_dir``.

    ``refine`` overrides ``refinement.levels``: the number of simultaneous
    (dr, dt) halvings run after the base resolution.  Level 1 decides
    whether base violations persist.  The pipeline has no random elements;
    ``seed`` is recorded in the report only.
    """
    tols, base = calibrate(cfg)
    for name, rep in base.reports.items():
        rep.set_tolerance(tols[name].tau_rows(rep, base.disc.grid.dr, base.dt))
    levels = cfg.section("refinement").int("levels", 1) if refine is None else int(refine)
    if levels < 0:
        raise ConfigError("refinement levels must be >= 0", "refinement.levels")
    hint = _radii_hint(base)
    refined = []
    for k in range(1, levels + 1):
        r = execute(cfg, Resolution(k, k), hint)
        for name, rep in r.reports.items():
            rep.set_tolerance(tols[name].tau_rows(rep, r.disc.grid.dr, r.dt))
        refined.append(r)
    if refined:
        for name, rep in base.reports.items():
            rep.apply_refinement(refined[0].reports[name])
    oracle = None
    if cfg.section("refinement").bool("oracle", False):
        oracle = oracle_errors(cfg, max(levels, 2))
    ident = [identity_residuals(base.series)] + [identity_residuals(r.series) for r in refined]
    identities = {name: {"max_residual": [lvl.get(name) for lvl in ident],
                         "orders": _orders([lvl.get(name, 0.0) for lvl in ident])}
                  for name in ident[0]}

    exit_code = _exit_code(base.reports)
    report = {
        "scenario": cfg.name,
        "seed": int(seed),
        "exit_code": exit_code,
        "resolution": {"N": base.disc.grid.N, "dr": base.disc.grid.dr, "dt": base.dt,
                       "refinement_levels": levels},
        "diagnostics": base.diagnostics,
        "tolerances": {n: t.to_dict() for n, t in tols.items()},
        "monitors": {n: r.to_dict() for n, r in base.reports.items()},
        "identities": identities,
        "convergence": oracle,
    }
    csv_text = format_csv(base.series, base.reports)
    outcome = ScenarioOutcome(exit_code, report, csv_text, base, refined, tols)
    if out_dir is not None:
        write_artifacts(out_dir, outcome)
        for k, r in enumerate(refined, start=1):
            sub = os.path.join(out_dir, "refine", f"level_{k}")
            lvl = {
                "scenario": cfg.name,
                "level": k,
                "resolution": {"N": r.disc.grid.N, "dr": r.disc.grid.dr, "dt": r.dt},
                "diagnostics": r.diagnostics,
                "monitors": {n: rep.to_dict() for n, rep in r.reports.items()},
                "identities": ident[k],
            }
            _write(sub, format_csv(r.series, r.reports), lvl)
        if refined:
            summary = {"identities": identities, "convergence": oracle}
            _write_json(os.path.join(out_dir, "refine", "orders.json"), summary)
    return outcome


def report_schema() -> dict:
    text = resources.files("wittenlab").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: dict):
    jsonschema.validate(report, report_schema())


def _write_json(path: str, data: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write(out_dir: str, csv_text: str, report: dict):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "series.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text)
    _write_json(os.path.join(out_dir, "report.json"), report)


def write_artifacts(out_dir: str, outcome: ScenarioOutcome):
    validate_report(outcome.report)
    _write(out_dir, outcome.csv_text, outcome.report)
