"""Command line entry point.

``wittenlab run <config> [--out DIR] [--refine L] [--seed S]``,
``wittenlab list-catalog [--json]`` and ``wittenlab calibrate <config>``.

Exit codes: 0 when every verified-premise monitor holds (possibly within
tolerance), 2 for a persistent violation on a verified premise, 3 for
configuration or geometry errors and 4 when a negative control was not
detected.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .errors import ConfigError, WittenLabError
from .scenario import (EXIT_CONFIG, EXIT_CONTROL_MISSED, EXIT_OK, EXIT_VIOLATION, calibrate,
                       load_config, run_scenario)

log = logging.getLogger("wittenlab")

# Batch exit code: the most severe outcome wins.
_PRIORITY = (EXIT_OK, EXIT_CONTROL_MISSED, EXIT_VIOLATION, EXIT_CONFIG)

CATALOG = {
    "models": {
        "sphere": "round unit sphere S^n, constant curvature 1",
        "euclidean": "flat R^n truncated at r_max with a reflecting rim",
        "hyperbolic": "hyperbolic space H^n truncated at r_max with a reflecting rim",
        "circle": "unit circle, periodic",
        "interval": "interval with reflecting ends",
    },
    "flows": {
        "static": "fixed metric and potential",
        "exponential": "homothetic expansion g = e^{2 lambda t} g0",
        "shrinking_sphere": "Ricci flow on round sphere, g = (1 - 2(n-1)t) g0",
    },
    "potentials": {
        "zero": "phi = 0",
        "constant": "phi = value",
        "quadratic": "phi = a r^2 / 2",
        "cosine": "phi = a cos r",
    },
    "functionals": {
        "H": "Boltzmann entropy -int u log u dmu",
        "fisher": "Fisher information int |grad log u|^2 u dmu",
        "W_m": "W-entropy for the dimension-m heat kernel gauge",
        "W_K": "W-entropy of the semigroup entropy deficit with curvature constant K",
        "W_mK": "W-entropy with the (m, K) gauge whose derivative is (m/2t) e^{4Kt}",
        "W_tilde": "W-entropy with the polynomial (m, K) gauge",
    },
    "monitors": {
        "li_yau": "Li-Yau gradient estimate, static and flow forms",
        "hamilton_gradient": "Hamilton gradient estimate against log(A/u)",
        "lyh": "Li-Yau-Hamilton Harnack estimate, static and flow forms",
        "second_order": "second-order Hamilton-type Harnack estimate, static and flow forms",
        "lsi": "local log-Sobolev inequality for the heat semigroup",
        "rlsi": "reverse local log-Sobolev inequality for the heat semigroup",
        "integrated_harnack": "same-time and two-time integrated Harnack inequalities",
    },
}


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the configuration code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wittenlab", description="Witten Laplacian heat-flow laboratory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver fallbacks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one or more scenarios")
    r.add_argument("configs", nargs="+", metavar="config")
    r.add_argument("--out", default=None, help="artifact directory")
    r.add_argument("--refine", type=int, default=None, metavar="L",
                   help="number of simultaneous (dr, dt) halvings")
    r.add_argument("--seed", type=int, default=0, metavar="S")
    r.add_argument("--jobs", type=int, default=1, help="parallel workers for several configs")

    c = sub.add_parser("list-catalog", help="list models, flows, functionals and monitors")
    c.add_argument("--json", action="store_true")

    k = sub.add_parser("calibrate", help="print tolerance constants only")
    k.add_argument("config")
    return p


def format_catalog() -> str:
    lines = []
    for group, entries in CATALOG.items():
        lines.append(f"{group}:")
        lines.extend(f"  {name} — {text}" for name, text in entries.items())
    return "\n".join(lines) + "\n"


def _run_one(path: str, out, refine, seed, several: bool):
    """Worker body; returns ``(path, exit code, summary line)``."""
    try:
        cfg = load_config(path)
        target = out
        if out is not None and several:
            target = os.path.join(out, cfg.name)
        outcome = run_scenario(cfg, target, refine, seed)
    except ConfigError as exc:
        return path, EXIT_CONFIG, f"config error: {exc}"
    except WittenLabError as exc:
        return path, EXIT_CONFIG, f"error: {exc}"
    parts = []
    for name, rep in outcome.report["monitors"].items():
        tag = rep["verdict"]
        if rep["negative_control"]:
            tag = rep["control_outcome"]
        parts.append(f"{name}={tag}")
    return path, outcome.exit_code, f"exit {outcome.exit_code}: " + ", ".join(parts)


def _cmd_run(args) -> int:
    several = len(args.configs) > 1
    jobs = max(1, int(args.jobs))
    if several and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, args.configs, [args.out] * len(args.configs),
                                    [args.refine] * len(args.configs),
                                    [args.seed] * len(args.configs),
                                    [True] * len(args.configs)))
    else:
        results = [_run_one(p, args.out, args.refine, args.seed, several) for p in args.configs]
    code = EXIT_OK
    for path, rc, line in results:
        stream = sys.stderr if rc == EXIT_CONFIG else sys.stdout
        print(f"{path}: {line}", file=stream)
        if _PRIORITY.index(rc) > _PRIORITY.index(code):
            code = rc
    return code


def _cmd_calibrate(args) -> int:
    try:
        tols, _ = calibrate(load_config(args.config))
    except WittenLabError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({n: t.to_dict() for n, t in tols.items()}, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-catalog":
        if args.json:
            print(json.dumps(CATALOG, indent=2))
        else:
            sys.stdout.write(format_catalog())
        return EXIT_OK
    if args.command == "calibrate":
        return _cmd_calibrate(args)
    return _cmd_run(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
