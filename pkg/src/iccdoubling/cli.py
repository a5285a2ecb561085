"""Command-line interface.

Every command is driven by one configuration (see :mod:`iccdoubling.config`),
given either as a file::

    iccdoubling run mira.ini

or assembled from flags::

    iccdoubling classify --map Mira -P a=-2.5 -P b=-0.85578 -P c=-2.45869 -o out/mira

Each run writes CSV files (floats with 17 significant digits), generated
plotting scripts and ``summary.json`` into the output directory. Exit status:
0 success, 2 configuration error, 3 numerical failure, 4 divergence, 1 other
library errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, RunConfig, emit_config, load_config, parse_config
from .cycles import (
    Aperiodic,
    Cycle,
    assign_roles,
    attractor_cycle,
    check_assumptions,
    find_saddle_on_icc,
    third_eigenvalue_sign,
)
from .errors import IccError, NumericalError
from .maps import REGISTRY
from .pipeline import build_icc, verify
from .plotting import bifdiag_script, curve_script, fit_quadric, ribbon_script, scan_script
from .quasi import rational_approx
from .ribbon import DEFAULT_P_MAX, MAX_STEP_DEG, WINDOW, predict
from .scan import ParamPath, bifdiag, check_a4, locate_flip, scan2d

log = logging.getLogger("iccdoubling")

SUMMARY = "summary.json"
SCHEMA_VERSION = 1


# --- output helpers ------------------------------------------------------------


def fmt17(v):
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt17(v) if isinstance(v, (float, np.floating)) else v for v in row])


def eig_json(lam):
    if isinstance(lam, complex):
        return {"re": lam.real, "im": lam.imag}
    return float(lam)


def cycle_json(c: Cycle):
    out = {
        "period": c.period,
        "kind": c.kind.value,
        "signature": c.signature,
        "multipliers": [eig_json(l) for l in c.eigenvalues],
        "condition": c.condition,
        "points": c.points.tolist(),
    }
    try:
        out["third_sign"] = third_eigenvalue_sign(c)
        roles = assign_roles(c)
        out["roles"] = {"doubling": roles.doubling, "tangential": roles.tangential,
                        "third": roles.third}
    except IccError as exc:
        out["third_sign"] = None
        out["roles_error"] = str(exc)
    return out


def verdict_json(v):
    out = {
        "topology": v.topology.value,
        "prediction": v.prediction.value,
        "holonomy_sign": v.holonomy_sign,
        "twist_total": v.twist_total,
        "closing_angle": v.closing_angle,
        "confidence": v.confidence,
        "p_used": v.p_used,
        "third_sign": v.third_sign,
        "doubling_distance": v.doubling_distance,
    }
    if v.rational is not None:
        out["rational"] = {"q": v.rational.q, "p": v.rational.p, "error": v.rational.error}
    return out


class Run:
    """Collects artifacts and results for one command invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.results = {}

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)

    def text(self, name, text):
        self.path(name).write_text(text, encoding="utf-8")

    def summary(self, status="ok", error=None):
        doc = {
            "schema": SCHEMA_VERSION,
            "version": __version__,
            "command": self.cfg.command,
            "map": self.cfg.map,
            "params": self.cfg.params,
            "status": status,
            "partial": status != "ok",
            "files": list(self.files),
            "results": self.results,
        }
        if error is not None:
            doc["error"] = {"type": type(error).__name__, "message": str(error),
                            "exit_code": getattr(error, "exit_code", 1)}
        (self.out / SUMMARY).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n",
                                        encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return eig_json(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# --- commands ------------------------------------------------------------------


def _icc_kwargs(cfg):
    kw = {}
    for key in ("seed", "transient", "n", "n_points"):
        if key in cfg.options:
            kw[key] = cfg.options[key]
    return kw


def _write_icc(run, icc, title):
    pts = icc.points
    try:
        surf = fit_quadric(pts)
        disp = surf.display(pts)
        run.results["quadric"] = {"coefficients": surf.coefficients.tolist(),
                                  "residual": surf.residual}
        run.csv("icc.csv", ["x", "y", "z", "zd"],
                (list(p) + [d[2]] for p, d in zip(pts, disp)))
        run.text("plot_icc.py", curve_script("icc.csv", title, flattened=True))
    except IccError as exc:
        run.results["quadric"] = {"error": str(exc)}
        run.csv("icc.csv", ["x", "y", "z"], (list(p) for p in pts))
        run.text("plot_icc.py", curve_script("icc.csv", title, flattened=False))


def _icc_json(icc):
    out = {"kind": icc.kind.value, "points": len(icc.points), "length": icc.length,
           "period": icc.period, "rotation_number": icc.rotation}
    if icc.node is not None:
        out["node"] = cycle_json(icc.node)
    if icc.saddle is not None:
        out["saddle"] = cycle_json(icc.saddle)
    if icc.node is not None and icc.saddle is not None:
        try:
            out["assumptions"] = check_assumptions(icc.node, icc.saddle)
        except IccError as exc:
            out["assumptions"] = {"error": str(exc)}
    return out


def cmd_cycle(run):
    cfg = run.cfg
    f = cfg.bound_map()
    att = attractor_cycle(f, p_max=cfg.option("k_max", 64), transient=cfg.option("transient", 10_000),
                          seed=cfg.option("seed", (0.1, 0.05, 0.01)))
    if isinstance(att, Aperiodic):
        run.results["attractor"] = {"kind": "aperiodic", "state": att.state.tolist()}
        return
    run.results["attractor"] = cycle_json(att)
    run.csv("cycle.csv", ["i", "x", "y", "z"], ([i, *p] for i, p in enumerate(att.points)))
    if cfg.option("saddle", False):
        sad = find_saddle_on_icc(f, att)
        run.results["saddle"] = cycle_json(sad)
        run.results["assumptions"] = check_assumptions(att, sad)
        run.csv("saddle.csv", ["i", "x", "y", "z"], ([i, *p] for i, p in enumerate(sad.points)))


def cmd_icc_resonant(run):
    f = run.cfg.bound_map()
    icc = build_icc(f, "resonant", **_icc_kwargs(run.cfg))
    run.results["icc"] = _icc_json(icc)
    _write_icc(run, icc, f"{run.cfg.map} resonant curve")


def cmd_icc_quasi(run):
    f = run.cfg.bound_map()
    icc = build_icc(f, "quasiperiodic", **_icc_kwargs(run.cfg))
    run.results["icc"] = _icc_json(icc)
    if icc.rotation is not None:
        ra = rational_approx(icc.rotation, run.cfg.option("p_max", DEFAULT_P_MAX))
        run.results["rational"] = {"q": ra.q, "p": ra.p, "error": ra.error}
    _write_icc(run, icc, f"{run.cfg.map} quasiperiodic curve")


def _classify(run):
    cfg = run.cfg
    f = cfg.bound_map()
    icc = build_icc(f, cfg.option("kind"), **_icc_kwargs(cfg))
    run.results["icc"] = _icc_json(icc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        v = predict(icc, f, p=cfg.option("p"), p_max=cfg.option("p_max", DEFAULT_P_MAX),
                    window=cfg.option("window", WINDOW),
                    max_step_deg=cfg.option("max_step_deg", MAX_STEP_DEG))
    run.results["warnings"] = [str(w.message) for w in caught]
    run.results["verdict"] = verdict_json(v)
    return icc, v


def cmd_ribbon(run):
    icc, v = _classify(run)
    r = v.ribbon
    run.csv("ribbon.csv", ["x", "y", "z", "eigenvalue", "dx", "dy", "dz", "sign"],
            ([*p, lam, *d, int(s)] for p, lam, d, s in
             zip(r.base_points, r.eigenvalues, r.directions, v.aligned_signs)))
    run.text("plot_ribbon.py", ribbon_script("ribbon.csv", f"{run.cfg.map} doubling ribbon"))


def cmd_classify(run):
    icc, _ = _classify(run)
    _write_icc(run, icc, f"{run.cfg.map} curve")


def cmd_scan2d(run):
    cfg = run.cfg
    o = cfg.options
    xs = np.linspace(o["x_min"], o["x_max"], o["x_n"])
    ys = np.linspace(o["y_min"], o["y_max"], o["y_n"])
    grid = scan2d(cfg.bound_map(), o["x_param"], xs, o["y_param"], ys,
                  k_max=o.get("k_max", 32), transient=o.get("transient", 10_000),
                  tol=o.get("tol", 1e-6), seed=o.get("seed", (0.1, 0.05, 0.01)),
                  workers=o.get("workers"))
    codes, counts = np.unique(grid.codes, return_counts=True)
    run.results["counts"] = {str(int(c)): int(n) for c, n in zip(codes, counts)}
    run.results["digest"] = grid.digest()
    run.csv("grid.csv", [o["x_param"], o["y_param"], "cls", "k"], grid.rows())
    run.text("plot_scan.py", scan_script("grid.csv", o["x_param"], o["y_param"],
                                         f"{cfg.map} parameter plane"))


def _path(cfg):
    return ParamPath(dict(cfg.path_start), dict(cfg.path_end), cfg.option("samples", 101))


def cmd_bifdiag(run):
    cfg = run.cfg
    path = _path(cfg)
    d = bifdiag(cfg.bound_map(), path, n_keep=cfg.option("n_keep", 50),
                transient=cfg.option("transient", 10_000),
                seed=cfg.option("seed", (0.1, 0.05, 0.01)))
    run.csv("bifdiag.csv", ["t", *path.names, "x", "y", "z"], d.rows())
    run.results["steps"] = len(d.params)
    run.results["empty_steps"] = [i for i, s in enumerate(d.samples) if len(s) == 0]
    run.results["cold_starts"] = list(d.cold_starts)
    run.text("plot_bifdiag.py", bifdiag_script("bifdiag.csv", "x", f"{cfg.map} along path"))


def cmd_verify(run):
    cfg = run.cfg
    f = cfg.bound_map()
    icc = build_icc(f, cfg.option("kind"), **_icc_kwargs(cfg))
    run.results["icc_before"] = _icc_json(icc)
    out = verify(f, cfg.after, icc, p=cfg.option("p"))
    run.results["after"] = cfg.after
    run.results["outcome"] = out.outcome.value
    run.results["components"] = out.components
    run.results["gap"] = out.gap
    run.results["reason"] = out.reason
    if isinstance(out.attractor, Cycle):
        run.results["attractor"] = cycle_json(out.attractor)
    run.csv("post_samples.csv", ["x", "y", "z", "component"],
            ([*p, int(l)] for p, l in zip(out.samples, out.labels)))


def _flip_json(fl):
    return {"t": fl.t, "params": fl.params, "bracket": list(fl.bracket),
            "multipliers": list(fl.multipliers)}


def cmd_locate_flip(run):
    cfg = run.cfg
    path = _path(cfg)
    f = cfg.bound_map().with_params(**path.start)
    node = attractor_cycle(f, p_max=cfg.option("k_max", 64),
                           seed=cfg.option("seed", (0.1, 0.05, 0.01)))
    if isinstance(node, Aperiodic):
        raise NumericalError("no attracting cycle at the start of the path")
    run.results["node"] = cycle_json(node)
    rtol = cfg.option("rtol", 1e-8)
    try:
        saddle = find_saddle_on_icc(f, node)
    except IccError as exc:
        run.results["saddle_error"] = str(exc)
        run.results["node_flip"] = _flip_json(locate_flip(f, path, node, rtol=rtol))
        return
    run.results["saddle"] = cycle_json(saddle)
    rep = check_a4(f, path, node, saddle)
    run.results["node_flip"] = _flip_json(rep.node_flip)
    run.results["saddle_flip"] = _flip_json(rep.saddle_flip)
    run.results["first"] = rep.first
    run.results["a4"] = {"ok": rep.ok, "other_crossings": list(rep.other_crossings),
                         "separation_t": rep.separation}


HANDLERS = {
    "cycle": cmd_cycle,
    "icc-resonant": cmd_icc_resonant,
    "icc-quasi": cmd_icc_quasi,
    "ribbon": cmd_ribbon,
    "classify": cmd_classify,
    "scan2d": cmd_scan2d,
    "bifdiag": cmd_bifdiag,
    "verify-doubling": cmd_verify,
    "locate-flip": cmd_locate_flip,
}


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the process exit status."""
    r = Run(cfg)
    r.text("config.ini", emit_config(cfg))
    try:
        HANDLERS[cfg.command](r)
    except IccError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        r.summary("error", exc)
        return exc.exit_code
    r.summary()
    return 0


# --- argument parsing ------------------------------------------------------------


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


COMMAND_HELP = {
    "cycle": "attracting cycle (and optionally its saddle) with multipliers",
    "icc-resonant": "resonant invariant curve from saddle unstable manifolds",
    "icc-quasi": "quasiperiodic invariant curve, rotation number and rational approximation",
    "ribbon": "doubling eigenvector field along the curve, with its topology",
    "classify": "cylinder/Moebius verdict and the predicted doubling type",
    "scan2d": "period classification over a two-parameter grid",
    "bifdiag": "attractor samples along a straight parameter path",
    "verify-doubling": "check the doubled curve past the bifurcation",
    "locate-flip": "flip parameters of the node and saddle cycles along a path",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iccdoubling",
        description="Invariant closed curves of 3D maps and the type of their doubling.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the command described by a configuration file")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", help="override the output directory")

    sub.add_parser("maps", help="list the built-in maps")

    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMAND_HELP[name])
        p.add_argument("--map", required=True, choices=sorted(REGISTRY))
        p.add_argument("-P", "--param", action="append", type=_kv, default=[],
                       metavar="NAME=VALUE", help="map parameter (repeat for each)")
        p.add_argument("-O", "--option", action="append", type=_kv, default=[],
                       metavar="KEY=VALUE", help="command option (repeat)")
        p.add_argument("--start", action="append", type=_kv, default=[], metavar="NAME=VALUE",
                       help="path start value")
        p.add_argument("--end", action="append", type=_kv, default=[], metavar="NAME=VALUE",
                       help="path end value")
        p.add_argument("--after", action="append", type=_kv, default=[], metavar="NAME=VALUE",
                       help="post-doubling parameter value")
        p.add_argument("-o", "--output", default="out")
    return parser


def config_from_args(args) -> RunConfig:
    lines = ["[run]", f"command = {args.command}", f"map = {args.map}",
             f"output = {args.output}"]
    for section, pairs in (("params", args.param), ("options", args.option),
                           ("path.start", args.start), ("path.end", args.end),
                           ("after", args.after)):
        if pairs:
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in pairs)
    return parse_config("\n".join(lines) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "maps":
            for name, m in REGISTRY.items():
                print(f"{name}: {', '.join(m.param_names)}")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            if args.output:
                cfg.output = args.output
        else:
            cfg = config_from_args(args)
    except IccError as exc:
        print(f"iccdoubling: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"iccdoubling: {exc}", file=sys.stderr)
        return 1
    status = run(cfg)
    summary = Path(cfg.output) / SUMMARY
    if status:
        print(f"iccdoubling: failed, see {summary}", file=sys.stderr)
    else:
        print(summary)
    return status


if __name__ == "__main__":
    sys.exit(main())
