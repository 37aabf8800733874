"""Command-line experiment driver.

    obslab <command> --seed N [--config cfg.json] [--out DIR] [--quiet]

Each run writes ``<command>.json`` (the full report) and ``<command>.csv``
(plot data) into the output directory.  Exit codes: 0 all checks pass,
1 some check failed (the failure list goes to stderr as JSON), 2 invalid
configuration, 3 numerical guard violation (including a control target
that the discretized system cannot reach).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import COMMANDS, CONFIG_VERSION, DEFAULTS, ConfigError, load, validate
from .duality import ControlSystem, check_duality, random_system
from .errors import InfeasibleError, NumericalGuardError
from .estimates import (ObsParams, _jsonable, concentrated_functions, estimate_cobs,
                        extremal_diss_functions, fit_cobs_scaling, cobs_form,
                        generate_test_functions, lemma_l1, measure_diss, measure_lemma_l1,
                        measure_up)
from .grid import GridSpec, SampledField, ThickSetSpec, gaussian_kernel, l1_norm, make_mask
from .semigroups import PropagatorConfig, SemigroupKind, ou_safe_region, ou_step

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3


class Checks:
    """Named assertions; each carries its value, tolerance and pass flag."""

    def __init__(self):
        self.items = []

    def add(self, name, value, tol, passed, comparator):
        self.items.append({"name": name, "value": value, "tol": tol,
                           "comparator": comparator, "passed": bool(passed)})

    def upper(self, name, value, tol):
        self.add(name, value, tol, value <= tol, "<=")

    def lower(self, name, value, tol):
        self.add(name, value, tol, value >= tol, ">=")

    def near(self, name, value, target, tol):
        err = abs(value - target)
        self.items.append({"name": name, "value": value, "target": target, "error": err,
                           "tol": tol, "comparator": "|value-target|<=", "passed": bool(err <= tol)})

    def failures(self):
        return [c["name"] for c in self.items if not c["passed"]]


def _grid(cfg) -> GridSpec:
    return GridSpec(cfg["d"], float(cfg["half_width"]), cfg["n_per_axis"])


def _mask(block, g):
    spec = ThickSetSpec.periodic_slab(block["period"], block["filled"], d=g.d,
                                      windows=(block.get("windows", block["period"]),) * g.d,
                                      density=block.get("density"))
    return spec, make_mask(spec, g)


def _corpus(block, seed, g):
    return generate_test_functions(block["kind"], block["count"], seed, g,
                                   lam_max=block.get("lam_max"),
                                   width_range=block.get("width_range"),
                                   center_range=block.get("center_range"))


def _r(value):
    return math.inf if value == "inf" else float(value)


# --------------------------------------------------------------------------
# commands: each returns (results, checks, csv header, csv rows)

def cmd_verify_kernels(cfg, seed):
    g = _grid(cfg["grid"])
    checks = Checks()
    rows = []
    for t in cfg["times"]:
        v = l1_norm(gaussian_kernel(g, t))
        checks.near(f"l1(k_t) t={t}", v, 1.0, cfg["tol"])
        rows.append(["gw_l1", t, v, cfg["tol"], abs(v - 1) <= cfg["tol"]])
    one = SampledField(g, np.ones(g.shape))
    for t in cfg["ou_times"]:
        safe = ou_safe_region(g, t)
        err = float(np.max(np.abs(ou_step(one, t, require_decay=False).values[safe] - 1.0)))
        checks.upper(f"mehler constancy t={t}", err, cfg["ou_tol"])
        rows.append(["ou_constancy_error", t, err, cfg["ou_tol"], err <= cfg["ou_tol"]])
    return {}, checks, ["quantity", "t", "value", "tol", "passed"], rows


def cmd_verify_up(cfg, seed):
    g = _grid(cfg["grid"])
    spec, mask = _mask(cfg["thick_set"], g)
    fns = _corpus(cfg["corpus"], seed, g)
    for lam in cfg["lambdas"]:
        fns += concentrated_functions(mask, lam, cfg["concentrated_per_lambda"])
    rep = measure_up(mask, cfg["lambdas"], fns, thick_set=spec)
    checks = Checks()
    checks.lower("up r2", rep.r2, cfg["min_r2"])
    results = {"thick_set": rep.to_dict()}
    rows = [["thick", c["lambda"], c["ratio"], c["log_ratio"], c["fit"]] for c in rep.cells]
    if cfg["full_mask_control"]:
        full = make_mask(ThickSetSpec((1.0,) * g.d, 1.0), g)
        ctrl = measure_up(full, cfg["lambdas"], fns)
        checks.upper("full-mask |d1|", abs(ctrl.fitted["d1"]), cfg["control_tol"])
        results["full_mask"] = ctrl.to_dict()
        rows += [["full", c["lambda"], c["ratio"], c["log_ratio"], c["fit"]] for c in ctrl.cells]
    return results, checks, ["mask", "lambda", "ratio", "log_ratio", "fit"], rows


def cmd_verify_diss(cfg, seed):
    g = _grid(cfg["grid"])
    pc = PropagatorConfig(SemigroupKind(cfg["semigroup"]), g)
    fns = _corpus(cfg["corpus"], seed, g)
    if cfg["extremal"] and pc.kind is SemigroupKind.GW:
        fns += extremal_diss_functions(g, list(cfg["lambdas"]) + list(cfg["holdout_lambdas"]),
                                       list(cfg["times"]) + list(cfg["holdout_times"]))
    rep = measure_diss(pc, cfg["lambdas"], cfg["times"], fns, T=cfg["T"],
                       holdout_lambdas=cfg["holdout_lambdas"], holdout_times=cfg["holdout_times"],
                       inflation=cfg["inflation"])
    checks = Checks()
    checks.lower("diss r2", rep.r2, cfg["min_r2"])
    checks.add("diss slope", -rep.fitted["d3"], 0.0, rep.fitted["d3"] > 0, "<")
    checks.upper("diss holdout violations", rep.violations, 0)
    cols = ["lambda", "t", "ratio", "bound", "violated", "role"]
    rows = [[c[k] for k in cols] for c in rep.cells]
    return {"fit": rep.to_dict()}, checks, cols, rows


def cmd_verify_lemma_l1(cfg, seed):
    g = _grid(cfg["grid"])
    rep = measure_lemma_l1(cfg["lambdas"], cfg["s_values"], g, cfg["holdout_lambdas"],
                           cfg["holdout_s"], cfg["inflation"])
    checks = Checks()
    checks.upper("lemma holdout violations", rep.violations, 0)
    cols = ["lambda", "s", "value", "bound", "violated", "role"]
    rows = [[c[k] for k in cols] for c in rep.cells]
    results = {"fit": rep.to_dict()}
    if cfg["limit_check"]:
        s = cfg["limit_s"]
        lams = sorted(cfg["limit_lambdas"], reverse=True)
        vals = [lemma_l1(lam, s, g) for lam in lams]
        checks.near(f"lemma small-lambda limit s={s}", vals[-1], 1.0, cfg["limit_tol"])
        results["limit"] = {"s": s, "lambdas": lams, "values": vals}
        rows += [[lam, s, v, "", "", "limit"] for lam, v in zip(lams, vals)]
    return results, checks, cols, rows


def _estimate(cfg, seed):
    g = _grid(cfg["grid"])
    pc = PropagatorConfig(SemigroupKind(cfg["semigroup"]), g)
    _, mask = _mask(cfg["thick_set"], g)
    fns = _corpus(cfg["corpus"], seed, g)
    for lam in cfg["concentrated_lambdas"]:
        fns += concentrated_functions(mask, lam)
    r = _r(cfg["r"])
    Ts = sorted(float(T) for T in cfg["T_values"])
    return Ts, [estimate_cobs(pc, mask, T, r, fns, cfg["n_steps"]) for T in Ts]


def cmd_estimate_cobs(cfg, seed):
    Ts, vals = _estimate(cfg, seed)
    checks = Checks()
    for T, v in zip(Ts, vals):
        checks.add(f"c_obs finite positive T={T}", v, 0.0, 0 < v < math.inf, "0<value<inf")
    return {"T_values": Ts, "c_obs": vals}, checks, ["T", "c_obs"], [[T, v] for T, v in zip(Ts, vals)]


def cmd_fit_cobs(cfg, seed):
    if "measured" in cfg:
        Ts, vals = cfg["measured"]["T_values"], cfg["measured"]["values"]
        if len(Ts) != len(vals):
            raise ConfigError("measured/T_values and measured/values differ in length")
    else:
        sub = dict(cfg.get("estimate", {}))
        sub.setdefault("version", CONFIG_VERSION)
        validate("estimate-cobs", sub)
        est = dict(DEFAULTS["estimate-cobs"])
        est.update({k: v for k, v in sub.items() if k != "version"})
        Ts, vals = _estimate(est, seed)
    g1, g2, g3 = cfg["gamma"]
    p = ObsParams(g1, g2, g3, T=max(Ts), r=_r(cfg["r"]))
    shape, r2 = fit_cobs_scaling(Ts, vals, p)
    checks = Checks()
    checks.lower("cobs fit r2", r2, cfg["min_r2"])
    checks.add("cobs C2", shape.C2, 0.0, shape.C2 > 0, ">")
    rows = [[T, v, cobs_form(T, shape, p)] for T, v in zip(Ts, vals)]
    results = {"T_values": list(Ts), "measured": list(vals), "r2": r2,
               "shape": {"C1": shape.C1, "C2": shape.C2, "C3": shape.C3},
               "blowup_exponent": p.blowup_exponent}
    return results, checks, ["T", "measured", "fitted"], rows


def cmd_duality_check(cfg, seed):
    systems = []
    if "system" in cfg:
        systems.append(ControlSystem.from_dict(cfg["system"]))
    if "random_systems" in cfg:
        rs = cfg["random_systems"]
        rng = np.random.default_rng(seed)
        for _ in range(rs["count"]):
            systems.append(random_system(rng, rs.get("max_n", 3), rs.get("max_m", 2),
                                         rs.get("T", 1.0), rs.get("N_t", 64)))
    checks = Checks()
    reports, rows = [], []
    for k, s in enumerate(systems):
        rep = check_duality(s, cfg["eps"], cfg["tol"], cfg["sample_count"], cfg["obs_samples"], seed)
        if not rep.observable:
            checks.add(f"system {k} observable", 0.0, 0.0, False, "observable")
        checks.upper(f"system {k} gap", rep.gap, cfg["tol"])
        if "reference" in cfg:
            ref, rt = cfg["reference"], cfg["reference_tol"]
            checks.upper(f"system {k} c_control vs reference", abs(rep.c_control - ref) / ref, rt)
            checks.upper(f"system {k} c_obs vs reference", abs(rep.c_obs - ref) / ref, rt)
        reports.append({"system": json.loads(s.to_json()), "report": rep.to_dict()})
        rows.append([k, s.n, s.m, rep.c_control, rep.c_obs, rep.gap, cfg["tol"], rep.passed])
    cols = ["system", "n", "m", "c_control", "c_obs", "gap", "tol", "passed"]
    return {"systems": reports}, checks, cols, rows


HANDLERS = {
    "verify-kernels": cmd_verify_kernels,
    "verify-up": cmd_verify_up,
    "verify-diss": cmd_verify_diss,
    "verify-lemma-l1": cmd_verify_lemma_l1,
    "estimate-cobs": cmd_estimate_cobs,
    "fit-cobs": cmd_fit_cobs,
    "duality-check": cmd_duality_check,
}


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def run(command: str, cfg: dict, seed: int) -> tuple:
    """Execute one command; returns (report dict, csv text)."""
    results, checks, cols, rows = HANDLERS[command](cfg, seed)
    failures = checks.failures()
    report = {
        "command": command,
        "version": __version__,
        "config_version": CONFIG_VERSION,
        "seed": seed,
        "config": cfg,
        "checks": checks.items,
        "failures": failures,
        "passed": not failures,
        "results": results,
    }
    return _jsonable(report), _csv_text(cols, rows)


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="obslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config (defaults used when omitted)")
        p.add_argument("--seed", type=_seed, required=True)
        p.add_argument("--out", default="obslab-out", help="output directory")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.command, args.config)
        report, csv_text = run(args.command, cfg, args.seed)
    except (ConfigError, ValueError) as exc:
        # ValueError: parameters that pass the schema but break a domain precondition
        print(json.dumps({"error": "invalid config", "detail": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalGuardError, InfeasibleError) as exc:
        print(json.dumps({"error": "numerical guard", "detail": str(exc)}), file=sys.stderr)
        return EXIT_GUARD
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, args.command)
    with open(stem + ".json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    with open(stem + ".csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text)
    if not args.quiet:
        for c in report["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']!r} "
                  f"(tol {c['tol']!r})")
        print(f"wrote {stem}.json and {stem}.csv")
    if report["failures"]:
        print(json.dumps({"failures": report["failures"]}), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
