"""Command line entry points: ``solve``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .channel import realize
from .scenario import ConfigError, ScenarioConfig, config_from_mapping, load_config
from .schemes import SCHEME_LABELS, get_scheme, solve_all
from .sca import ScaOptions


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out


def _scenario(args) -> ScenarioConfig:
    overrides = _parse_set(args.set)
    for flag, key in (("altitude_km", "sat_altitude_km"), ("pt_dbm", "p_bs_dbm"),
                      ("csit_error", "csit_error_var"), ("seed", "rng_seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.config:
        return load_config(args.config, overrides)
    return config_from_mapping(overrides)


def _cmd_solve(args) -> int:
    cfg = _scenario(args)
    label = get_scheme(args.scheme).id
    ch = realize(cfg, args.trial)
    opts = ScaOptions(stop_tol=args.tol, max_iters=args.max_iters, trace_path=args.trace)
    # ISTN schemes go through the warm-start chain, so solve the chain prefix too
    res = solve_all(ch, cfg, [label], opts)[label]
    out = {
        "scheme": res.scheme,
        "mmf": res.mmf,
        "q_final": res.q_final,
        "iterations": res.iterations,
        "status": res.status,
        "audit_violation": res.audit_violation,
        "beta": res.beta,
        "spc_power_fraction": res.spc_power_fraction,
    }
    for name, part in res.parts.items():
        rep = part.report
        out[name] = {
            "common_rates": {"spc": rep.r_spc, "sc": rep.r_sc, "c": rep.r_c},
            "beam_totals": np.round(rep.beam_totals, 6).tolist(),
            "cu_totals": np.round(rep.cu_totals, 6).tolist(),
            "private_su": np.round(rep.private_su, 6).tolist(),
            "private_cu": np.round(rep.private_cu, 6).tolist(),
        }
    print(json.dumps(out, indent=2, default=float))
    return 0 if res.clean else 1


def _cmd_sweep(args) -> int:
    plan = harness.load_plan(args.plan, _parse_set(args.set))
    changes = {}
    if args.trials is not None:
        changes["n_trials"] = args.trials
    if args.output is not None:
        changes["output"] = args.output
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.scheme:
        changes["schemes"] = tuple(args.scheme)
    if changes:
        plan = harness.ExperimentPlan(**{**plan.__dict__, **changes})
    if not plan.output:
        print("error: plan has no output path (use --output)", file=sys.stderr)
        return 2

    def progress(i, n):
        if args.verbose:
            print(f"[{i}/{n}]", file=sys.stderr, flush=True)

    rows = harness.run_plan(plan, progress)
    bad = [r for r in rows if r.kind == "detail" and not r.clean]
    print(f"wrote {len(rows)} rows to {plan.output}; unclean rows: {len(bad)}")
    return 1 if bad else 0


def _cmd_report(args) -> int:
    out = harness.report(args.csv, args.out_dir)
    for key, path in out["paths"].items():
        print(f"{key}: {path}")
    _, rows = harness.read_csv(args.csv)
    return 1 if harness.any_unclean(rows) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsma-istn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one scheme on one realization and print its rate report")
    s.add_argument("--config", help="scenario YAML file")
    s.add_argument("--scheme", default=SCHEME_LABELS[0], help=f"one of: {', '.join(SCHEME_LABELS)}")
    s.add_argument("--trial", type=int, default=0)
    s.add_argument("--altitude-km", dest="altitude_km", type=float)
    s.add_argument("--pt-dbm", dest="pt_dbm", type=float)
    s.add_argument("--csit-error", dest="csit_error", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iters", dest="max_iters", type=int, default=100)
    s.add_argument("--trace", help="write the SCA trace CSV here")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    s.set_defaults(func=_cmd_solve)

    w = sub.add_parser("sweep", help="run an experiment plan and write the results CSV")
    w.add_argument("plan", help="experiment plan YAML file")
    w.add_argument("--output", "-o")
    w.add_argument("--trials", type=int)
    w.add_argument("--workers", type=int)
    w.add_argument("--scheme", action="append", help="restrict to these scheme labels (repeatable)")
    w.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key")
    w.add_argument("--verbose", "-v", action="store_true")
    w.set_defaults(func=_cmd_sweep)

    r = sub.add_parser("report", help="summarize a results CSV into plot-ready tables")
    r.add_argument("csv")
    r.add_argument("--out-dir")
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, harness.PlanError, harness.ReportError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
