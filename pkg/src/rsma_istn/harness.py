"""Monte Carlo sweeps over satellite altitude or BS power, CSV persistence and summaries."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .channel import realize
from .scenario import ScenarioConfig, config_from_mapping, dbm_to_watt, watt_to_dbm
from .schemes import SCHEME_LABELS, SRSMA_ISTN, get_scheme, solve_all
from .sca import ScaOptions

CSV_VERSION = "rsma-istn-results/1"
AXES = ("h_sat_km", "p_t_dbm")
DEFAULT_CSIT_LEVELS = (0.0, 0.01, 0.05)
AUDIT_TOL = 1e-5


class PlanError(ValueError):
    pass


class ReportError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    axis: str = "h_sat_km"
    values: tuple = (300.0, 500.0, 2000.0, 10000.0, 36000.0)
    csit_error_levels: tuple = (0.0,)
    schemes: tuple = SCHEME_LABELS
    n_trials: int = 20
    output: str | None = None
    workers: int = 1
    cold_starts: bool = True
    stop_tol: float = 1e-4
    max_iters: int = 100
    include_wall_time: bool = False

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        self.csit_error_levels = tuple(float(v) for v in self.csit_error_levels)
        self.schemes = tuple(get_scheme(s).id for s in self.schemes)
        self.validate()

    def validate(self) -> None:
        if self.axis not in AXES:
            raise PlanError(f"axis must be one of {AXES}")
        if int(self.n_trials) < 1:
            raise PlanError("n_trials must be >= 1")
        for name in ("values", "csit_error_levels", "schemes"):
            if not getattr(self, name):
                raise PlanError(f"{name} must not be empty")
        for name in ("values", "csit_error_levels"):
            seq = list(getattr(self, name))
            if seq != sorted(seq):
                raise PlanError(f"{name} must be sorted")
        if min(self.csit_error_levels) < 0:
            raise PlanError("csit error levels must be >= 0")

    def cell_config(self, value: float, sigma_e2: float) -> ScenarioConfig:
        if self.axis == "h_sat_km":
            return self.base.replace(sat_altitude_m=value * 1e3, csit_error_var=sigma_e2)
        return self.base.replace(p_bs_watt=float(dbm_to_watt(value)), csit_error_var=sigma_e2)

    def sca_options(self) -> ScaOptions:
        return ScaOptions(stop_tol=self.stop_tol, max_iters=self.max_iters)


_PLAN_KEYS = {"axis", "values", "csit_error_levels", "schemes", "n_trials", "output", "workers",
              "cold_starts", "stop_tol", "max_iters", "include_wall_time"}


def plan_from_mapping(data: Mapping[str, Any], base: ScenarioConfig | None = None) -> ExperimentPlan:
    """Plan from a mapping with an optional ``scenario`` section and a ``sweep`` section.

    ``sweep: {axis: h_sat_km, values: [...]}`` may also be given as top-level
    ``axis`` / ``values`` keys.
    """
    data = dict(data or {})
    cfg = config_from_mapping(data.pop("scenario", None) or {}, base)
    sweep = data.pop("sweep", None) or {}
    data.update(sweep)
    unknown = set(data) - _PLAN_KEYS
    if unknown:
        raise PlanError(f"unknown plan keys: {sorted(unknown)}")
    try:
        return ExperimentPlan(base=cfg, **data)
    except TypeError as exc:
        raise PlanError(str(exc)) from exc


def load_plan(path, overrides: Mapping[str, Any] | None = None) -> ExperimentPlan:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if overrides:
        data = dict(data)
        data.setdefault("scenario", {})
        data["scenario"] = {**(data["scenario"] or {}), **overrides}
    return plan_from_mapping(data)


@dataclass
class ResultRow:
    kind: str  # "detail" or "mean"
    scheme: str
    h_sat_km: float
    p_t_dbm: float
    csit_error_var: float
    trial: int | None
    mmf: float
    q_final: float
    iterations: float
    wall_time: float
    audit_violation_max: float
    beta: float | None
    spc_power_fraction: float
    status: str
    clean: bool


FIELDS = [f for f in ResultRow.__dataclass_fields__]


def _solve_cell(args):
    plan, value, sigma_e2, trial = args
    cfg = plan.cell_config(value, sigma_e2)
    ch = realize(cfg, trial)
    rows = []
    t0 = time.perf_counter()
    results = solve_all(ch, cfg, plan.schemes, plan.sca_options(), plan.cold_starts)
    elapsed = time.perf_counter() - t0
    for label in plan.schemes:
        r = results[label]
        rows.append(ResultRow("detail", label, cfg.sat_altitude_m / 1e3, float(watt_to_dbm(cfg.p_bs_watt)),
                              sigma_e2, trial, r.mmf, r.q_final, r.iterations, elapsed / len(plan.schemes),
                              r.audit_violation, r.beta, r.spc_power_fraction, r.status, r.clean))
    return rows


def _mean_row(rows: list[ResultRow]) -> ResultRow:
    first = rows[0]

    def mean(name):
        vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    return ResultRow("mean", first.scheme, first.h_sat_km, first.p_t_dbm, first.csit_error_var, None,
                     mean("mmf"), mean("q_final"), mean("iterations"), mean("wall_time"),
                     float(max(r.audit_violation_max for r in rows)), mean("beta"),
                     mean("spc_power_fraction"), "aggregate", all(r.clean for r in rows))


def run_plan(plan: ExperimentPlan, progress=None) -> list[ResultRow]:
    """Detail rows for every (point, error level, trial, scheme) plus per-cell means.

    Every scheme in a cell shares one channel realization, and the
    realization of trial ``t`` depends only on ``(seed, t)``.  Rows are
    ordered by (point, error level, trial, scheme) whatever the worker count.
    """
    jobs = [(plan, v, s, t) for v in plan.values for s in plan.csit_error_levels for t in range(plan.n_trials)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            chunks = list(pool.map(_solve_cell, jobs))
    else:
        chunks = []
        for i, job in enumerate(jobs):
            chunks.append(_solve_cell(job))
            if progress:
                progress(i + 1, len(jobs))
    rows: list[ResultRow] = []
    per_cell = plan.n_trials
    for c in range(0, len(chunks), per_cell):
        cell = [row for chunk in chunks[c:c + per_cell] for row in chunk]
        rows.extend(cell)
        for label in plan.schemes:
            rows.append(_mean_row([r for r in cell if r.scheme == label]))
    if plan.output:
        write_csv(rows, plan.output, plan.axis, plan.include_wall_time)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv_text(rows: list[ResultRow], axis: str = "h_sat_km", include_wall_time: bool = False) -> str:
    fields = [f for f in FIELDS if include_wall_time or f != "wall_time"]
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} axis={axis}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[f]) for f in fields])
    return buf.getvalue()


def write_csv(rows: list[ResultRow], path, axis: str = "h_sat_km", include_wall_time: bool = False) -> None:
    Path(path).write_text(to_csv_text(rows, axis, include_wall_time))


_NUMERIC = {"h_sat_km", "p_t_dbm", "csit_error_var", "mmf", "q_final", "iterations", "wall_time",
            "audit_violation_max", "beta", "spc_power_fraction"}


def read_csv(path) -> tuple[dict, list[dict]]:
    """Parse a results file.  Returns ``(header_meta, rows)``; errors name the line."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        return {}, []
    meta: dict = {}
    start = 0
    if lines[0].startswith("#"):
        parts = lines[0][1:].split()
        if not parts or not parts[0].startswith("rsma-istn-results/"):
            raise ReportError("line 1: unrecognized header")
        meta["version"] = parts[0]
        for p in parts[1:]:
            k, _, v = p.partition("=")
            meta[k] = v
        start = 1
    if len(lines) <= start:
        return meta, []
    reader = csv.reader(lines[start:])
    header = next(reader)
    missing = {"kind", "scheme", "mmf", "h_sat_km", "p_t_dbm", "csit_error_var"} - set(header)
    if missing:
        raise ReportError(f"line {start + 1}: missing columns {sorted(missing)}")
    rows = []
    for offset, values in enumerate(reader):
        lineno = start + 2 + offset
        if not values:
            continue
        if len(values) != len(header):
            raise ReportError(f"line {lineno}: expected {len(header)} fields, got {len(values)}")
        row = dict(zip(header, values))
        for k in _NUMERIC & set(row):
            if row[k] == "":
                row[k] = None
                continue
            try:
                row[k] = float(row[k])
            except ValueError:
                raise ReportError(f"line {lineno}: column {k!r} is not a number: {row[k]!r}") from None
        rows.append(row)
    return meta, rows


def _infer_axis(meta, rows) -> str:
    if meta.get("axis") in AXES:
        return meta["axis"]
    h = {r["h_sat_km"] for r in rows}
    return "h_sat_km" if len(h) > 1 else "p_t_dbm"


def summarize(rows: list[dict], axis: str) -> tuple[list[dict], list[dict]]:
    """Per-figure summary (x, scheme, error level, mean, population std, n) and the
    mean super-common power fraction of sRSMA-ISTN per x value."""
    detail = [r for r in rows if r["kind"] == "detail"]
    groups: dict = {}
    for r in detail:
        groups.setdefault((r[axis], r["scheme"], r["csit_error_var"]), []).append(r)
    order = {s: i for i, s in enumerate(SCHEME_LABELS)}
    summary = []
    for (x, scheme, s2), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][2], order.get(kv[0][1], 99))):
        v = np.array([r["mmf"] for r in rs], dtype=float)
        summary.append({axis: x, "scheme": scheme, "csit_error_var": s2, "mean_mmf": float(v.mean()),
                        "std_mmf": float(v.std()), "n": len(v)})
    frac: dict = {}
    for r in detail:
        if r["scheme"] == SRSMA_ISTN and r.get("spc_power_fraction") is not None:
            frac.setdefault((r[axis], r["csit_error_var"]), []).append(r["spc_power_fraction"])
    spc = [{axis: x, "csit_error_var": s2, "mean_spc_power_fraction": float(np.mean(v)), "n": len(v)}
           for (x, s2), v in sorted(frac.items())]
    return summary, spc


def report(csv_path, out_dir=None) -> dict:
    """Write plot-ready summary files next to (or into ``out_dir`` for) ``csv_path``."""
    meta, rows = read_csv(csv_path)
    axis = _infer_axis(meta, rows) if rows else meta.get("axis", "h_sat_km")
    summary, spc = summarize(rows, axis)
    out_dir = Path(out_dir) if out_dir else Path(csv_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(csv_path).stem
    paths = {"summary": out_dir / f"{stem}_summary.csv", "spc_fraction": out_dir / f"{stem}_spc_fraction.csv"}
    for key, table, fields in (("summary", summary, [axis, "scheme", "csit_error_var", "mean_mmf", "std_mmf", "n"]),
                               ("spc_fraction", spc, [axis, "csit_error_var", "mean_spc_power_fraction", "n"])):
        with open(paths[key], "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in table:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return {"axis": axis, "summary": summary, "spc_fraction": spc, "paths": paths}


def any_unclean(rows) -> bool:
    return any(not (r.clean if isinstance(r, ResultRow) else r.get("clean") in ("1", True)) for r in rows)


def fig2_plan(**kw) -> ExperimentPlan:
    return ExperimentPlan(axis="h_sat_km", values=(300.0, 500.0, 2000.0, 10000.0, 36000.0), **kw)


def fig3_plan(**kw) -> ExperimentPlan:
    base = kw.pop("base", ScenarioConfig()).replace(sat_altitude_m=500e3)
    kw.setdefault("csit_error_levels", DEFAULT_CSIT_LEVELS)
    return ExperimentPlan(base=base, axis="p_t_dbm", values=(20.0, 30.0, 40.0, 50.0), **kw)


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
