"""Run matrices, trace/summary files, trace verification and aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..driver import ALGORITHMS, CONVERGED, SG
from ..oracle import DenseCapError
from ..verify import check_stationarity, stationarity_flags
from .experiment import Experiment, ProblemSpec

log = logging.getLogger(__name__)

TRACE_SCHEMA = "sncg-trace"
TRACE_VERSION = 1
SUMMARY_VERSION = 1
SUMMARY_FIELDS = [
    "schema_version", "problem", "algorithm", "seed", "status", "iters", "sg_steps",
    "ncgs_steps", "ifo_total", "iso_total", "grad_norm", "lambda_min", "pass_first_order",
    "pass_second_order", "domain_exits", "wall_time",
]
# fields excluded from reproducibility comparisons
TIMING_FIELDS = {"wall_time"}
ERROR_STATUS = "Error"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text)


@dataclass
class RunOutcome:
    problem: str
    algorithm: str
    seed: int
    lines: list
    row: dict
    error: str | None = None


def execute_run(exp: Experiment, spec: ProblemSpec, algorithm: str, seed: int) -> RunOutcome:
    """One (problem, algorithm, seed) cell; never raises."""
    start = time.perf_counter()
    row = {"schema_version": SUMMARY_VERSION, "problem": spec.id, "algorithm": algorithm,
           "seed": seed}
    try:
        problem = spec.build()
        config = exp.sncg_config(problem.constants)
        header = {
            "record": "header", "schema": TRACE_SCHEMA, "version": TRACE_VERSION,
            "experiment": exp.name, "problem": spec.to_dict(), "problem_info": problem.describe(),
            "algorithm": algorithm, "seed": seed, "config": config.to_dict(),
            "caps": {"sncg1": config.sncg1_cap, "sg": config.sg_cap, "ncgs": config.ncgs_cap},
            "x0": problem.x0.tolist(),
        }
        result = ALGORITHMS[algorithm](problem, problem.x0, config, seed)
        report = None
        try:
            report = check_stationarity(problem, result.x_final, config.eps1, config.eps2)
        except DenseCapError:
            pass
        footer = {
            "record": "result", "status": result.status, "message": result.message,
            "iters": result.iters, "sg_steps": result.sg_steps, "ncgs_steps": result.ncgs_steps,
            "ifo_total": result.ifo_total, "iso_total": result.iso_total,
            "domain_exits": result.domain_exits, "x_final": result.x_final.tolist(),
            "stationarity": None if report is None else report.to_dict(),
            "wall_time": time.perf_counter() - start,
        }
        lines = [_dumps(header)]
        lines += [_dumps({"record": "iter", **r.to_dict()}) for r in result.trace]
        lines.append(_dumps(footer))
        row.update(status=result.status, iters=result.iters, sg_steps=result.sg_steps,
                   ncgs_steps=result.ncgs_steps, ifo_total=result.ifo_total,
                   iso_total=result.iso_total,
                   grad_norm="" if report is None else repr(report.grad_norm),
                   lambda_min="" if report is None else repr(report.lambda_min),
                   pass_first_order="" if report is None else report.pass_first_order,
                   pass_second_order="" if report is None else report.pass_second_order,
                   domain_exits=result.domain_exits,
                   wall_time=f"{time.perf_counter() - start:.6f}")
        return RunOutcome(spec.id, algorithm, seed, lines, row)
    except Exception as exc:  # one failing run must not abort the matrix
        log.exception("run %s/%s/seed%d failed", spec.id, algorithm, seed)
        row.update({k: "" for k in SUMMARY_FIELDS if k not in row})
        row.update(status=ERROR_STATUS, wall_time=f"{time.perf_counter() - start:.6f}")
        return RunOutcome(spec.id, algorithm, seed, [], row, error=f"{type(exc).__name__}: {exc}")


def trace_name(problem: str, algorithm: str, seed: int) -> str:
    return f"{_slug(problem)}__{algorithm}__seed{seed}.jsonl"


def run_experiment(exp: Experiment) -> tuple[Path, list[RunOutcome]]:
    """Execute the full matrix and write traces, ``summary.csv`` and the resolved config.

    Runs may execute on a thread pool; all files are written here, in matrix
    order, after the runs complete.
    """
    out = exp.output_dir / _slug(exp.name)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    cells = [(spec, alg, seed) for spec in exp.problems for alg in exp.algorithms
             for seed in exp.seeds]
    if exp.workers > 1:
        with ThreadPoolExecutor(max_workers=exp.workers) as pool:
            outcomes = list(pool.map(lambda c: execute_run(exp, *c), cells))
    else:
        outcomes = [execute_run(exp, *c) for c in cells]

    (out / "resolved_config.yaml").write_text(yaml.safe_dump(exp.resolved, sort_keys=True))
    for o in outcomes:
        if o.lines:
            (traces / trace_name(o.problem, o.algorithm, o.seed)).write_text("\n".join(o.lines) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for o in outcomes:
            writer.writerow(o.row)
    return out, outcomes


# ------------------------------------------------------------------ verify

class TraceError(Exception):
    pass


def read_trace(path) -> tuple[dict, list, dict]:
    records = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    if len(records) < 2 or records[0].get("record") != "header" or records[-1].get("record") != "result":
        raise TraceError(f"{path}: trace must start with a header and end with a result record")
    header, footer = records[0], records[-1]
    if header.get("schema") != TRACE_SCHEMA or header.get("version") != TRACE_VERSION:
        raise TraceError(f"{path}: unsupported trace schema {header.get('schema')!r} "
                         f"v{header.get('version')!r}")
    iters = records[1:-1]
    if any(r.get("record") != "iter" for r in iters):
        raise TraceError(f"{path}: unexpected record between header and result")
    return header, iters, footer


def verify_trace(path, recompute: bool = True) -> list[str]:
    """Re-check counter reconciliation, algorithm invariants and stationarity flags.

    Returns a list of problems found (empty when the trace is consistent).
    """
    try:
        header, iters, footer = read_trace(path)
    except (TraceError, json.JSONDecodeError, OSError) as exc:
        return [str(exc)]
    errors = []

    def check(cond, message):
        if not cond:
            errors.append(f"{path}: {message}")

    cfg = header["config"]
    eps1, eps2, alpha = cfg["eps1"], cfg["eps2"], cfg["alpha"]
    algorithm = header["algorithm"]
    ifo = iso = 0
    for k, r in enumerate(iters, start=1):
        check(r["iter"] == k, f"record {k} has iter {r['iter']}")
        check(r["ifo"] == ifo + r["ifo_step"], f"iter {k}: cumulative IFO does not add up")
        check(r["iso"] == iso + r["iso_step"], f"iter {k}: cumulative ISO does not add up")
        ifo, iso = r["ifo"], r["iso"]
        check(r["ifo_step"] == r["grad_batch"], f"iter {k}: IFO step != gradient batch size")
        if r["branch"] == SG:
            check(r["iso_step"] == 0, f"iter {k}: SG iteration consumed ISO")
        else:
            check(r["iso_step"] == r["hess_batch"] * r["applications"],
                  f"iter {k}: ISO step != |S2| x operator applications")
        if algorithm == "sncg2" and r["grad_norm"] >= eps1:
            check(r["iso_step"] == 0 and r["branch"] == SG,
                  f"iter {k}: |g| >= eps1 but NCG-S work was done")
        if algorithm == "sncg1":
            expected = max(eps2, r["grad_norm"] ** alpha) / 2
            check(math.isclose(r["eps_nc"], expected, rel_tol=1e-12),
                  f"iter {k}: solver tolerance {r['eps_nc']} != {expected}")
    check(footer["iters"] == len(iters), "iteration count mismatch")
    check(footer["ifo_total"] == ifo, f"ifo_total {footer['ifo_total']} != last record {ifo}")
    check(footer["iso_total"] == iso, f"iso_total {footer['iso_total']} != last record {iso}")
    check(footer["sg_steps"] + footer["ncgs_steps"] == footer["iters"], "sg + ncgs != iters")
    check(footer["sg_steps"] == sum(r["branch"] == SG for r in iters), "sg_steps != SG records")
    check(footer["domain_exits"] == sum(not r["in_domain"] for r in iters), "domain_exits mismatch")

    if footer["status"] == CONVERGED and iters:
        last = iters[-1]
        if algorithm == "sgd":
            check(last["grad_norm"] <= eps1, "converged without |g| <= eps1")
        else:
            check(last["rayleigh"] > -eps2 / 2, "converged without curvature above -eps2/2")
            if algorithm == "sncg1":
                check(last["grad_norm"] <= eps1, "converged without |g| <= eps1")

    st = footer.get("stationarity")
    if st is not None:
        first, second = stationarity_flags(st["grad_norm"], st["lambda_min"], eps1, eps2)
        check(first == st["pass_first_order"] and second == st["pass_second_order"],
              "stationarity flags disagree with recorded values")
        if recompute:
            try:
                problem = ProblemSpec(**header["problem"]).build()
                rep = check_stationarity(problem, np.asarray(footer["x_final"]), eps1, eps2)
                check(math.isclose(rep.grad_norm, st["grad_norm"], rel_tol=1e-9, abs_tol=1e-12)
                      and math.isclose(rep.lambda_min, st["lambda_min"], rel_tol=1e-9,
                                       abs_tol=1e-12),
                      "exact re-evaluation at x_final disagrees with recorded stationarity")
            except Exception as exc:
                errors.append(f"{path}: cannot rebuild problem for re-check: {exc}")
    return errors


def verify_summary(summary_path, trace_dir) -> list[str]:
    """Reconcile every summary row with the footer of its trace."""
    errors = []
    with open(summary_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        if row["status"] == ERROR_STATUS:
            continue
        trace = Path(trace_dir) / trace_name(row["problem"], row["algorithm"], int(row["seed"]))
        if not trace.exists():
            errors.append(f"{summary_path}: missing trace {trace.name}")
            continue
        _, iters, footer = read_trace(trace)
        for key in ("iters", "sg_steps", "ncgs_steps", "ifo_total", "iso_total"):
            if int(row[key]) != footer[key]:
                errors.append(f"{summary_path}: {trace.name}: {key} {row[key]} != {footer[key]}")
        if row["status"] != footer["status"]:
            errors.append(f"{summary_path}: {trace.name}: status mismatch")
        last_ifo = iters[-1]["ifo"] if iters else 0
        if int(row["ifo_total"]) != last_ifo:
            errors.append(f"{summary_path}: {trace.name}: ifo_total != last cumulative IFO")
    return errors


def verify_paths(paths, recompute: bool = True) -> list[str]:
    """Verify trace files, or experiment directories (traces plus summary)."""
    errors = []
    for p in map(Path, paths):
        if p.is_dir():
            traces = sorted((p / "traces").glob("*.jsonl"))
            if not traces:
                errors.append(f"{p}: no traces found")
            for t in traces:
                errors += verify_trace(t, recompute)
            if (p / "summary.csv").exists():
                errors += verify_summary(p / "summary.csv", p / "traces")
        elif p.exists():
            errors += verify_trace(p, recompute)
        else:
            errors.append(f"{p}: no such file")
    return errors


# ------------------------------------------------------------------ summarize

AGG_FIELDS = ["problem", "algorithm", "subset", "runs", "converged_fraction"]
_STATS = ("iters", "ifo_total", "iso_total")


def _quantiles(values):
    if not values:
        return ["", "", ""]
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return [repr(float(v)) for v in (q[1], q[0], q[2])]


def summarize(csv_paths) -> list[dict]:
    """Median and quartiles of oracle counts per (problem, algorithm) cell.

    Emits an ``all`` row and a ``converged`` row per cell; errored runs are
    dropped from both.
    """
    rows = []
    for path in csv_paths:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"{path}: no such file")
        with open(path, newline="") as fh:
            rows += [r for r in csv.DictReader(fh) if r["status"] != ERROR_STATUS]
    cells: dict[tuple, list] = {}
    for r in rows:
        cells.setdefault((r["problem"], r["algorithm"]), []).append(r)
    out = []
    for (problem, algorithm), group in sorted(cells.items()):
        converged = [r for r in group if r["status"] == CONVERGED]
        for subset, members in (("all", group), ("converged", converged)):
            agg = {"problem": problem, "algorithm": algorithm, "subset": subset,
                   "runs": len(members),
                   "converged_fraction": repr(len(converged) / len(group))}
            for stat in _STATS:
                med, lo, hi = _quantiles([float(m[stat]) for m in members])
                agg.update({f"{stat}_median": med, f"{stat}_q25": lo, f"{stat}_q75": hi})
            out.append(agg)
    return out


def summary_fieldnames() -> list[str]:
    names = list(AGG_FIELDS)
    for stat in _STATS:
        names += [f"{stat}_median", f"{stat}_q25", f"{stat}_q75"]
    return names


def format_summary(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=summary_fieldnames(), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
