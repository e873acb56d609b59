"""Command line experiment runner.

``rieszgas sweep`` solves the benchmark problems for ``n = 2^k`` over a range
of ``k`` and writes CSV tables of ``e_n``, the rate estimates ``p`` and the
diagnostic residuals. ``rieszgas single`` runs one solve and prints JSON.

Exit codes: 0 on success, 1 on usage or I/O errors, 2 if any solve failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .configuration import Configuration
from .continuum import CaseId, EquilibriumCase
from .metrics import (
    ConvergenceRecord,
    SupportWarning,
    attach_rates,
    convergence_record,
    last_four_average,
    records_to_csv,
)
from .minimizer import SolverError, SolverOptions, minimize
from .potentials import potential_from_spec

__all__ = ["ExperimentConfig", "run_sweep", "run_single", "main", "build_parser"]

log = logging.getLogger("rieszgas")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    cases: list = field(default_factory=lambda: ["box", "quadratic"])
    a_values: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75])
    n_min_exp: int = 2
    n_max_exp: int = 10
    options: SolverOptions = field(default_factory=SolverOptions)
    output: str = "results"
    formats: tuple = ("csv",)
    force: bool = False
    workers: int | None = None

    def validate(self):
        if not self.cases:
            raise UsageError("at least one case is required")
        self.cases = [CaseId.parse(c).value for c in self.cases]
        if not self.a_values:
            raise UsageError("at least one value of a is required")
        vals = []
        for a in self.a_values:
            a = float(a)
            if not 0.0 <= a < 1.0:
                raise UsageError(f"a must lie in [0, 1), got {a}")
            vals.append(a)
        self.a_values = vals
        if int(self.n_min_exp) < 1 or int(self.n_max_exp) < int(self.n_min_exp):
            raise UsageError("need 1 <= n_min_exp <= n_max_exp")
        self.n_min_exp, self.n_max_exp = int(self.n_min_exp), int(self.n_max_exp)
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise UsageError(f"unknown output format(s): {', '.join(sorted(bad))}")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        opts = d.pop("options", None) or {}
        if "nexp" in d:
            d["n_min_exp"], d["n_max_exp"] = _parse_nexp(d.pop("nexp"))
        if isinstance(d.get("formats"), str):
            d["formats"] = tuple(f.strip() for f in d["formats"].split(",") if f.strip())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.options = SolverOptions(**opts)
        return cfg


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def _a_label(a: float) -> str:
    return format(a, "g")


def _parse_nexp(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
        return int(lo), int(hi)
    parts = str(text).split(":")
    if len(parts) != 2:
        raise UsageError(f"--nexp expects <min>:<max>, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"--nexp expects integers, got {text!r}") from None


def _parse_a_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--a expects a comma separated list of numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

def _solve_task(case_id: str, a: float, n: int, options: dict) -> dict:
    """Worker entry point; returns plain data so it crosses process boundaries."""
    case = EquilibriumCase(case_id, a)
    opts = SolverOptions(**options)
    converged = True
    message = ""
    try:
        report = minimize(n, case.V, case.U, opts, case=case)
    except SolverError as exc:
        report = exc.report
        converged = False
        message = str(exc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupportWarning)
        rec = convergence_record(report, case)
    return {
        "case": case_id,
        "a": a,
        "n": n,
        "options": options,
        "converged": converged,
        "message": message,
        "iterations": report.iterations,
        "projected_gradient": report.final_projected_gradient_norm,
        "minimizer": [float(v) for v in report.minimizer.positions],
        "record": asdict(rec),
    }


def _cache_path(out: Path, case_id: str, a: float, n: int) -> Path:
    return out / "cache" / f"{case_id}_{_a_label(a)}_{n}.json"


def _load_cached(path: Path, options: dict):
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError):
        return None
    return data if data.get("options") == options else None


def _write_text(path: Path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def run_sweep(config: ExperimentConfig) -> int:
    config.validate()
    out = Path(config.output)
    try:
        (out / "cache").mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        log.error("cannot write to %s: %s", out, exc)
        return EXIT_USAGE

    options = config.options.as_dict()
    tasks = [
        (c, a, 2**k)
        for c in config.cases
        for a in config.a_values
        for k in range(config.n_min_exp, config.n_max_exp + 1)
    ]
    results = {}
    todo = []
    for t in tasks:
        path = _cache_path(out, *t)
        cached = None if config.force else _load_cached(path, options)
        if cached is not None:
            results[t] = cached
        else:
            todo.append(t)

    workers = config.workers or os.cpu_count() or 1
    if todo:
        log.info("solving %d problems (%d cached)", len(todo), len(tasks) - len(todo))
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(todo))) as pool:
                futures = {t: pool.submit(_solve_task, *t, options) for t in todo}
                for t in todo:
                    results[t] = futures[t].result()
                    _store(out, t, results[t])
        else:
            for t in todo:
                results[t] = _solve_task(*t, options)
                _store(out, t, results[t])

    return _write_outputs(out, config, tasks, results)


def _store(out: Path, task, result):
    _write_text(_cache_path(out, *task), json.dumps(result, indent=1, sort_keys=True) + "\n")
    status = "ok" if result["converged"] else "FAILED"
    log.info("%s a=%s n=%d: %s (%d iterations)", task[0], _a_label(task[1]), task[2],
             status, result["iterations"])


def _write_outputs(out: Path, config: ExperimentConfig, tasks, results) -> int:
    failed = [t for t in tasks if not results[t]["converged"]]
    records = [ConvergenceRecord(**results[t]["record"]) for t in tasks]
    records = attach_rates(records)
    by_key = {(r.case_id, r.a, r.n): r for r in records}
    summary = {"config": {
        "cases": config.cases,
        "a_values": config.a_values,
        "n_min_exp": config.n_min_exp,
        "n_max_exp": config.n_max_exp,
        "options": config.options.as_dict(),
    }, "results": []}

    for c in config.cases:
        for a in config.a_values:
            ns = [2**k for k in range(config.n_min_exp, config.n_max_exp + 1)]
            recs = [by_key[(c, a, n)] for n in ns]
            conv = {n: results[(c, a, n)]["converged"] for n in ns}
            if "csv" in config.formats:
                _write_text(out / f"en_{c}_{_a_label(a)}.csv", _csv_text(
                    ("n", "e_n", "E_n", "E_phi", "E_rho", "all_in_support", "converged"),
                    [(r.n, r.e_n, r.E_n, r.E_phi, r.E_rho, r.all_in_support, conv[r.n]) for r in recs],
                ))
                _write_text(out / f"p_{c}_{_a_label(a)}.csv", _csv_text(
                    ("n", "p"), [(r.n, r.p) for r in recs if r.p is not None]
                ))
            ps = [r.p for r in recs if r.p is not None]
            summary["results"].append({
                "case": c,
                "a": a,
                "p": {str(r.n): r.p for r in recs if r.p is not None},
                "p_last_four_average": last_four_average(ps) if ps else None,
                "failed_n": [n for n in ns if not conv[n]],
            })

    if "csv" in config.formats:
        _write_text(out / "diagnostics.csv", records_to_csv(records))
    _write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if "json" in config.formats:
        _write_text(out / "records.json",
                    json.dumps([asdict(r) for r in records], indent=1, sort_keys=True) + "\n")
    if failed:
        for t in failed:
            log.error("solve failed: %s a=%s n=%d: %s", t[0], _a_label(t[1]), t[2],
                      results[t]["message"])
        return EXIT_SOLVER
    return EXIT_OK


def run_single(case, a: float | None, n: int, options: SolverOptions, potential: dict | None = None,
               stream=None) -> int:
    stream = stream or sys.stdout
    if potential is not None:
        V, U = potential_from_spec(potential)
        eq = None
    else:
        eq = EquilibriumCase(case, a)
        V, U = eq.V, eq.U
    status = EXIT_OK
    try:
        report = minimize(n, V, U, options, case=eq)
    except SolverError as exc:
        report = exc.report
        status = EXIT_SOLVER
    payload = {"report": report.as_dict()}
    if eq is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SupportWarning)
            payload["record"] = asdict(convergence_record(report, eq))
    json.dump(payload, stream, indent=2, sort_keys=True, default=_json_default)
    stream.write("\n")
    return status


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, Configuration):
        return [float(v) for v in o.positions]
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, default=None, help="gradient tolerance (default 1e-12)")
    p.add_argument("--max-iter", type=int, default=None, help="maximum Newton iterations")
    p.add_argument("--init", choices=["quantile", "equispaced"], default=None)
    p.add_argument("--hessian", choices=["dense", "cg"], default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="rieszgas", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", parents=[common], help="solve for n = 2^k and write rate tables")
    sw.add_argument("--config", help="JSON file with the experiment configuration")
    sw.add_argument("--case", action="append", choices=["box", "quadratic"],
                    help="benchmark case (repeatable; default both)")
    sw.add_argument("--a", help="comma separated Riesz exponents (default 0,0.25,0.5,0.75)")
    sw.add_argument("--nexp", help="exponent range <min>:<max> (default 2:10)")
    sw.add_argument("--out", help="output directory (default ./results)")
    sw.add_argument("--format", help="comma separated output formats: csv,json")
    sw.add_argument("--force", action="store_true", help="ignore cached per-n results")
    sw.add_argument("--workers", type=int, help="number of worker processes")
    _add_solver_flags(sw)

    si = sub.add_parser("single", parents=[common], help="one solve, reported as JSON on stdout")
    si.add_argument("--case", choices=["box", "quadratic"], default="box")
    si.add_argument("--a", type=float, default=0.0)
    si.add_argument("--n", type=int, required=True)
    si.add_argument("--potential", help="JSON describing a custom V and U (replaces --case/--a)")
    _add_solver_flags(si)
    return parser


def _options_from_args(args, base: SolverOptions | None = None) -> SolverOptions:
    d = (base or SolverOptions()).as_dict()
    if args.tol is not None:
        d["gradient_tolerance"] = args.tol
    if args.max_iter is not None:
        d["max_iterations"] = args.max_iter
    if args.init is not None:
        d["initializer"] = args.init
    if args.hessian is not None:
        d["hessian_mode"] = args.hessian
    return SolverOptions(**d)


def _load_json_arg(text: str):
    path = Path(text)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "sweep":
            cfg = ExperimentConfig.from_dict(_load_json_arg(args.config)) if args.config else ExperimentConfig()
            if args.case:
                cfg.cases = args.case
            if args.a is not None:
                cfg.a_values = _parse_a_list(args.a)
            if args.nexp is not None:
                cfg.n_min_exp, cfg.n_max_exp = _parse_nexp(args.nexp)
            if args.out is not None:
                cfg.output = args.out
            if args.format is not None:
                cfg.formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
            if args.force:
                cfg.force = True
            if args.workers is not None:
                cfg.workers = args.workers
            cfg.options = _options_from_args(args, cfg.options)
            return run_sweep(cfg)
        potential = _load_json_arg(args.potential) if args.potential else None
        return run_single(args.case, args.a, args.n, _options_from_args(args), potential)
    except (UsageError, ValueError, json.JSONDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"rieszgas: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
