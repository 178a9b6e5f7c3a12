"""Command-line scenario runner.

    python -m kirchhoff_cont eigen     [--mesh-n N] [--config FILE] [--out DIR]
    python -m kirchhoff_cont trace     --config FILE [--out DIR] [--mesh-n N] [--seed-eps E]
    python -m kirchhoff_cont solve-p1  --config FILE ...
    python -m kirchhoff_cont theorem-c --config FILE ...
    python -m kirchhoff_cont validate  [--config FILE] ...

Every run writes its outputs plus ``manifest.json`` under the output
directory.  Exit codes: 0 success, 2 validation failure, 3 audit failure,
4 solver failure, 64 usage error, 66 unreadable config.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import platform
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .audit import AuditReport, Check, FAIL, PASS, audit_branch, audit_solution
from .continuation import trace_branch, write_branch_csv, write_diagram
from .elliptic import Mesh1D, discrete_lambda1, principal_eigenpair, write_grid_csv
from .errors import ConfigError, KirchhoffError, NumericalError, RegimeError, SeedError
from .kirchhoff import NoSolution, find_h_roots, theorem_c_solve
from .params import ScenarioConfig, config_hash, config_to_dict, load_config, validate_params

__all__ = ["main", "build_parser", "run", "reference_configs", "EXIT"]

log = logging.getLogger("kirchhoff_cont")

EXIT = {"ok": 0, "validation": 2, "audit": 3, "solver": 4, "usage": 64, "noinput": 66}

THEOREM_TAGS = ("A(i)", "A(ii)", "A(iii)", "B(i)", "B(ii)", "C")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT["usage"])


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario JSON file")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--mesh-n", type=int, help="number of interior mesh nodes")
    common.add_argument("--seed-eps", type=float, help="amplitude of the bifurcation seed")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = _Parser(prog="kirchhoff-cont", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, help_ in [
        ("eigen", "principal eigenpair of the discrete Laplacian"),
        ("trace", "trace the positive branch and audit it"),
        ("solve-p1", "trace, then locate solutions of the nonlocal problem"),
        ("theorem-c", "closed-form pipeline for r = p < 2, b = lambda1"),
        ("validate", "validate and run scenarios (all shipped ones without --config)"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)
    return parser


# -- helpers ----------------------------------------------------------------


def _plain(x):
    """Recursively convert numpy scalars/arrays to JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_plain(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def reference_configs() -> list:
    """Paths of the scenario configs shipped with the package, sorted by name."""
    root = resources.files("kirchhoff_cont") / "configs"
    return sorted((Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")),
                  key=lambda p: p.name)


class _Run:
    """Output directory, timings and console reporting for one scenario."""

    def __init__(self, command: str, out: Path, quiet: bool):
        self.command, self.out, self.quiet = command, out, quiet
        self.timings: dict = {}
        self.outputs: list = []
        out.mkdir(parents=True, exist_ok=True)

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def timed(self, label, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timings[label] = round(time.perf_counter() - t0, 6)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self, cfg: Optional[ScenarioConfig], mesh_n: int, code: int, extra=None) -> None:
        data = {
            "command": self.command,
            "package": "kirchhoff_cont",
            "version": __version__,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "mesh_n": mesh_n,
            "exit_code": code,
            "config_hash": config_hash(cfg) if cfg is not None else None,
            "config": config_to_dict(cfg) if cfg is not None else None,
            "outputs": {n: _sha256(self.out / n) for n in sorted(set(self.outputs))},
            # wall-clock content lives only here and is excluded from determinism checks
            "run": {
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                "timings": self.timings,
            },
        }
        if extra:
            data.update(extra)
        _write_json(self.out / "manifest.json", data)


def _load(args) -> Optional[ScenarioConfig]:
    if args.config is None:
        return None
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _Exit(EXIT["noinput"], f"cannot read config {args.config}: {exc}") from exc
    except (ConfigError, TypeError, ValueError) as exc:
        raise _Exit(EXIT["validation"], f"invalid config {args.config}: {exc}") from exc
    return cfg.with_overrides(mesh_n=args.mesh_n, seed_eps=args.seed_eps)


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _check_config(cfg: ScenarioConfig, lambda1: float):
    """Schema invariants, parameter validation and the regime tag cross-check."""
    problems = cfg.violations()
    if problems:
        raise _Exit(EXIT["validation"], "; ".join(problems))
    params = cfg.params(lambda1)
    outcome = validate_params(params, cfg.g, lambda1)
    if not outcome.ok:
        raise _Exit(EXIT["validation"], "; ".join(outcome.violations))
    if cfg.regime is not None and cfg.regime not in outcome.regimes:
        raise _Exit(
            EXIT["validation"],
            f"regime tag {cfg.regime!r} does not hold; applicable: {list(outcome.regimes)}",
        )
    return params, outcome


def _out_dir(args, cfg: Optional[ScenarioConfig]) -> Path:
    if args.out is not None:
        return args.out
    return Path(cfg.output_dir) if cfg is not None else Path("out")


# -- subcommands ------------------------------------------------------------


def cmd_eigen(args, cfg, run: _Run):
    n = cfg.mesh_n if cfg is not None else (args.mesh_n or 511)
    mesh = Mesh1D(n)
    tol = cfg.tolerances.eig_tol if cfg is not None else 1e-12
    eig = run.timed("eigen", principal_eigenpair, mesh, tol)
    closed = discrete_lambda1(mesh)
    rel = abs(eig.lambda1 - closed) / closed
    write_grid_csv(mesh, eig.phi1, run.path("phi1.csv"), "phi1")
    _write_json(run.path("eigen.json"), {
        "n": n,
        "h": mesh.h,
        "lambda1": eig.lambda1,
        "closed_form": closed,
        "relative_error": rel,
        "relative_to_pi_squared": abs(eig.lambda1 - math.pi**2) / math.pi**2,
    })
    run.say(f"lambda1_h = {eig.lambda1!r} (n={n}, closed form {closed!r}, rel. diff {rel:.2e})")
    return EXIT["ok"] if rel <= 1e-10 else EXIT["solver"], n


def _trace(cfg, run: _Run):
    mesh = Mesh1D(cfg.mesh_n)
    eig = run.timed("eigen", principal_eigenpair, mesh, cfg.tolerances.eig_tol)
    params, outcome = _check_config(cfg, eig.lambda1)
    window = cfg.window(eig.lambda1)
    try:
        branch = run.timed("trace", trace_branch, mesh, params, cfg.continuation, window,
                           cfg.tolerances, eig)
    except (SeedError, NumericalError) as exc:
        raise _Exit(EXIT["solver"], f"trace failed: {exc}") from exc
    if not branch.points:
        log.warning("empty branch: bifurcation point %.6g outside window %s",
                    branch.bifurcation_lambda, window)
    write_branch_csv(branch, run.path("branch.csv"))
    write_diagram(branch, run.path("diagram.csv"))
    report = run.timed("audit", audit_branch, branch, eig)
    run.say(
        f"branch: {len(branch.points)} points, {branch.direction}, folds at {branch.folds}, "
        f"stop={branch.stop_reason}, lambda0={branch.bifurcation_lambda!r}"
    )
    return mesh, eig, params, outcome, branch, report


def _branch_summary(branch, window):
    return {
        "n_points": len(branch.points),
        "bifurcation_lambda": branch.bifurcation_lambda,
        "direction": branch.direction,
        "folds": branch.folds,
        "fold_lambdas": [branch.points[k].lam for k in branch.folds],
        "stop_reason": branch.stop_reason,
        "lambda_window": list(window),
        "max_residual": branch.max_residual if branch.points else None,
    }


def _finish_audit(run: _Run, report: AuditReport) -> int:
    report.write_json(run.path("audit.json"))
    if not report.ok:
        for c in report.failures:
            log.error("audit failure: %s (%s) value=%s threshold=%s",
                      c.name, c.clause, c.value, c.threshold)
        return EXIT["audit"]
    run.say(f"audit: {len(report.checks)} checks, no failures")
    return EXIT["ok"]


def cmd_trace(args, cfg, run: _Run):
    mesh, eig, params, outcome, branch, report = _trace(cfg, run)
    _write_json(run.path("summary.json"), {
        "branch": _branch_summary(branch, cfg.window(eig.lambda1)),
        "regimes": list(outcome.regimes),
        "branch_shape": outcome.branch_shape,
    })
    return _finish_audit(run, report), mesh.n


def cmd_solve_p1(args, cfg, run: _Run):
    mesh, eig, params, outcome, branch, report = _trace(cfg, run)
    regime = cfg.regime or "none"
    roots = run.timed("roots", find_h_roots, branch, cfg.g, regime,
                      1e-12)
    for k, sol in enumerate(roots):
        write_grid_csv(mesh, sol.u, run.path(f"u_root_{k}.csv"), "u")
        report.extend(audit_solution(mesh, eig, params, cfg.g, sol, cfg.tolerances,
                                     label=f"root_{k}"))
    _write_json(run.path("roots.json"), {
        "branch": _branch_summary(branch, cfg.window(eig.lambda1)),
        "roots": [s.record() for s in roots],
    })
    resolved = [s for s in roots if s.resolved]
    run.say(f"roots: {len(roots)} found, {len(resolved)} resolved")
    for s in roots:
        run.say(f"  lambda*={s.lambda_star!r} gamma={s.gamma!r} h={s.h_value:.2e} "
                f"residual={s.residual_sup:.2e}")
    code = _finish_audit(run, report)
    if code == EXIT["ok"] and regime in THEOREM_TAGS and not resolved:
        log.error("regime %s guarantees a solution but no resolved root was found", regime)
        code = EXIT["solver"]
    return code, mesh.n


def cmd_theorem_c(args, cfg, run: _Run):
    mesh = Mesh1D(cfg.mesh_n)
    eig = run.timed("eigen", principal_eigenpair, mesh, cfg.tolerances.eig_tol)
    params, outcome = _check_config(cfg, eig.lambda1)
    try:
        result = run.timed("theorem_c", theorem_c_solve, mesh, eig, params, cfg.g,
                           cfg.tolerances.qmap_tol)
    except RegimeError as exc:
        raise _Exit(EXIT["validation"], str(exc)) from exc
    report = AuditReport()
    if isinstance(result, NoSolution):
        run.say(f"no solution: a/lambda1 = {result.target!r} not in R[g] = {result.range}")
        if result.near_boundary:
            log.warning("a/lambda1 lies at the boundary of R[g]; existence is undecided there")
        rec = result.record()
    else:
        write_grid_csv(mesh, result.u, run.path("u_c.csv"), "u")
        report.extend(audit_solution(mesh, eig, params, cfg.g, result, cfg.tolerances, label="c"))
        rec = result.record()
        run.say(f"solution: c={result.c!r} |u'|_2^2={result.gamma!r} "
                f"residual={result.residual_sup:.2e}")
    _write_json(run.path("theorem_c.json"), rec)
    return _finish_audit(run, report), mesh.n


def _is_closed_form(params, lambda1) -> bool:
    return params.r == params.p and params.r < 2 and math.isclose(params.b, lambda1, rel_tol=1e-9)


def cmd_validate_one(args, cfg, run: _Run):
    """Full pipeline for one scenario: trace + audit, roots, closed form."""
    mesh, eig, params, outcome, branch, report = _trace(cfg, run)
    summary = {
        "name": cfg.name,
        "regime": cfg.regime,
        "regimes": list(outcome.regimes),
        "branch_shape": outcome.branch_shape,
        "g1": outcome.g1,
        "g2": outcome.g2,
        "branch": _branch_summary(branch, cfg.window(eig.lambda1)),
    }
    if _is_closed_form(params, eig.lambda1):
        result = theorem_c_solve(mesh, eig, params, cfg.g, cfg.tolerances.qmap_tol)
        summary["theorem_c"] = result.record()
        if not isinstance(result, NoSolution):
            report.extend(audit_solution(mesh, eig, params, cfg.g, result, cfg.tolerances,
                                         label="c"))
    else:
        roots = find_h_roots(branch, cfg.g, cfg.regime or "none")
        summary["roots"] = [s.record() for s in roots]
        for k, sol in enumerate(roots):
            report.extend(audit_solution(mesh, eig, params, cfg.g, sol, cfg.tolerances,
                                         label=f"root_{k}"))
        if cfg.regime in THEOREM_TAGS and not any(s.resolved for s in roots):
            report.checks.append(Check("existence", cfg.regime, FAIL, 0.0, 1.0))
        elif cfg.regime in THEOREM_TAGS:
            report.checks.append(Check("existence", cfg.regime, PASS,
                                       float(sum(s.resolved for s in roots)), 1.0))
    summary["audit_ok"] = report.ok
    _write_json(run.path("validate.json"), summary)
    return _finish_audit(run, report), mesh.n


COMMANDS = {
    "eigen": cmd_eigen,
    "trace": cmd_trace,
    "solve-p1": cmd_solve_p1,
    "theorem-c": cmd_theorem_c,
    "validate": cmd_validate_one,
}


def _run_one(command: str, args, cfg, out: Path) -> int:
    run = _Run(command, out, args.quiet)
    n = cfg.mesh_n if cfg is not None else (args.mesh_n or 511)
    try:
        code, n = COMMANDS[command](args, cfg, run)
    except _Exit as exc:
        log.error("%s", exc)
        code = exc.code
    except KirchhoffError as exc:
        log.error("%s", exc)
        code = EXIT["solver"]
    run.manifest(cfg, n, code)
    return code


def run(command: str, args) -> int:
    try:
        cfg = _load(args)
    except _Exit as exc:
        log.error("%s", exc)
        return exc.code
    if command != "eigen" and command != "validate" and cfg is None:
        log.error("%s needs --config", command)
        return EXIT["usage"]
    out = _out_dir(args, cfg)
    if command == "validate" and cfg is None:
        codes = {}
        for path in reference_configs():
            sub = argparse.Namespace(**{**vars(args), "config": path})
            try:
                scfg = _load(sub)
            except _Exit as exc:
                log.error("%s", exc)
                codes[path.stem] = exc.code
                continue
            codes[path.stem] = _run_one("validate", sub, scfg, out / path.stem)
            if not args.quiet:
                print(f"[{'ok' if codes[path.stem] == 0 else 'FAIL'}] {path.stem} "
                      f"(exit {codes[path.stem]})")
        _write_json(out / "validate_all.json", {"exit_codes": codes})
        return max(codes.values(), default=EXIT["ok"])
    return _run_one(command, args, cfg, out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    return run(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
