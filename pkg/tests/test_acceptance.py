"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a one-line verdict that is printed in the terminal
summary (section "acceptance criteria") whether it passes or fails.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import record_acceptance
from kirchhoff_cont.cli import main, reference_configs
from kirchhoff_cont.continuation import trace_branch
from kirchhoff_cont.elliptic import Mesh1D, principal_eigenpair
from kirchhoff_cont.kirchhoff import NoSolution, P1Solution, theorem_c_solve
from kirchhoff_cont.pa2 import newton_solve_pa2, residual_pa2
from kirchhoff_cont.params import (
    ContinuationSettings,
    Decaying,
    ProblemParams,
    load_config,
)
from kirchhoff_cont.qmap import ChangeOfVariables, i_lambda, phi_smax, q_lambda

PI2 = math.pi**2


def verdict(number, checks: dict, extra: str = ""):
    """Record and assert; ``checks`` maps a label to a boolean."""
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    detail = extra if ok else f"failed: {', '.join(failed)}; {extra}"
    record_acceptance(number, ok, detail)
    assert ok, detail


def cfg(name):
    return next(p for p in reference_configs() if p.stem == name)


# -- 1 -----------------------------------------------------------------------


def q_suite() -> dict:
    lams, rs = (0.1, 1.0, 10.0), (1.5, 2.0, 3.0)
    out = {}
    s = np.linspace(0, 100, 2001)
    fine = np.logspace(-3, 6, 400)
    ok_inv = ok_q1 = ok_q2 = ok_q3 = ok_q4 = ok_q5 = ok_q6 = ok_mono = True
    for lam in lams:
        for r in rs:
            cv = ChangeOfVariables(lam, r)
            ok_inv &= bool(np.all(np.abs(q_lambda(cv, i_lambda(cv, s)) - s) <= 1e-12 * (1 + s)))
            ratio = q_lambda(cv, fine) / fine
            ok_q1 &= bool(np.all(np.diff(ratio) < 0) and np.all(ratio <= lam * (1 + 1e-14)))
            s_small = 1e-8 if r >= 2 else 1e-14
            ok_q2 &= abs(q_lambda(cv, s_small) / s_small / lam - 1) <= 1e-4
            ok_q3 &= q_lambda(cv, 1e8) / 1e8 < 1e-2
            for p in rs:
                small = np.array([1e-4, 1e-6, 1e-8, 1e-10, 1e-12])
                v = q_lambda(cv, small) ** p / small
                ok_q4 &= bool(np.all(np.diff(v) < 0) and v[-1] < 1e-3)
                if p >= r:
                    v = q_lambda(cv, fine) ** p / fine
                    ok_q5 &= bool(np.all(np.diff(v) >= -1e-15 * v[1:]))
                if r == p:
                    big = 1e9 if (lam >= 1 or r > 1.5) else 1e15
                    ok_q6 &= abs(q_lambda(cv, big) ** p / big - 1) < 1e-3
                elif r < p:
                    ok_q6 &= q_lambda(cv, 1e9) ** p / 1e9 > 1e2
                else:
                    ok_q6 &= q_lambda(cv, 1e9) ** p / 1e9 < 1e-2
        for r in rs:
            grid = np.logspace(-4, 3, 100)
            qs = np.array([q_lambda(ChangeOfVariables(l, r), grid) for l in (0.1, 0.5, 1, 3, 10)])
            ok_mono &= bool(np.all(np.diff(qs, axis=0) > 0))
    ok_unif = True
    for delta in (0.1, 0.01):
        for r, p in ((2.0, 1.5), (3.0, 2.0), (3.0, 1.5)):
            sv = delta ** (-r * p / (r - p))
            sup = max(q_lambda(ChangeOfVariables(l, r), sv) ** p / sv for l in np.logspace(-1, 6, 60))
            ok_unif &= sup <= delta
    out.update({"inverse": ok_inv, "q1": ok_q1, "q2": ok_q2, "q3": ok_q3, "q4": ok_q4,
                "q5": ok_q5, "q6": ok_q6, "lambda-monotone": ok_mono, "uniform": ok_unif})
    return out


def test_ac01_q_calculus():
    t0 = time.perf_counter()
    checks = q_suite()
    dt = time.perf_counter() - t0
    checks["runtime<1s"] = dt < 1.0
    verdict(1, checks, f"{len(checks) - 1} property groups, {dt:.2f}s")


# -- 2 -----------------------------------------------------------------------


def test_ac02_eigen_oracle():
    t0 = time.perf_counter()
    errs = {}
    for n in (3, 15, 127, 511):
        h = 1 / (n + 1)
        closed = 2 / h**2 * (1 - math.cos(math.pi * h))
        errs[n] = abs(principal_eigenpair(Mesh1D(n)).lambda1 - closed) / closed
    lam511 = principal_eigenpair(Mesh1D(511)).lambda1
    dt = time.perf_counter() - t0
    checks = {f"n={n}": e <= 1e-10 for n, e in errs.items()}
    checks["pi^2 within 0.01%"] = abs(lam511 - PI2) / PI2 <= 1e-4
    checks["runtime<1s"] = dt < 1.0
    verdict(2, checks, f"max rel err {max(errs.values()):.1e}, lambda1_h(511)={lam511:.6f}, {dt:.2f}s")


# -- 3 -----------------------------------------------------------------------


def test_ac03_bifurcation_location():
    t0 = time.perf_counter()
    mesh = Mesh1D(511)
    eig = principal_eigenpair(mesh)
    br = trace_branch(mesh, ProblemParams(20, 0, 2, 2), ContinuationSettings(), (0.001, 2.0), eig=eig)
    pts = br.points[:10]
    ws = np.array([p.w_sup for p in pts])
    lam = np.array([p.lam for p in pts])
    lam_ext = float(np.polyval(np.polyfit(ws, lam, 2), 0.0))
    dt = time.perf_counter() - t0
    target = eig.lambda1 / 20
    rel = abs(lam_ext - target) / target
    verdict(3, {"within 1%": rel <= 1e-2, "runtime<10s": dt < 10},
            f"extrapolated {lam_ext:.6f} vs lambda1_h/20={target:.6f} (rel {rel:.1e}), {dt:.2f}s")


# -- 4 -----------------------------------------------------------------------


def test_ac04_closed_form_regime():
    # refinement study with continuum data: b = pi^2, lambda = pi^2/a, w = c sin(pi x);
    # with the discrete eigenpair the residual is already at rounding level
    a = 5.0
    params = ProblemParams(a, PI2, 1.5, 1.5)
    cv = ChangeOfVariables(PI2 / a, 1.5)
    rates = {}
    for c in (0.5, 1.0, 2.0):
        errs = []
        for n in (63, 127, 255, 511):
            m = Mesh1D(n)
            errs.append(np.abs(residual_pa2(m, cv, params, c * np.sin(math.pi * m.nodes))).max())
        rates[c] = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    mesh = Mesh1D(511)
    eig = principal_eigenpair(mesh)
    br = trace_branch(mesh, ProblemParams(a, eig.lambda1, 1.5, 1.5),
                      ContinuationSettings(ds_max=1.0, norm_cap=100.0), (0.01, 4.0), eig=eig)
    dev = float(np.abs(br.lambdas - eig.lambda1 / a).max())
    checks = {f"rate c={c}": bool(np.all(np.abs(r - 2.0) <= 0.2)) for c, r in rates.items()}
    checks["reaches w_sup=100"] = br.w_sups.max() >= 100
    checks["vertical within 1e-6"] = dev <= 1e-6
    rate_txt = ", ".join(f"c={c}: {r.min():.3f}-{r.max():.3f}" for c, r in rates.items())
    verdict(4, checks, f"rates {rate_txt}; max|lambda-lambda0|={dev:.1e} up to w_sup={br.w_sups.max():.0f}")


# -- 5, 6: end-to-end through the CLI ----------------------------------------


def run_solve_p1(name, tmp_path):
    out = tmp_path / name
    t0 = time.perf_counter()
    code = main(["solve-p1", "--config", str(cfg(name)), "--out", str(out), "--quiet"])
    dt = time.perf_counter() - t0
    roots = json.loads((out / "roots.json").read_text())["roots"]
    audit = json.loads((out / "audit.json").read_text())
    return code, roots, audit, dt


def test_ac05_theorem_a(tmp_path):
    checks, parts = {}, []
    for name in ("theorem_a_i", "theorem_a_ii", "theorem_a_iii"):
        code, roots, audit, dt = run_solve_p1(name, tmp_path)
        good = [r for r in roots if abs(r["h_value"]) <= 1e-8 and r["residual_sup"] <= 1e-7]
        checks[f"{name} exit 0"] = code == 0
        checks[f"{name} root"] = len(good) >= 1
        checks[f"{name} audits"] = audit["ok"]
        checks[f"{name} runtime<20s"] = dt < 20
        worst = max((r["residual_sup"] for r in roots), default=float("nan"))
        parts.append(f"{name}: {len(good)} root(s), res {worst:.1e}, {dt:.1f}s")
    verdict(5, checks, "; ".join(parts))


def test_ac06_theorem_b(tmp_path):
    checks, parts = {}, []
    _, phi0 = phi_smax(principal_eigenpair(Mesh1D(511)).lambda1, ProblemParams(27, 1, 3, 2))
    checks["phi(s0)~24.352"] = abs(phi0 - 24.352) <= 5e-3
    lam1 = principal_eigenpair(Mesh1D(511)).lambda1
    checks["window nonempty"] = 3 * lam1 > phi0 and phi0 < 27 < 3 * lam1
    for name in ("theorem_b_i", "theorem_b_ii"):
        code, roots, audit, dt = run_solve_p1(name, tmp_path)
        c = load_config(cfg(name))
        lam0 = lam1 / c.params(lam1).a
        good = [r for r in roots if r["resolved"] and r["residual_sup"] <= 1e-6]
        checks[f"{name} exit 0"] = code == 0
        checks[f"{name} root"] = len(good) >= 1
        if name == "theorem_b_i":
            checks["B(i) lambda*<lambda0"] = all(r["lambda_star"] < lam0 for r in good)
        parts.append(f"{name}: lambda*={[round(r['lambda_star'], 6) for r in good]}, "
                     f"res {max((r['residual_sup'] for r in roots), default=float('nan')):.1e}, {dt:.1f}s")
    verdict(6, checks, f"phi(s0)={phi0:.4f}; " + "; ".join(parts))


# -- 7 -----------------------------------------------------------------------


def test_ac07_theorem_c():
    t0 = time.perf_counter()
    mesh = Mesh1D(511)
    eig = principal_eigenpair(mesh)
    L = eig.lambda1
    sol = theorem_c_solve(mesh, eig, ProblemParams(L / 2, L, 1.5, 1.5), Decaying(1))
    none = theorem_c_solve(mesh, eig, ProblemParams(2 * L, L, 1.5, 1.5), Decaying(1))
    dt = time.perf_counter() - t0
    checks = {
        "solution": isinstance(sol, P1Solution),
        "|grad u|=1+-1e-8": isinstance(sol, P1Solution) and abs(math.sqrt(sol.gamma) - 1) <= 1e-8,
        "residual O(h^2)": isinstance(sol, P1Solution) and sol.residual_sup <= mesh.h**2,
        "no solution": isinstance(none, NoSolution),
        "R[g]=(0,1]": isinstance(none, NoSolution) and str(none.range) == "(0,1]",
        "runtime<10s": dt < 10,
    }
    verdict(7, checks, f"|grad u|_2={math.sqrt(sol.gamma):.12f}, residual {sol.residual_sup:.1e} "
                       f"(h^2={mesh.h**2:.1e}); a=2*lambda1 -> R[g]={none.range}; {dt:.2f}s")


# -- 8, 10: all reference scenarios through `validate` -------------------------


@pytest.fixture(scope="module")
def validate_runs(tmp_path_factory):
    outs, codes = [], []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"validate{k}")
        codes.append(main(["validate", "--out", str(out), "--quiet"]))
        outs.append(out)
    return outs, codes


def test_ac08_audit_suite(validate_runs):
    (out, _), (code, _) = validate_runs
    checks = {"validate exit 0": code == 0}
    n_checks = 0
    for path in reference_configs():
        audit = json.loads((out / path.stem / "audit.json").read_text())
        by_name = {c["name"]: c for c in audit["checks"]}
        n_checks += len(audit["checks"])
        checks[f"{path.stem} audit ok"] = audit["ok"]
        ident = by_name.get("integral_identity")
        checks[f"{path.stem} identity"] = ident is not None and ident["status"] == "pass"
        ne = [c for c in audit["checks"] if c["clause"] in ("a", "b", "c", "d")]
        checks[f"{path.stem} necessary conditions"] = all(c["status"] != "fail" for c in ne)
        c = load_config(path)
        if isinstance(c.b, float) and c.b < 0:
            checks[f"{path.stem} b<0 bound"] = by_name["u_sup_bound"]["status"] == "pass"
    verdict(8, checks, f"{len(reference_configs())} scenarios, {n_checks} checks, 0 violations"
            if all(checks.values()) else "")


def test_ac10_determinism(validate_runs):
    (a, b), _ = validate_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    checks = {"same file set": files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())}
    differing = []
    for rel in files:
        x, y = a / rel, b / rel
        if rel.name == "manifest.json":
            mx, my = json.loads(x.read_text()), json.loads(y.read_text())
            mx.pop("run"), my.pop("run")
            same = mx == my
        else:
            same = x.read_bytes() == y.read_bytes()
        if not same:
            differing.append(str(rel))
    checks["byte-identical"] = not differing
    verdict(10, checks, f"{len(files)} files compared across two runs" + (f"; differ: {differing[:5]}" if differing else ""))


# -- 9 -----------------------------------------------------------------------


def test_ac09_multiplicity():
    mesh = Mesh1D(511)
    eig = principal_eigenpair(mesh)
    c = load_config(cfg("multiplicity"))
    params = c.params(eig.lambda1)
    br = trace_branch(mesh, params, c.continuation, c.window(eig.lambda1), c.tolerances, eig)
    lam0 = br.bifurcation_lambda
    checks = {"fold found": bool(br.folds)}
    if not br.folds:
        verdict(9, checks)
    k = br.folds[0]
    lam_star = br.points[k].lam
    checks["lambda*<lambda0"] = lam_star < lam0
    mid = 0.5 * (lam_star + lam0)
    lam = br.lambdas
    # an accepted branch point guess on each side of the fold, then a fixed-lambda solve
    lower_idx = int(np.argmin(np.abs(lam[:k + 1] - mid)))
    upper_idx = k + int(np.argmin(np.abs(lam[k:] - mid)))
    cv = ChangeOfVariables(mid, params.r)
    w_lo = newton_solve_pa2(mesh, cv, params, br.points[lower_idx].w)
    w_hi = newton_solve_pa2(mesh, cv, params, br.points[upper_idx].w)
    a_, b_ = w_lo.max(), w_hi.max()
    diff = abs(b_ - a_) / min(a_, b_)
    checks["w_sup differ >10%"] = diff > 0.10
    verdict(9, checks, f"fold at lambda*={lam_star:.6f} < lambda0={lam0:.6f}; at lambda={mid:.6f} "
                       f"w_sup={a_:.4g} and {b_:.4g} ({100 * diff:.0f}% apart)")
