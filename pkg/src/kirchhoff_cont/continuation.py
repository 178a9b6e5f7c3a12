"""Pseudo-arclength continuation of positive solutions of the transformed
problem, starting at the bifurcation point (lambda_1/a, 0).

Unknowns are x = (w, lambda).  Distances use the weighted norm
|x|^2 = h*sum(w_i^2) + lambda^2, a discrete L2 norm in w, so step sizes mean
the same thing on every mesh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .elliptic import EigenPair, Mesh1D, apply_laplacian, grad_norm_sq, principal_eigenpair
from .errors import SeedError
from .params import ContinuationSettings, ProblemParams, ToleranceSettings
from .pa2 import residual_scale
from .qmap import ChangeOfVariables, f_parts, q_lambda

__all__ = [
    "BranchPoint",
    "Branch",
    "CorrectorFailure",
    "bifurcation_seed",
    "trace_branch",
    "transform_branch",
    "correct_between",
    "write_branch_csv",
    "write_diagram",
]

log = logging.getLogger(__name__)


@dataclass
class BranchPoint:
    lam: float
    w: np.ndarray
    arclength: float
    index: int
    residual: float = 0.0
    u: Optional[np.ndarray] = None
    w_sup: float = 0.0
    u_sup: float = 0.0
    grad_u_sq: float = 0.0

    def __post_init__(self):
        self.lam = float(self.lam)
        self.arclength = float(self.arclength)
        self.residual = float(self.residual)
        self.w_sup = float(np.abs(self.w).max())


@dataclass
class Branch:
    mesh: Mesh1D
    params: ProblemParams
    tolerances: ToleranceSettings
    bifurcation_lambda: float
    points: list = field(default_factory=list)
    direction: str = "undetermined"
    folds: list = field(default_factory=list)
    stop_reason: str = "step_cap"

    def __len__(self):
        return len(self.points)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def w_sups(self) -> np.ndarray:
        return np.array([p.w_sup for p in self.points])

    @property
    def u_sups(self) -> np.ndarray:
        return np.array([p.u_sup for p in self.points])

    @property
    def max_residual(self) -> float:
        return max((p.residual for p in self.points), default=0.0)


class CorrectorFailure(RuntimeError):
    pass


# -- extended Newton --------------------------------------------------------


def _wnorm(mesh, dw, dlam):
    return math.sqrt(mesh.h * float(dw @ dw) + dlam * dlam)


def _bordered_solve(mesh, fp, col, row, corner, rhs_w, rhs_c):
    """Solve [[A - diag(fp), col], [row, corner]] [x; y] = [rhs_w; rhs_c]."""
    n, h2 = mesh.n, mesh.h**2
    off = np.full(n - 1, -1.0 / h2)
    J = sp.diags([off, 2.0 / h2 - fp, off], [-1, 0, 1], format="csc")
    M = sp.bmat(
        [[J, sp.csc_matrix(col.reshape(-1, 1))], [sp.csc_matrix(row.reshape(1, -1)), sp.csc_matrix([[float(corner)]])]],
        format="csc",
    )
    sol = splu(M).solve(np.concatenate((rhs_w, [rhs_c])))
    if not np.all(np.isfinite(sol)):
        raise CorrectorFailure("bordered system is singular")
    return sol[:-1], sol[-1]


def _residual(mesh, params, w, lam, qtol):
    cv = ChangeOfVariables(lam, params.r)
    _, f, fp, fl = f_parts(cv, params, w, qtol)
    F = apply_laplacian(mesh, w) - f
    return F, fp, fl, residual_scale(f)


def _extended_newton(mesh, params, w, lam, constraint, tol, qtol, max_iter=12):
    """Newton on {F(w, lam) = 0, constraint(w, lam) = 0}.

    ``constraint`` returns (value, row_w, corner), a linear functional.
    Returns (w, lam, iterations, residual).
    """
    w = w.copy()
    prev = math.inf
    for it in range(max_iter + 1):
        if lam <= 0:
            raise CorrectorFailure("lambda left (0, inf)")
        F, fp, fl, scale = _residual(mesh, params, w, lam, qtol)
        c, row, corner = constraint(w, lam)
        fnorm = float(np.abs(F).max())
        if fnorm <= tol * scale and abs(c) <= 1e-12 * (1.0 + abs(lam)):
            return w, lam, it, fnorm
        if it == max_iter or (it >= 3 and fnorm > prev):
            break
        prev = fnorm
        try:
            dw, dlam = _bordered_solve(mesh, fp, -fl, row, corner, -F, -c)
        except RuntimeError as exc:
            raise CorrectorFailure(str(exc)) from exc
        w = np.maximum(w + dw, 0.0)
        lam = lam + dlam
    raise CorrectorFailure(f"corrector stalled at residual {fnorm:.3e}")


def _arclength_constraint(mesh, w_pred, lam_pred, tw, tlam):
    row = mesh.h * tw

    def constraint(w, lam):
        return float(row @ (w - w_pred) + tlam * (lam - lam_pred)), row, tlam

    return constraint


def _tangent(mesh, params, w, lam, ref_w, ref_lam, qtol):
    """Null direction of [J, F_lam], normalised, oriented along (ref_w, ref_lam)."""
    _, fp, fl, _ = _residual(mesh, params, w, lam, qtol)
    tw, tlam = _bordered_solve(mesh, fp, -fl, mesh.h * ref_w, ref_lam, np.zeros(mesh.n), 1.0)
    nrm = _wnorm(mesh, tw, tlam)
    tw, tlam = tw / nrm, tlam / nrm
    if mesh.h * float(tw @ ref_w) + tlam * ref_lam < 0:
        tw, tlam = -tw, -tlam
    return tw, tlam


# -- seed -------------------------------------------------------------------


def bifurcation_seed(mesh: Mesh1D, params: ProblemParams, eig: EigenPair, eps: float,
                     tolerances: ToleranceSettings = ToleranceSettings()):
    """First nontrivial point: lambda0 = lambda1/a, w0 = eps*phi1, then Newton
    in (w, lambda) with the amplitude pinned, w[argmax phi1] = eps."""
    lam0 = eig.lambda1 / params.a
    m = int(np.argmax(eig.phi1))
    e_m = np.zeros(mesh.n)
    e_m[m] = 1.0

    def pin(w, lam):
        return float(w[m] - eps), e_m, 0.0

    try:
        w, lam, _, res = _extended_newton(
            mesh, params, eps * eig.phi1, lam0, pin,
            tolerances.newton_tol, tolerances.qmap_tol, max_iter=30,
        )
    except CorrectorFailure as exc:
        raise SeedError(f"seed corrector failed at eps={eps}: {exc}") from exc
    if not (eps / 2 <= np.abs(w).max() <= 2 * eps) or w.min() <= 10 * tolerances.newton_tol:
        raise SeedError(f"seed corrector left the positive cone (eps={eps} too large?)")
    return lam, w, res


# -- tracing ----------------------------------------------------------------


def _annotate(pt: BranchPoint, mesh, params, qtol):
    u = np.asarray(q_lambda(ChangeOfVariables(pt.lam, params.r), pt.w, qtol))
    pt.u = u
    pt.w_sup = float(np.abs(pt.w).max())
    pt.u_sup = float(np.abs(u).max())
    pt.grad_u_sq = grad_norm_sq(mesh, u)
    return pt


def trace_branch(
    mesh: Mesh1D,
    params: ProblemParams,
    settings: ContinuationSettings = ContinuationSettings(),
    lambda_window: tuple = (1e-6, 1e6),
    tolerances: ToleranceSettings = ToleranceSettings(),
    eig: Optional[EigenPair] = None,
) -> Branch:
    """Trace the positive continuum from (lambda1/a, 0).

    Secant predictor, pseudo-arclength corrector, ds halved on failure and
    grown by 1.3 after corrections taking at most three iterations.  The trace
    ends on leaving ``lambda_window``, exceeding ``settings.norm_cap`` in sup
    norm, after ``settings.max_steps`` steps, or when ds drops below ds_min.
    """
    eig = eig or principal_eigenpair(mesh, tolerances.eig_tol)
    lam0 = eig.lambda1 / params.a
    branch = Branch(mesh, params, tolerances, lam0)
    lo, hi = lambda_window
    if not lo <= lam0 <= hi:
        log.warning("bifurcation point %.6g lies outside the lambda window", lam0)
        branch.stop_reason = "lambda_window"
        return branch

    tol, qtol = tolerances.newton_tol, tolerances.qmap_tol
    lam, w, res = bifurcation_seed(mesh, params, eig, settings.seed_eps, tolerances)
    pts = branch.points
    pts.append(_annotate(BranchPoint(lam, w, 0.0, 0, res), mesh, params, qtol))

    tw, tlam = _tangent(mesh, params, w, lam, eig.phi1, 0.0, qtol)
    ds = settings.ds_init
    stop = "step_cap"
    for _ in range(settings.max_steps):
        last = pts[-1]
        if len(pts) >= 2:
            prev = pts[-2]
            dw, dl = last.w - prev.w, last.lam - prev.lam
            nrm = _wnorm(mesh, dw, dl)
            tw, tlam = dw / nrm, dl / nrm
        while True:
            w_pred = np.maximum(last.w + ds * tw, 0.0)
            lam_pred = last.lam + ds * tlam
            try:
                if lam_pred <= 0:
                    raise CorrectorFailure("predicted lambda <= 0")
                cons = _arclength_constraint(mesh, w_pred, lam_pred, tw, tlam)
                w, lam, iters, res = _extended_newton(mesh, params, w_pred, lam_pred, cons, tol, qtol)
                step = _wnorm(mesh, w - last.w, lam - last.lam)
                if step > 2.0 * ds or w.min() <= 10 * tol:
                    raise CorrectorFailure("corrector jumped off the branch")
                break
            except CorrectorFailure as exc:
                ds *= 0.5
                log.debug("step rejected (%s); ds -> %.3e", exc, ds)
                if ds < settings.ds_min:
                    break
        if ds < settings.ds_min:
            stop = "solver_failure"
            break
        if not lo <= lam <= hi:
            stop = "lambda_window"
            break
        pt = BranchPoint(lam, w, last.arclength + step, len(pts), res)
        pts.append(_annotate(pt, mesh, params, qtol))
        if pt.w_sup > settings.norm_cap:
            stop = "norm_cap"
            break
        if iters <= 3:
            ds = min(1.3 * ds, settings.ds_max)
    branch.stop_reason = stop
    branch.direction = _direction(branch)
    branch.folds = detect_folds(branch)
    return branch


def _direction(branch: Branch) -> str:
    lam = branch.lambdas
    if len(lam) < 2:
        return "undetermined"
    d = lam[1:] - branch.bifurcation_lambda
    k = min(len(d), 10)
    spread = np.abs(d[:k]).max()
    if spread <= 1e-9 * branch.bifurcation_lambda:
        return "vertical"
    return "supercritical" if d[np.argmax(np.abs(d[:k]))] > 0 else "subcritical"


def detect_folds(branch: Branch) -> list:
    """Indices where lambda attains a local extremum along the branch.

    Increments below 1e-6 of the step length count as zero so that a
    vertical branch does not register rounding noise as folds.
    """
    folds, last_sign, last_idx = [], 0, None
    pts = branch.points
    for k in range(1, len(pts)):
        dl = pts[k].lam - pts[k - 1].lam
        ds = pts[k].arclength - pts[k - 1].arclength
        if abs(dl) <= 1e-6 * ds:
            continue
        sign = 1 if dl > 0 else -1
        if last_sign and sign != last_sign:
            folds.append(last_idx)
        last_sign, last_idx = sign, k
    return folds


def transform_branch(branch: Branch) -> Branch:
    """Fill u = q_lambda(w), its sup norm and |u'|_2^2 on every point."""
    for pt in branch.points:
        _annotate(pt, branch.mesh, branch.params, branch.tolerances.qmap_tol)
    return branch


def correct_between(branch: Branch, k: int, t: float) -> BranchPoint:
    """Branch point near the chord from point k to k+1 at fraction t in [0, 1].

    The prediction (1-t) x_k + t x_{k+1} is corrected onto the branch with
    the chord direction as the arclength normal.
    """
    a, b = branch.points[k], branch.points[k + 1]
    mesh, params, tols = branch.mesh, branch.params, branch.tolerances
    dw, dl = b.w - a.w, b.lam - a.lam
    nrm = _wnorm(mesh, dw, dl)
    w_pred = (1 - t) * a.w + t * b.w
    lam_pred = (1 - t) * a.lam + t * b.lam
    cons = _arclength_constraint(mesh, w_pred, lam_pred, dw / nrm, dl / nrm)
    w, lam, _, res = _extended_newton(mesh, params, w_pred, lam_pred, cons,
                                      tols.newton_tol, tols.qmap_tol)
    if w.min() <= 10 * tols.newton_tol:
        raise CorrectorFailure("corrected point is not positive")
    pt = BranchPoint(lam, w, a.arclength + t * (b.arclength - a.arclength), k, res)
    return _annotate(pt, mesh, params, tols.qmap_tol)


# -- export -----------------------------------------------------------------


def _fmt(x) -> str:
    """Shortest round-tripping decimal form of a float."""
    return repr(float(x))


def write_branch_csv(branch: Branch, path) -> None:
    folds = set(branch.folds)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,lambda,w_sup,u_sup,grad_u_sq,arclength,fold_flag\n")
        for p in branch.points:
            fh.write(
                f"{p.index},{_fmt(p.lam)},{_fmt(p.w_sup)},{_fmt(p.u_sup)},"
                f"{_fmt(p.grad_u_sq)},{_fmt(p.arclength)},{int(p.index in folds)}\n"
            )


def write_diagram(branch: Branch, path) -> None:
    """Two-column (lambda, w_sup) plot data; folds as leading comment lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in branch.folds:
            p = branch.points[k]
            fh.write(f"# fold index={k} lambda={_fmt(p.lam)} w_sup={_fmt(p.w_sup)}\n")
        fh.write("lambda,w_sup\n")
        for p in branch.points:
            fh.write(f"{_fmt(p.lam)},{_fmt(p.w_sup)}\n")
