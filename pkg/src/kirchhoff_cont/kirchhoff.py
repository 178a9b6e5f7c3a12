"""Solutions of the nonlocal problem from the lambda-branch.

A branch point (lambda, u) solves the nonlocal equation exactly when
h(lambda, u) = 1/lambda - g(|u'|_2^2) vanishes.  Sign changes of h along the
traced branch are refined by bracketing on arclength with every probe
corrected back onto the branch.  The degenerate case r = p, b = lambda_1 has
a one-parameter family of closed-form solutions and is handled directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .continuation import Branch, BranchPoint, CorrectorFailure, correct_between
from .elliptic import EigenPair, Mesh1D, apply_laplacian, grad_norm_sq
from .errors import DomainError, RegimeError
from .params import GFunction, Interval, ProblemParams
from .qmap import ChangeOfVariables, q_lambda

__all__ = [
    "P1Solution",
    "NoSolution",
    "h_eval",
    "find_h_roots",
    "p1_residual",
    "closed_form_solution",
    "grad_norm_c",
    "theorem_c_solve",
    "theorem_c_h_scan",
]

log = logging.getLogger(__name__)


@dataclass
class P1Solution:
    u: np.ndarray
    lambda_star: float
    gamma: float
    residual_sup: float
    regime: str
    h_value: float = 0.0
    arclength: Optional[float] = None
    resolved: bool = True
    notes: list = field(default_factory=list)
    c: Optional[float] = None

    def record(self) -> dict:
        out = {
            "lambda_star": self.lambda_star,
            "gamma": self.gamma,
            "residual_sup": self.residual_sup,
            "regime": self.regime,
            "h_value": self.h_value,
            "resolved": self.resolved,
        }
        if self.arclength is not None:
            out["arclength"] = self.arclength
        if self.c is not None:
            out["c"] = self.c
        if self.notes:
            out["notes"] = list(self.notes)
        return out


@dataclass
class NoSolution:
    target: float
    range: Interval
    near_boundary: bool = False

    def record(self) -> dict:
        return {
            "solution": None,
            "a_over_lambda1": self.target,
            "range_g": str(self.range),
            "near_boundary": self.near_boundary,
        }


def h_eval(lam: float, grad_u_sq: float, g: GFunction) -> float:
    if not lam > 0:
        raise DomainError(f"h needs lambda > 0, got {lam}")
    return 1.0 / lam - float(g(grad_u_sq))


def p1_residual(mesh: Mesh1D, u, g: GFunction, params: ProblemParams) -> float:
    """Sup norm of -(g(|u'|^2) u + u^r)'' - (a u + b u^p) on the mesh."""
    u = mesh.check(u)
    if np.any(u < 0):
        raise DomainError("p1_residual needs u >= 0")
    gamma = grad_norm_sq(mesh, u)
    inner = float(g(gamma)) * u + u**params.r
    res = apply_laplacian(mesh, inner) - (params.a * u + params.b * u**params.p)
    return float(np.abs(res).max(initial=0.0))


def _solution_from_point(branch, pt: BranchPoint, g, regime, h) -> P1Solution:
    res = p1_residual(branch.mesh, pt.u, g, branch.params)
    return P1Solution(pt.u, pt.lam, pt.grad_u_sq, res, regime, h, pt.arclength)


def find_h_roots(
    branch: Branch,
    g: GFunction,
    regime: str = "none",
    h_tol: float = 1e-12,
    max_probes: int = 200,
) -> list:
    """All zeros of h bracketed by consecutive branch points, by arclength.

    The bracket is refined with the Illinois variant of false position on
    the chord parameter; each probe is a corrected branch point, so the
    returned u solves the auxiliary problem at lambda_star to solver accuracy.
    A probe whose corrector fails ends that refinement and the root is
    reported with ``resolved=False``.
    """
    pts = branch.points
    if not pts:
        return []
    hs = [h_eval(p.lam, p.grad_u_sq, g) for p in pts]
    h_limit = h_eval(branch.bifurcation_lambda, 0.0, g)
    roots = []

    if h_limit * hs[0] < 0:
        p = pts[0]
        sol = _solution_from_point(branch, p, g, regime, hs[0])
        sol.resolved = abs(hs[0]) <= h_tol
        sol.notes.append("sign change between the bifurcation point and the first branch point")
        roots.append(sol)

    seg_len = branch.tolerances.bisection_tol
    for k in range(len(pts) - 1):
        h0, h1 = hs[k], hs[k + 1]
        if h0 == 0.0:
            roots.append(_solution_from_point(branch, pts[k], g, regime, 0.0))
            continue
        if h0 * h1 >= 0:
            continue
        ta, fa, tb, fb = 0.0, h0, 1.0, h1
        side = 0
        best, best_h = None, math.inf
        span = pts[k + 1].arclength - pts[k].arclength
        resolved = False
        for _ in range(max_probes):
            t = (ta * fb - tb * fa) / (fb - fa)
            if not ta < t < tb:
                t = 0.5 * (ta + tb)
            try:
                probe = correct_between(branch, k, t)
            except CorrectorFailure as exc:
                log.warning("root refinement near index %d failed: %s", k, exc)
                break
            ft = h_eval(probe.lam, probe.grad_u_sq, g)
            if abs(ft) < best_h:
                best, best_h = probe, abs(ft)
            if abs(ft) <= h_tol:
                resolved = True
                break
            if ft * fb > 0:
                tb, fb = t, ft
                if side == -1:
                    fa *= 0.5
                side = -1
            else:
                ta, fa = t, ft
                if side == 1:
                    fb *= 0.5
                side = 1
            if (tb - ta) * span <= 1e-8 * seg_len:
                resolved = best_h <= 1e-8
                break
        if best is None:
            p = pts[k] if abs(h0) < abs(h1) else pts[k + 1]
            sol = _solution_from_point(branch, p, g, regime, min(h0, h1, key=abs))
            sol.resolved = False
            sol.notes.append("corrector failed during refinement")
        else:
            sol = _solution_from_point(branch, best, g, regime, h_eval(best.lam, best.grad_u_sq, g))
            sol.resolved = resolved
        roots.append(sol)
    if hs[-1] == 0.0:
        roots.append(_solution_from_point(branch, pts[-1], g, regime, 0.0))
    return roots


# -- the closed-form case r = p, b = lambda_1 ---------------------------------


def _check_c_regime(params: ProblemParams, eig: EigenPair, need_r_below_2: bool):
    if params.r != params.p:
        raise RegimeError("closed form requires r == p")
    if not math.isclose(params.b, eig.lambda1, rel_tol=1e-9):
        raise RegimeError("closed form requires b == lambda1 of the mesh")
    if need_r_below_2 and params.r >= 2:
        raise RegimeError("monotonicity of c -> |u_c'|_2 needs r < 2")


def closed_form_solution(mesh: Mesh1D, eig: EigenPair, params: ProblemParams, c: float,
                         qtol: float = 1e-12) -> np.ndarray:
    """u_c = q_{lambda1/a}(c phi1), nodewise."""
    _check_c_regime(params, eig, False)
    if c < 0:
        raise DomainError("c must be >= 0")
    cv = ChangeOfVariables(eig.lambda1 / params.a, params.r)
    return np.asarray(q_lambda(cv, c * eig.phi1, qtol))


def grad_norm_c(mesh: Mesh1D, eig: EigenPair, params: ProblemParams, c: float,
                qtol: float = 1e-12) -> float:
    """|u_c'|_2^2 through the chain-rule integrand
    (c lambda1 / (a + lambda1 r q^(r-1)))^2 |phi1'|^2, one midpoint per cell."""
    _check_c_regime(params, eig, True)
    if c == 0:
        return 0.0
    a, r, l1 = params.a, params.r, eig.lambda1
    phi = np.concatenate(([0.0], eig.phi1, [0.0]))
    dphi = np.diff(phi) / mesh.h
    mid = 0.5 * (phi[:-1] + phi[1:])
    q = np.asarray(q_lambda(ChangeOfVariables(l1 / a, r), c * mid, qtol))
    coef = c * l1 / (a + l1 * r * q ** (r - 1))
    return float(np.sum(coef**2 * dphi**2) * mesh.h)


def theorem_c_solve(mesh: Mesh1D, eig: EigenPair, params: ProblemParams, g: GFunction,
                    qtol: float = 1e-12):
    """Solve the nonlocal problem when r = p < 2 and b = lambda_1.

    A solution exists iff a/lambda_1 lies in the range of g.  Then s' with
    g(s') = a/lambda_1 is found per family and c is chosen so that
    |u_c'|_2^2 = s'.  A constant g admits every c; s' = 1 is used and the
    solution carries a "degenerate" note.
    """
    _check_c_regime(params, eig, True)
    target = params.a / eig.lambda1
    rng = g.range()
    s_prime = g.inverse(target, positive=True) if target in rng else None
    if s_prime is None:
        return NoSolution(target, rng, rng.near_boundary(target))

    def excess(c):
        return grad_norm_sq(mesh, closed_form_solution(mesh, eig, params, c, qtol)) - s_prime

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 0.0
    c = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    u = closed_form_solution(mesh, eig, params, c, qtol)
    gamma = grad_norm_sq(mesh, u)
    lam = eig.lambda1 / params.a
    sol = P1Solution(u, lam, gamma, p1_residual(mesh, u, g, params), "C",
                     h_eval(lam, gamma, g), c=c)
    if g.degenerate:
        sol.notes.append("degenerate: g is constant on its range, canonical s'=1")
    return sol


def theorem_c_h_scan(mesh: Mesh1D, eig: EigenPair, params: ProblemParams, g: GFunction,
                     cs) -> np.ndarray:
    """h along the vertical branch (lambda1/a, c phi1) for each c in ``cs``."""
    lam = eig.lambda1 / params.a
    return np.array([
        h_eval(lam, grad_norm_sq(mesh, closed_form_solution(mesh, eig, params, c)), g)
        for c in cs
    ])
