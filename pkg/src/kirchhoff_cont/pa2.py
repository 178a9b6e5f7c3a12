"""Fixed-lambda solvers for the transformed problem

    -w'' = a q_lambda(w) + b q_lambda(w)^p,  w > 0 on (0, 1),  w(0) = w(1) = 0.

Residuals are measured in the sup norm relative to |f(w)|_inf.  The
three-point stencil amplifies rounding by about 4/h^2, so an absolute 1e-10
is out of reach once |w| is of order one on fine meshes; and an absolute
test would accept near-trivial iterates of amplitude ~sqrt(tol) as positive
solutions at the bifurcation value itself.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import LinAlgError

from .elliptic import Mesh1D, apply_laplacian, solve_poisson, solve_tridiagonal
from .errors import (
    ConvergedToTrivial,
    DomainError,
    NoDecrease,
    NonPositive,
    NumericalError,
    SingularJacobian,
)
from .params import ProblemParams
from .qmap import ChangeOfVariables, f_eval, f_parts

__all__ = [
    "residual_pa2",
    "residual_scale",
    "jacobian_apply",
    "newton_solve_pa2",
    "fixed_point_pa2",
]

log = logging.getLogger(__name__)

BACKTRACK = tuple(2.0**-k for k in range(7))


def residual_pa2(mesh: Mesh1D, cv: ChangeOfVariables, params: ProblemParams, w, tol=1e-12):
    w = mesh.check(w)
    if np.any(w < 0):
        raise DomainError("residual_pa2 needs w >= 0")
    return apply_laplacian(mesh, w) - f_eval(cv, params, w, tol)


def residual_scale(f) -> float:
    """|f|_inf, floored only to keep w = 0 from dividing by zero."""
    return max(float(np.abs(f).max(initial=0.0)), 1e-300)


def jacobian_apply(mesh, cv, params, w, v, tol=1e-12):
    """(A - diag(f'(w))) v."""
    _, _, fp, _ = f_parts(cv, params, mesh.check(w), tol)
    return apply_laplacian(mesh, v) - fp * v


def _state(mesh, cv, params, w, qtol):
    _, f, fp, _ = f_parts(cv, params, w, qtol)
    res = apply_laplacian(mesh, w) - f
    rnorm = float(np.abs(res).max())
    merit = rnorm / max(float(np.abs(w).max()), 1e-300)
    return res, rnorm, residual_scale(f), fp, f, merit


def newton_solve_pa2(
    mesh: Mesh1D,
    cv: ChangeOfVariables,
    params: ProblemParams,
    guess,
    tol: float = 1e-10,
    max_iter: int = 100,
    qtol: float = 1e-12,
) -> np.ndarray:
    """Damped Newton for a positive solution at fixed lambda.

    Each step solves (A - diag(f'(w))) d = -res and takes the first
    clamp(w + alpha d) with alpha = 1, 1/2, ..., 1/64 that lowers the relative
    residual |res|/|w|.  The plain residual is useless as a merit function
    here because w = 0 is always a solution.  When no damped step helps, one
    Picard step w <- (-Delta)^{-1} f(w) is tried before giving up.

    Raises SingularJacobian, NoDecrease, ConvergedToTrivial or NonPositive.
    """
    w = mesh.check(guess).copy()
    if np.any(w < 0):
        raise DomainError("initial guess must be nonnegative")
    state = _state(mesh, cv, params, w, qtol)
    res, rnorm, scale, fp, f, merit = state
    for it in range(max_iter):
        if rnorm <= tol * scale:
            break
        try:
            d = solve_tridiagonal(mesh, fp, -res)
        except (LinAlgError, ValueError) as exc:
            raise SingularJacobian(str(exc), w=w, residual=rnorm) from exc
        if not np.all(np.isfinite(d)) or np.abs(d).max() > 1e10 * (1.0 + np.abs(w).max()):
            raise SingularJacobian("Newton step blew up", w=w, residual=rnorm)
        accepted = None
        for alpha in BACKTRACK:
            trial = np.maximum(w + alpha * d, 0.0)
            if np.abs(trial).max() < 10 * tol:
                continue
            t_state = _state(mesh, cv, params, trial, qtol)
            if t_state[5] < merit or t_state[1] <= tol * t_state[2]:
                accepted = trial, t_state
                break
        if accepted is None:
            trial = np.maximum(solve_poisson(mesh, f), 0.0)
            if np.abs(trial).max() >= 10 * tol:
                t_state = _state(mesh, cv, params, trial, qtol)
                if t_state[5] < merit:
                    accepted = trial, t_state
        if accepted is None:
            if np.abs(w).max() < 10 * tol:
                break
            raise NoDecrease(f"no damped step lowers the residual (iteration {it})", w=w, residual=rnorm)
        w, (res, rnorm, scale, fp, f, merit) = accepted
    else:
        if rnorm > tol * scale:
            raise NoDecrease("iteration cap reached", w=w, residual=rnorm)

    if np.abs(w).max() < 10 * tol:
        raise ConvergedToTrivial("converged to w = 0", w=w, residual=rnorm)
    if w.min() <= 10 * tol:
        raise NonPositive("converged to a solution that is not positive", w=w, residual=rnorm)
    return w


def fixed_point_pa2(
    mesh: Mesh1D,
    cv: ChangeOfVariables,
    params: ProblemParams,
    guess,
    tol: float = 1e-12,
    max_iter: int = 200_000,
    qtol: float = 1e-13,
) -> np.ndarray:
    """Picard iteration w <- (-Delta)^{-1} f(lambda, w).

    Independent of the Newton path; it converges monotonically in the
    sublinear regimes (b <= 0) from any positive sub- or supersolution.
    """
    w = mesh.check(guess).copy()
    for _ in range(max_iter):
        new = np.maximum(solve_poisson(mesh, f_eval(cv, params, w, qtol)), 0.0)
        change = np.abs(new - w).max()
        w = new
        if change <= tol * max(1.0, np.abs(w).max()):
            return w
    raise NumericalError("fixed-point iteration did not converge")
