"""The lambda-dependent change of variables w = u/lambda + u^r and its inverse.

All maps accept scalars or numpy arrays and work entrywise.  Inputs must be
nonnegative: the transformation is only defined on [0, inf).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateExponentError, DomainError, NumericalError
from .params import ProblemParams

__all__ = [
    "ChangeOfVariables",
    "i_lambda",
    "q_lambda",
    "q_prime",
    "q_dlambda",
    "f_eval",
    "f_prime",
    "f_dlambda",
    "phi_eval",
    "phi_smax",
]

_MAX_ITER = 200


@dataclass(frozen=True)
class ChangeOfVariables:
    lam: float
    r: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"lambda must be positive and finite, got {self.lam}")
        if not self.r > 1:
            raise DomainError(f"r>1 required, got {self.r}")


def _nonneg(x, name="s"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite and >= 0")
    return x


def i_lambda(cv: ChangeOfVariables, s):
    s = _nonneg(s)
    return (s / cv.lam + s**cv.r)[()]


def q_lambda(cv: ChangeOfVariables, w, tol: float = 1e-12):
    """Solve u/lambda + u^r = w for u >= 0.

    Newton from the upper bound min(lambda*w, w^(1/r)); I_lambda is convex and
    increasing, so iterates decrease monotonically onto the root.  A bisection
    step replaces any iterate that leaves the bracket [lo, hi].
    """
    w = _nonneg(w, "w")
    shape = w.shape
    w = np.atleast_1d(w)
    lam, r = cv.lam, cv.r
    hi = np.minimum(lam * w, w ** (1.0 / r))
    lo = np.zeros_like(w)
    u = hi.copy()
    active = w > 0
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        ua = u[active]
        g = ua / lam + ua**r - w[active]
        dg = 1.0 / lam + r * ua ** (r - 1)
        lo_a, hi_a = lo[active], hi[active]
        # maintain the bracket from the sign of g
        hi_a = np.where(g > 0, ua, hi_a)
        lo_a = np.where(g < 0, ua, lo_a)
        step = g / dg
        new = ua - step
        bad = (new <= lo_a) | (new >= hi_a) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo_a + hi_a), new)
        done = (np.abs(new - ua) <= tol * np.abs(new)) | (g == 0) | (hi_a - lo_a <= tol * hi_a)
        u[active], lo[active], hi[active] = new, lo_a, hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    else:
        raise NumericalError("q_lambda did not converge")
    # one polishing Newton step: the stopping test above leaves errors near
    # tol, which the 1/h^2 stencil would amplify when w is rebuilt from u
    pos = w > 0
    up = u[pos]
    polished = up - (up / lam + up**r - w[pos]) / (1.0 / lam + r * up ** (r - 1))
    u[pos] = np.where(np.isfinite(polished) & (polished > 0), polished, up)
    u[w == 0] = 0.0
    return u.reshape(shape)[()]


def q_prime(cv: ChangeOfVariables, w, tol: float = 1e-12):
    """dq/dw = 1/(1/lambda + r q^(r-1)); the value at w=0 is the limit lambda."""
    w = _nonneg(w, "w")
    q = np.asarray(q_lambda(cv, w, tol))
    return (1.0 / (1.0 / cv.lam + cv.r * q ** (cv.r - 1)))[()]


def q_dlambda(cv: ChangeOfVariables, w, tol: float = 1e-12):
    """dq/dlambda at fixed w, from differentiating I_lambda(q) = w."""
    q = np.asarray(q_lambda(cv, w, tol))
    return (q / cv.lam**2 / (1.0 / cv.lam + cv.r * q ** (cv.r - 1)))[()]


def _check(cv, params):
    if cv.r != params.r:
        raise DomainError("change of variables and params disagree on r")


def f_eval(cv: ChangeOfVariables, params: ProblemParams, s, tol: float = 1e-12):
    _check(cv, params)
    q = np.asarray(q_lambda(cv, s, tol))
    return (params.a * q + params.b * q**params.p)[()]


def f_prime(cv: ChangeOfVariables, params: ProblemParams, s, tol: float = 1e-12):
    """ds f = (a + b p q^(p-1)) q'(s); equals a*lambda at s=0."""
    _check(cv, params)
    s = _nonneg(s)
    q = np.asarray(q_lambda(cv, s, tol))
    dq = 1.0 / (1.0 / cv.lam + cv.r * q ** (cv.r - 1))
    return ((params.a + params.b * params.p * q ** (params.p - 1)) * dq)[()]


def f_dlambda(cv: ChangeOfVariables, params: ProblemParams, s, tol: float = 1e-12):
    _check(cv, params)
    s = _nonneg(s)
    q = np.asarray(q_lambda(cv, s, tol))
    dq = q / cv.lam**2 / (1.0 / cv.lam + cv.r * q ** (cv.r - 1))
    return ((params.a + params.b * params.p * q ** (params.p - 1)) * dq)[()]


def f_parts(cv: ChangeOfVariables, params: ProblemParams, s, tol: float = 1e-12):
    """Return (q, f, ds f, dlambda f) sharing a single inversion."""
    _check(cv, params)
    s = _nonneg(s)
    q = np.asarray(q_lambda(cv, s, tol))
    dq = 1.0 / (1.0 / cv.lam + cv.r * q ** (cv.r - 1))
    qp1 = q ** (params.p - 1)
    f = params.a * q + params.b * qp1 * q
    outer = params.a + params.b * params.p * qp1
    return q, f, outer * dq, outer * dq * q / cv.lam**2


def phi_eval(lambda1: float, params: ProblemParams, s):
    s = np.asarray(s, dtype=float)
    return (lambda1 * s ** (params.r - 1) - params.b * s ** (params.p - 1))[()]


def phi_smax(lambda1: float, params: ProblemParams) -> tuple[float, float]:
    """Extremum s0 of phi and the value phi(s0).

    phi(s0) is the minimum when r>p and the maximum when r<p; its sign is
    that of p-r.
    """
    b, p, r = params.b, params.p, params.r
    if r == p:
        raise DegenerateExponentError("phi has no isolated extremum when r == p")
    if not b > 0:
        raise DomainError("phi_smax requires b > 0")
    s0 = (b * (p - 1) / (lambda1 * (r - 1))) ** (1.0 / (r - p))
    val = ((p - 1) / lambda1) ** ((p - 1) / (r - p)) * (b / (r - 1)) ** (
        (r - 1) / (r - p)
    ) * (p - r)
    return float(s0), float(val)
