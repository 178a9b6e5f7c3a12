"""Finite differences for -d^2/dx^2 on (0, 1) with homogeneous Dirichlet data.

Grid functions are plain float arrays holding the n interior values; the
boundary values are zero by convention and never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, NumericalError

__all__ = [
    "Mesh1D",
    "EigenPair",
    "apply_laplacian",
    "solve_poisson",
    "solve_tridiagonal",
    "principal_eigenpair",
    "discrete_lambda1",
    "grad_norm_sq",
    "weighted_inner",
    "write_grid_csv",
    "read_grid_csv",
]


@dataclass(frozen=True)
class Mesh1D:
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 3):
            raise DomainError(f"need at least 3 interior nodes, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise DomainError(f"grid function has shape {u.shape}, mesh needs ({self.n},)")
        return u


@dataclass(frozen=True)
class EigenPair:
    lambda1: float
    phi1: np.ndarray


def discrete_lambda1(mesh: Mesh1D) -> float:
    """Closed-form smallest eigenvalue (2/h^2)(1 - cos(pi h))."""
    h = mesh.h
    return 4.0 / h**2 * math.sin(math.pi * h / 2) ** 2


def apply_laplacian(mesh: Mesh1D, u) -> np.ndarray:
    u = mesh.check(u)
    up = np.concatenate(([0.0], u, [0.0]))
    return (2.0 * u - up[:-2] - up[2:]) / mesh.h**2


def solve_tridiagonal(mesh: Mesh1D, diag_shift, rhs) -> np.ndarray:
    """Solve (A - diag(diag_shift)) x = rhs, A the Dirichlet Laplacian."""
    n, h2 = mesh.n, mesh.h**2
    ab = np.empty((3, n))
    ab[0, :] = -1.0 / h2
    ab[1, :] = 2.0 / h2 - np.broadcast_to(diag_shift, (n,))
    ab[2, :] = -1.0 / h2
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def solve_poisson(mesh: Mesh1D, rhs) -> np.ndarray:
    return solve_tridiagonal(mesh, 0.0, mesh.check(rhs))


def principal_eigenpair(mesh: Mesh1D, tol: float = 1e-12, max_iter: int = 500) -> EigenPair:
    """Inverse power iteration for the smallest eigenvalue.

    The eigenvector is normalised to sup-norm one; the eigenvalue is the
    Rayleigh quotient of the final iterate.
    """
    x = mesh.nodes
    # start from a positive vector that is not the answer
    v = x * (1.0 - x) * (1.0 + 0.5 * x)
    v /= np.abs(v).max()
    for _ in range(max_iter):
        z = solve_poisson(mesh, v)
        z /= np.abs(z).max()
        change = np.abs(z - v).max()
        v = z
        if change <= tol:
            break
    else:
        raise NumericalError("inverse iteration did not converge")
    if v.sum() < 0:
        v = -v
    lam = float(v @ apply_laplacian(mesh, v) / (v @ v))
    return EigenPair(lam, v)


def grad_norm_sq(mesh: Mesh1D, u) -> float:
    """|u'|_2^2 by forward differences over the n+1 cells, zero boundary values."""
    u = mesh.check(u)
    d = np.diff(np.concatenate(([0.0], u, [0.0])))
    return float(np.sum(d * d) / mesh.h)


def weighted_inner(mesh: Mesh1D, u, v, wgt) -> float:
    u, v = mesh.check(u), mesh.check(v)
    wgt = np.broadcast_to(np.asarray(wgt, dtype=float), (mesh.n,))
    return float(np.sum(u * v * wgt) * mesh.h)


def write_grid_csv(mesh: Mesh1D, u, path, name: str = "value") -> None:
    u = mesh.check(u)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"x,{name}\n")
        for xi, ui in zip(mesh.nodes, u):
            fh.write(f"{float(xi)!r},{float(ui)!r}\n")


def read_grid_csv(path) -> tuple[Mesh1D, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Mesh1D(len(data)), data[:, 1].copy()
