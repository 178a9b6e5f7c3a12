import math

import numpy as np
import pytest

from kirchhoff_cont.continuation import trace_branch
from kirchhoff_cont.elliptic import Mesh1D, principal_eigenpair
from kirchhoff_cont.params import ContinuationSettings, ProblemParams


@pytest.fixture(scope="session")
def mesh511():
    return Mesh1D(511)


@pytest.fixture(scope="session")
def eig511(mesh511):
    return principal_eigenpair(mesh511)


@pytest.fixture(scope="session")
def mesh127():
    return Mesh1D(127)


@pytest.fixture(scope="session")
def eig127(mesh127):
    return principal_eigenpair(mesh127)


@pytest.fixture(scope="session")
def branch_a_i(mesh511, eig511):
    """b = 0, r = p = 2, a = 20 up to lambda = 2."""
    return trace_branch(mesh511, ProblemParams(20.0, 0.0, 2.0, 2.0), ContinuationSettings(),
                        (eig511.lambda1 / 2000, 2.0), eig=eig511)


@pytest.fixture(scope="session")
def branch_fold(mesh511, eig511):
    """b = 2 > 0, r = 3 > p = 2, a = lambda1: subcritical with a fold."""
    L = eig511.lambda1
    return trace_branch(mesh511, ProblemParams(L, 2.0, 2.0, 3.0), ContinuationSettings(),
                        (0.1, 2.0), eig=eig511)


@pytest.fixture(scope="session")
def branch_vertical(mesh511, eig511):
    """r = p = 1.5, b = lambda1, a = 5: the vertical branch."""
    L = eig511.lambda1
    return trace_branch(mesh511, ProblemParams(5.0, L, 1.5, 1.5),
                        ContinuationSettings(ds_max=1.0, norm_cap=100.0), (0.01, 4.0), eig=eig511)


@pytest.fixture(scope="session")
def branch_negative_b(mesh511, eig511):
    L = eig511.lambda1
    return trace_branch(mesh511, ProblemParams(2 * L, -1.0, 2.0, 2.0), ContinuationSettings(),
                        (0.01, 2.0), eig=eig511)


def sine_mode(mesh):
    return np.sin(math.pi * mesh.nodes)


# -- acceptance reporting -----------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {detail}")
