import functools

import numpy as np
import pytest

import rbfdeflate
import rbfdeflate.image
import rbfdeflate.solvers
from rbfdeflate import InterpolationProblem, RadialBasis, assemble, available_backends

_ACCEPTANCE: list[tuple[str, bool, str]] = []

# every deflated solve in the session reports max_k max|Q^T r_k| / |b| here
ORTHOGONALITY_TOL = 1e-8
DEFLATED_SOLVES = {"count": 0, "checked": 0, "worst": 0.0}


def _watch_deflated(solve):
    @functools.wraps(solve)
    def wrapper(*args, **kwargs):
        x, report = solve(*args, **kwargs)
        DEFLATED_SOLVES["count"] += 1
        if report.coarse_residual_history:
            DEFLATED_SOLVES["checked"] += 1
            DEFLATED_SOLVES["worst"] = max(DEFLATED_SOLVES["worst"],
                                           max(report.coarse_residual_history))
        return x, report

    return wrapper


_watched = _watch_deflated(rbfdeflate.solvers.deflated_gcr_solve)
for _mod in (rbfdeflate, rbfdeflate.solvers, rbfdeflate.image):
    _mod.deflated_gcr_solve = _watched


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


def random_problem(rng, n, radius, d=2):
    sites = rng.random((n, d))
    return InterpolationProblem(sites, rng.random(n), RadialBasis(radius))


def random_system(rng, n, radius, d=2):
    prob = random_problem(rng, n, radius, d)
    return prob, assemble(prob)


@pytest.fixture
def acceptance_log():
    """Record one pass/fail line per acceptance criterion."""

    def log(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        line = f"{'PASS' if ok else 'FAIL'}  {name}  {detail}"
        print(line)
        assert ok, line

    return log


def _suite_orthogonality_ok():
    return DEFLATED_SOLVES["worst"] <= ORTHOGONALITY_TOL


def pytest_sessionfinish(session, exitstatus):
    if DEFLATED_SOLVES["checked"] and not _suite_orthogonality_ok():
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE and not DEFLATED_SOLVES["checked"]:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if DEFLATED_SOLVES["checked"]:
        ok = _suite_orthogonality_ok()
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  3-suite residual orthogonality over all "
            f"{DEFLATED_SOLVES['checked']} deflated solves with m > 0: "
            f"max|Q^T r_k|/|b| = {DEFLATED_SOLVES['worst']:.3e} (tol {ORTHOGONALITY_TOL:g})")
