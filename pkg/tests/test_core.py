import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbfdeflate import RadialBasis, SparseMatrix, phi_eval, spmv
from rbfdeflate.core import DROP_TOL, InterpolationProblem, SolutionVector


def wendland_by_hand(t):
    # expanded polynomial, independent of the factored form used in the code
    if t >= 1:
        return 0.0
    return 1 - 10 * t**2 + 20 * t**3 - 15 * t**4 + 4 * t**5


@pytest.mark.parametrize("rho", [0.05, 0.3, 2.0])
def test_phi_examples(rho):
    basis = RadialBasis(rho)
    assert phi_eval(basis, 0.0) == 1.0
    assert phi_eval(basis, rho) == 0.0
    assert phi_eval(basis, rho / 2) == pytest.approx(0.1875, abs=1e-15)
    assert phi_eval(basis, 3 * rho) == 0.0


def test_phi_matches_expanded_polynomial():
    basis = RadialBasis(1.0)
    for t in np.linspace(0, 1.2, 121):
        assert phi_eval(basis, t) == pytest.approx(wendland_by_hand(t), abs=1e-14)


def test_phi_negative_distance_rejected():
    with pytest.raises(ValueError):
        phi_eval(RadialBasis(0.1), -1e-9)


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        RadialBasis(0.0)


def test_phi_continuous_at_support_edge():
    rho = 0.25
    assert abs(phi_eval(RadialBasis(rho), rho * (1 - 1e-8))) < 1e-6


def test_phi_monotone_on_support():
    basis = RadialBasis(0.7)
    vals = basis(np.linspace(0, 0.7, 1000))
    assert np.all(np.diff(vals) <= 0)


def test_spmv_identity_and_zero(rng):
    x = rng.standard_normal(17)
    assert np.array_equal(spmv(SparseMatrix.identity(17), x), x)
    zero = SparseMatrix.from_dense(np.zeros((17, 17)))
    assert np.array_equal(spmv(zero, x), np.zeros(17))


def random_sparse(rng, n, density):
    dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    return dense, SparseMatrix.from_dense(dense)


@pytest.mark.parametrize("n", [1, 50, 200, 500])
def test_spmv_dense_oracle(rng, backend, n):
    dense, A = random_sparse(rng, n, 0.05)
    A.check()
    x = rng.standard_normal(n)
    expect = dense @ x
    got = spmv(A, x, backend=backend)
    assert np.linalg.norm(got - expect) <= 1e-14 * np.linalg.norm(expect)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 60), density=st.floats(0.0, 1.0), seed=st.integers(0, 2**32 - 1))
def test_spmv_backends_bitwise_equal(n, density, seed):
    from rbfdeflate import available_backends

    rng = np.random.default_rng(seed)
    dense, A = random_sparse(rng, n, density)
    x = rng.standard_normal(n)
    outs = [spmv(A, x, backend=b) for b in available_backends()]
    for o in outs[1:]:
        assert np.array_equal(o, outs[0])
    np.testing.assert_allclose(outs[0], dense @ x, rtol=1e-12, atol=1e-12)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(SparseMatrix.identity(3), np.ones(4))


def test_sparse_from_dense_drops_tiny_entries():
    A = SparseMatrix.from_dense(np.array([[1.0, 1e-15], [0.0, -2.0]]))
    assert A.nnz == 2
    assert np.all(np.abs(A.data) >= DROP_TOL)


def test_sparse_check_rejects_unsorted_columns():
    A = SparseMatrix(np.array([0, 2]), np.array([1, 0]), np.array([1.0, 2.0]), (1, 2))
    with pytest.raises(ValueError, match="strictly increasing"):
        A.check()


def test_problem_validation():
    basis = RadialBasis(0.1)
    with pytest.raises(ValueError):
        InterpolationProblem(np.array([[0.5, 1.5]]), np.array([0.1]), basis)
    with pytest.raises(ValueError):
        InterpolationProblem(np.zeros((3, 4)), np.zeros(3), basis)
    with pytest.raises(ValueError):
        InterpolationProblem(np.zeros((3, 2)), np.zeros(2), basis)
    prob = InterpolationProblem(np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.9]]),
                                np.array([0.1, 0.2, 0.3]), basis)
    assert (prob.n_sites, prob.dim, prob.n_poly, prob.size) == (3, 2, 3, 6)


def test_solution_vector_split():
    sol = SolutionVector.from_array(np.arange(7.0), 4)
    assert sol.lam.tolist() == [0, 1, 2, 3]
    assert sol.c.tolist() == [4, 5, 6]
    assert len(sol) == 7
    assert np.array_equal(sol.as_array(), np.arange(7.0))


def test_env_var_forces_python_backend():
    import os
    import subprocess
    import sys

    env = dict(os.environ, RBFDEFLATE_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import rbfdeflate._backend as b; print(b.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_rejected():
    from rbfdeflate._backend import get_backend

    with pytest.raises(ValueError):
        get_backend("fortran")
