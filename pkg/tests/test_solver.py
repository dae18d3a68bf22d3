import numpy as np
import pytest
import scipy.sparse as sp

from tightcap.solver import (ResidualBlock, SolveOptions, SolverError,
                             check_gradient, solve)


def rosenbrock_block():
    def fn(x):
        r = np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])
        J = np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])
        return r, J
    return ResidualBlock("rosenbrock", fn)


def test_rosenbrock_converges_with_monotone_cost():
    res = solve([rosenbrock_block()], np.array([-1.2, 1.0]),
                SolveOptions(max_iters=200))
    hist = res.cost_history
    assert all(b < a for a, b in zip(hist, hist[1:]))
    assert res.cost < 1e-6
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-3)


def test_linear_least_squares_one_step():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((8, 3))
    b = rng.standard_normal(8)

    def fn(x):
        return A @ x - b, A

    res = solve([ResidualBlock("lin", fn)], np.zeros(3),
                SolveOptions(max_iters=10))
    want, *_ = np.linalg.lstsq(A, b, rcond=None)
    assert np.allclose(res.x, want, atol=1e-8)


def test_multiple_blocks_sum_costs():
    def f1(x):
        return np.array([x[0] - 2.0]), np.array([[1.0, 0.0]])

    def f2(x):
        return np.array([x[1] + 1.0]), np.array([[0.0, 1.0]])

    res = solve([ResidualBlock("a", f1), ResidualBlock("b", f2)], np.zeros(2))
    assert np.allclose(res.x, [2.0, -1.0], atol=1e-10)


def test_sparse_jacobians_accepted():
    def fn(x):
        return x - 3.0, sp.eye(4, format="csr")

    res = solve([ResidualBlock("s", fn)], np.zeros(4))
    assert np.allclose(res.x, 3.0, atol=1e-10)


def test_retraction_folds_accepted_steps():
    # snapping retraction: every accepted iterate must land on the 0.1 grid,
    # so the returned x is 2.3, not the unconstrained optimum 2.33
    def fn(x):
        return np.array([x[0] - 2.33]), np.array([[1.0]])

    calls = []

    def retract(x):
        calls.append(x.copy())
        return np.round(x, 1)

    res = solve([ResidualBlock("snap", fn)], np.zeros(1), retract=retract)
    assert calls, "retraction never invoked"
    assert res.x[0] == pytest.approx(2.3, abs=1e-12)


def test_jacobian_shape_mismatch_raises():
    def fn(x):
        return np.zeros(2), np.zeros((3, len(x)))

    with pytest.raises(SolverError):
        solve([ResidualBlock("bad", fn)], np.zeros(2))


def test_check_gradient_accepts_exact_jacobian():
    chk = check_gradient(rosenbrock_block(), np.array([0.4, -0.3]))
    assert chk.ok and chk.max_error < 1e-6


def test_check_gradient_flags_wrong_jacobian():
    def fn(x):
        r = np.array([x[0] ** 2])
        return r, np.array([[3.0 * x[0]]])  # wrong: should be 2x

    chk = check_gradient(ResidualBlock("wrong", fn), np.array([0.7]))
    assert not chk.ok
    assert chk.max_error > 1e-2


def test_check_gradient_near_zero_columns():
    # a residual independent of x must not trip the relative-error floor
    def fn(x):
        return np.array([5.0]), np.zeros((1, 2))

    chk = check_gradient(ResidualBlock("const", fn), np.array([1.0, 2.0]))
    assert chk.ok
