import numpy as np
import pytest

from kpomdp.exceptions import NotPSDError, SingularSystemError
from kpomdp.kernels import gaussian_kernel, gram
from kpomdp.linalg import (
    LowRankRegularizedSolver,
    icf,
    lowrank_shift_solve,
    reg_solve,
    woodbury_solve,
)


def random_psd(rng, n, jitter=0.0):
    a = rng.normal(size=(n, n))
    return a @ a.T + jitter * np.eye(n)


class TestRegSolve:
    def test_scalar(self):
        # (2 + 1*1) x = 3
        assert reg_solve(np.array([[2.0]]), 1.0, 1, np.array([3.0]))[0] == pytest.approx(1.0)

    def test_identity_no_regularization(self):
        b = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(reg_solve(np.eye(3), 0.0, 3, b), b, atol=1e-14)

    def test_residual_oracle(self):
        rng = np.random.default_rng(0)
        g = random_psd(rng, 5)
        b = rng.normal(size=(5, 2))
        x = reg_solve(g, 0.1, 5, b)
        residual = (g + 0.5 * np.eye(5)) @ x - b
        assert np.abs(residual).max() < 1e-8

    def test_singular_at_zero_regularization(self):
        singular = np.ones((3, 3))  # rank 1
        with pytest.raises(SingularSystemError):
            reg_solve(singular, 0.0, 3, np.array([1.0, 0.0, 0.0]))

    def test_negative_regularizer_rejected(self):
        with pytest.raises(ValueError):
            reg_solve(np.eye(2), -0.1, 2, np.zeros(2))


class TestICF:
    def test_all_ones_exact_at_rank_one(self):
        factor = icf(np.ones((6, 6)), 6, 0.0)
        assert factor.rank == 1
        assert factor.residual_trace == 0.0
        np.testing.assert_allclose(factor.matrix @ factor.matrix.T, np.ones((6, 6)), atol=1e-12)

    def test_identity_full_rank(self):
        factor = icf(np.eye(4), 4, 0.0)
        np.testing.assert_allclose(factor.matrix @ factor.matrix.T, np.eye(4), atol=1e-12)

    def test_full_rank_recovery(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(50, 2))
        g = gram(gaussian_kernel((1.0, 1.0)), pts, pts)
        factor = icf(g, 50, 0.0)
        assert np.linalg.norm(factor.matrix @ factor.matrix.T - g, "fro") < 1e-8

    def test_residual_trace_monotone(self):
        rng = np.random.default_rng(2)
        g = random_psd(rng, 30)
        factor = icf(g, 30, 0.0)
        hist = factor.trace_history
        assert np.all(hist[1:] <= hist[:-1] + 1e-12)
        assert np.all(hist >= 0.0)

    def test_rank_cap(self):
        rng = np.random.default_rng(3)
        g = random_psd(rng, 20)
        factor = icf(g, 5, 0.0)
        assert factor.rank == 5

    def test_tolerance_stop(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(40, 1))
        g = gram(gaussian_kernel((2.0,)), pts, pts)
        loose = icf(g, 40, 1e-2)
        tight = icf(g, 40, 1e-10)
        assert loose.rank < tight.rank
        assert loose.residual_trace <= 1e-2

    def test_not_psd(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(NotPSDError):
            icf(bad, 2, 0.0)

    def test_pivot_block_triangular(self):
        rng = np.random.default_rng(5)
        g = random_psd(rng, 12)
        factor = icf(g, 12, 0.0)
        block = factor.pivot_block()
        np.testing.assert_allclose(block, np.tril(block), atol=1e-12)


class TestWoodbury:
    def test_rank_zero_pure_diagonal(self):
        out = woodbury_solve(np.zeros((2, 0)), 1.0, 2, np.array([4.0, 4.0]))
        np.testing.assert_allclose(out, [2.0, 2.0])

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(6)
        g = random_psd(rng, 20)
        factor = icf(g, 20, 0.0)
        b = rng.normal(size=20)
        dense = reg_solve(g, 0.05, 20, b)
        fast = woodbury_solve(factor, 0.05, 20, b)
        assert np.abs(dense - fast).max() / np.abs(dense).max() < 1e-6

    def test_rank_one_ones_closed_form(self):
        # (J + I)^-1 1 = 1/4 for the 3x3 all-ones J
        factor = icf(np.ones((3, 3)), 3, 0.0)
        out = woodbury_solve(factor, 1.0 / 3.0, 3, np.ones(3))
        np.testing.assert_allclose(out, np.full(3, 0.25), atol=1e-12)

    def test_zero_shift_rejected(self):
        with pytest.raises(SingularSystemError):
            woodbury_solve(np.zeros((2, 0)), 0.0, 2, np.ones(2))

    def test_asymmetric_shift_solve(self):
        rng = np.random.default_rng(7)
        u = rng.normal(size=(15, 4))
        v = rng.normal(size=(15, 4))
        b = rng.normal(size=15)
        dense = np.linalg.solve(u @ v.T + 0.7 * np.eye(15), b)
        fast = lowrank_shift_solve(u, v, 0.7, b)
        np.testing.assert_allclose(fast, dense, atol=1e-9)

    def test_solver_reuse(self):
        rng = np.random.default_rng(8)
        g = random_psd(rng, 10)
        factor = icf(g, 10, 0.0)
        solver = LowRankRegularizedSolver(factor.matrix, 0.2, 10)
        b = rng.normal(size=(10, 3))
        np.testing.assert_allclose(
            solver.solve(b), reg_solve(g, 0.2, 10, b), atol=1e-8
        )
