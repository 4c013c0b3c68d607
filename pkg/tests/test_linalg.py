"""Unit tests for the eigendecomposition / effective-rank layer."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eranklab.linalg import (
    effective_rank,
    least_squares_solve,
    singular_values,
    sym_eigendecomp,
)


def random_psd(n, seed, rank=None):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, rank or n))
    return a @ a.T


class TestSymEigendecomp:
    def test_diagonal_input(self):
        dec = sym_eigendecomp(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(dec.eigenvalues, [3.0, 2.0, 1.0])
        # Eigenvectors of a diagonal matrix form a signed permutation.
        np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(3)[[0, 2, 1]], atol=1e-14)

    def test_two_by_two_hand_computed(self):
        # Characteristic polynomial (2-l)^2 - 1 = 0 gives l = 3, 1.
        dec = sym_eigendecomp(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(dec.eigenvalues, [3.0, 1.0], atol=1e-12)

    def test_identity(self):
        dec = sym_eigendecomp(np.eye(4))
        np.testing.assert_allclose(dec.eigenvalues, np.ones(4))

    @pytest.mark.parametrize("n", [2, 17, 128, 512])
    def test_orthogonality_and_reconstruction(self, n):
        g = random_psd(n, seed=n)
        dec = sym_eigendecomp(g)
        q = dec.eigenvectors
        assert np.abs(q @ q.T - np.eye(n)).max() <= 1e-10
        scale = max(1.0, np.abs(g).max())
        assert np.abs(dec.reconstruct() - g).max() <= 1e-8 * scale
        assert np.all(np.diff(dec.eigenvalues) <= 0)
        assert np.all(dec.eigenvalues >= 0)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            sym_eigendecomp(np.ones((2, 3)))

    def test_rejects_asymmetric(self):
        g = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            sym_eigendecomp(g)

    def test_rejects_significantly_negative(self):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            sym_eigendecomp(np.diag([1.0, -0.5]))

    def test_clamps_roundoff_negatives(self):
        # Rank-deficient Gram matrices produce tiny negative eigenvalues.
        g = random_psd(64, seed=1, rank=5)
        dec = sym_eigendecomp(g)
        assert dec.eigenvalues[-1] == 0.0 or dec.eigenvalues[-1] > 0.0


class TestEffectiveRank:
    def test_uniform_spectrum_counts(self):
        assert effective_rank(np.ones(4)) == pytest.approx(4.0, abs=1e-12)
        assert effective_rank(np.ones(257)) == pytest.approx(257.0, abs=1e-9)

    def test_rank_one(self):
        assert effective_rank([7.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-14)

    def test_hand_computed_value(self):
        # p = (1/2, 1/4, 1/4): exp(H) = 2^(3/2).
        assert effective_rank([2.0, 1.0, 1.0]) == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-14)

    @given(
        sigma=st.lists(st.floats(0.0, 1e6), min_size=1, max_size=40).filter(
            lambda s: sum(s) > 0
        ),
        scale=st.floats(1e-6, 1e6),
    )
    @settings(max_examples=200, deadline=None)
    def test_scale_invariance_and_bounds(self, sigma, scale):
        sigma = np.array(sigma)
        base = effective_rank(sigma)
        assert abs(effective_rank(scale * sigma) - base) <= 1e-12 * max(1.0, base)
        assert 1.0 - 1e-12 <= base <= np.count_nonzero(sigma) + 1e-12

    def test_eigen_vs_singular_paths_agree(self):
        g = random_psd(40, seed=3)
        via_eig = effective_rank(sym_eigendecomp(g).eigenvalues)
        via_svd = effective_rank(singular_values(g))
        assert abs(via_eig - via_svd) <= 1e-10

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            effective_rank(np.zeros(3))
        with pytest.raises(ValueError):
            effective_rank([1.0, -0.1])
        with pytest.raises(ValueError):
            effective_rank([])


class TestLeastSquares:
    def test_identity_returns_rhs(self):
        b = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(least_squares_solve(np.eye(3), b), b)

    def test_normal_equations_by_hand(self):
        # A^T A x = A^T b reads 2x = 2.
        a = np.array([[1.0], [1.0]])
        x = least_squares_solve(a, np.array([0.0, 2.0]))
        np.testing.assert_allclose(x, [1.0], atol=1e-14)

    def test_exact_recovery_in_span(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((30, 10))
        x_true = rng.standard_normal(10)
        b = a @ x_true
        x = least_squares_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_minimum_norm_when_rank_deficient(self):
        # x + y = 2 has minimum-norm solution (1, 1).
        x = least_squares_solve(np.array([[1.0, 1.0]]), np.array([2.0]))
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            least_squares_solve(np.eye(3), np.ones(4))
