"""Random-feature model: activations, evaluation, basis and kernel assembly."""

import numpy as np
import pytest

from eranklab.features import (
    OperatorSpec,
    basis_matrix,
    get_activation,
    halfcell_spectral_gap,
    init_model,
    kernel_ga,
    kernel_gw,
    uniform_grid,
)
from eranklab.linalg import effective_rank, sym_eigendecomp


class TestActivations:
    # even point count keeps the relu3 kink out of the sample set
    ZS = np.linspace(-10.0, 10.0, 2000)

    @pytest.mark.parametrize("name", ["tanh", "sin", "relu3"])
    def test_first_derivative_matches_fd(self, name):
        act = get_activation(name)
        h = 1e-6
        fd = (act.value(self.ZS + h) - act.value(self.ZS - h)) / (2 * h)
        np.testing.assert_allclose(act.d1(self.ZS), fd, atol=1e-6)

    @pytest.mark.parametrize("name", ["tanh", "sin", "relu3"])
    def test_second_derivative_matches_fd(self, name):
        act = get_activation(name)
        h = 1e-6
        fd = (act.d1(self.ZS + h) - act.d1(self.ZS - h)) / (2 * h)
        np.testing.assert_allclose(act.d2(self.ZS), fd, atol=1e-6)

    @pytest.mark.parametrize("name", ["tanh", "sin", "relu3"])
    def test_third_derivative_matches_fd(self, name):
        act = get_activation(name)
        h = 1e-6
        fd = (act.d2(self.ZS + h) - act.d2(self.ZS - h)) / (2 * h)
        np.testing.assert_allclose(act.d3(self.ZS), fd, atol=1e-5)

    def test_cubic_relu_closed_forms(self):
        act = get_activation("relu3")
        z = np.array([-2.0, -1e-12, 0.0, 0.5, 2.0])
        np.testing.assert_allclose(act.value(z), np.maximum(z, 0) ** 3)
        np.testing.assert_allclose(act.d1(z), 3 * np.maximum(z, 0) ** 2)
        np.testing.assert_allclose(act.d2(z), 6 * np.maximum(z, 0))
        # C^2 at the kink
        assert act.d2(np.array([0.0]))[0] == 0.0

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="unknown activation"):
            get_activation("gelu")


class TestInitModel:
    def test_weights_within_range(self):
        m = init_model(seed=5, domain=(-1, 1), mp=4, jn=16, r_m=1.0)
        assert np.abs(m.weights).max() <= 1.0

    def test_single_feature_count(self):
        m = init_model(seed=0, domain=(-1, 1), mp=1, jn=1, r_m=2.0)
        assert m.m_total == 1

    def test_determinism(self):
        a = init_model(seed=42, domain=(0, 8), mp=8, jn=32, r_m=3.0, trainable_inner=True)
        b = init_model(seed=42, domain=(0, 8), mp=8, jn=32, r_m=3.0, trainable_inner=True)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_rfm_mode_zero_coeffs(self):
        m = init_model(seed=0, domain=(-1, 1), mp=2, jn=4, r_m=1.0)
        assert np.all(m.coeffs == 0.0)

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            init_model(seed=0, domain=(-1, 1), mp=1, jn=0, r_m=1.0)
        with pytest.raises(ValueError):
            init_model(seed=0, domain=(-1, 1), mp=1, jn=4, r_m=0.0)


class TestEvaluation:
    def test_zero_coeffs_give_zero(self):
        m = init_model(seed=1, domain=(-1, 1), mp=2, jn=8, r_m=1.0)
        x = np.linspace(-1, 1, 17)
        assert np.all(m.value(x) == 0.0)

    def test_single_tanh_identity_configuration(self):
        m = init_model(seed=0, domain=(-1, 1), mp=1, jn=1, r_m=1.0, activation="tanh")
        m.weights[0, 0] = [1.0, 0.0]
        m.coeffs[0, 0] = 1.0
        x = np.linspace(-1, 1, 33)
        np.testing.assert_allclose(m.value(x), np.tanh(x), atol=1e-15)

    @pytest.mark.parametrize("kind", ["a", "b"])
    def test_gradient_matches_fd(self, kind):
        m = init_model(seed=7, domain=(0, 8), mp=4, jn=16, r_m=2.0, kind=kind,
                       trainable_inner=True)
        rng = np.random.default_rng(3)
        x = rng.uniform(0.05, 7.95, size=(100, 1))
        bps = m.partition.breakpoints_1d(0)
        x = x[np.min(np.abs(x - bps[None, :]), axis=1) > 1e-3]
        h = 1e-6
        fd = (m.value(x + h) - m.value(x - h)) / (2 * h)
        np.testing.assert_allclose(m.gradient(x)[:, 0], fd, atol=1e-6)

    def test_hessian_matches_fd(self):
        m = init_model(seed=7, domain=(-1, 1), mp=2, jn=16, r_m=3.0, kind="b",
                       trainable_inner=True)
        rng = np.random.default_rng(4)
        x = rng.uniform(-0.95, 0.95, size=(80, 1))
        bps = m.partition.breakpoints_1d(0)
        x = x[np.min(np.abs(x - bps[None, :]), axis=1) > 1e-3]
        h = 1e-5
        fd = (m.value(x + h) - 2 * m.value(x) + m.value(x - h)) / h**2
        np.testing.assert_allclose(m.hess_diag(x)[:, 0], fd, atol=1e-5)

    def test_2d_gradient_matches_fd(self):
        m = init_model(seed=2, domain=[(-1, 1), (-1, 1)], mp=(2, 2), jn=8, r_m=2.0,
                       kind="b", trainable_inner=True)
        rng = np.random.default_rng(5)
        x = rng.uniform(-0.9, 0.9, size=(50, 2))
        h = 1e-6
        grad = m.gradient(x)
        for j in range(2):
            e = np.eye(2)[j] * h
            fd = (m.value(x + e) - m.value(x - e)) / (2 * h)
            np.testing.assert_allclose(grad[:, j], fd, atol=2e-6)


class TestBasisMatrix:
    def test_identity_single_feature(self):
        m = init_model(seed=0, domain=(-1, 1), mp=1, jn=1, r_m=1.0)
        m.weights[0, 0] = [1.0, 0.0]
        x = np.linspace(-1, 1, 9)
        phi = basis_matrix(m, x, OperatorSpec.identity())
        np.testing.assert_allclose(phi[:, 0], np.tanh(x))

    def test_block_diagonal_under_characteristic_pou(self):
        m = init_model(seed=3, domain=(-1, 1), mp=2, jn=8, r_m=1.0, kind="a")
        x = uniform_grid((-1, 1), 64)
        phi = basis_matrix(m, x, OperatorSpec.identity())
        left = x[:, 0] < 0.0
        # columns 0..7 belong to the left cell, 8..15 to the right
        assert np.all(phi[~left][:, :8] == 0.0)
        assert np.all(phi[left][:, 8:] == 0.0)
        assert np.any(phi[left][:, :8] != 0.0)

    def test_second_derivative_of_sine_feature(self):
        # d^2/dx^2 sin(w x_loc + b) = -(w/r)^2 sin(w x_loc + b), r = 4 on (0, 8)
        m = init_model(seed=0, domain=(0, 8), mp=1, jn=1, r_m=1.0, activation="sin")
        w, b = 1.3, 0.4
        m.weights[0, 0] = [w, b]
        x = np.linspace(0.5, 7.5, 21)
        phi = basis_matrix(m, x, OperatorSpec(c2=(1.0,)))
        r = 4.0
        x_loc = (x - 4.0) / r
        np.testing.assert_allclose(phi[:, 0], -((w / r) ** 2) * np.sin(w * x_loc + b),
                                   atol=1e-14)

    @pytest.mark.parametrize("act", ["tanh", "sin", "relu3"])
    def test_operator_columns_match_fd_of_eval(self, act):
        """L applied to the basis agrees with finite differences of u."""
        m = init_model(seed=11, domain=(0, 8), mp=4, jn=6, r_m=2.0, kind="b",
                       activation=act, trainable_inner=True)
        op = OperatorSpec(c0=0.7, c1=(-1.2,), c2=(0.9,))
        rng = np.random.default_rng(8)
        x = rng.uniform(0.2, 7.8, size=(60, 1))
        bps = m.partition.breakpoints_1d(0)
        x = x[np.min(np.abs(x - bps[None, :]), axis=1) > 1e-2]
        phi = basis_matrix(m, x, op)
        lu = phi @ m.coeffs.ravel()
        h = 1e-5
        u0, up, um = m.value(x), m.value(x + h), m.value(x - h)
        fd = 0.7 * u0 - 1.2 * (up - um) / (2 * h) + 0.9 * (up - 2 * u0 + um) / h**2
        np.testing.assert_allclose(lu, fd, atol=1e-5)

    def test_rejects_nonlinear_operator(self):
        m = init_model(seed=0, domain=(0, 8), mp=1, jn=2, r_m=1.0)
        with pytest.raises(ValueError, match="training"):
            basis_matrix(m, np.linspace(0, 8, 5), OperatorSpec.burgers_steady())


class TestKernels:
    def test_identity_phi_gives_identity(self):
        np.testing.assert_allclose(kernel_ga(np.eye(5)), np.eye(5))

    def test_gram_is_psd(self):
        rng = np.random.default_rng(9)
        phi = rng.standard_normal((40, 17))
        eig = np.linalg.eigvalsh(kernel_ga(phi))
        assert eig.min() >= -1e-12 * max(eig.max(), 1.0)

    def test_supervised_kernel_spectrum_decays_rapidly(self):
        m = init_model(seed=0, domain=(-1, 1), mp=1, jn=1024, r_m=1.0)
        x = uniform_grid((-1, 1), 256)
        dec = sym_eigendecomp(kernel_ga(basis_matrix(m, x)))
        assert effective_rank(dec.eigenvalues) < 5.0
        assert dec.eigenvalues[20] < 1e-6 * dec.eigenvalues[0]

    def test_gw_zero_for_zero_coeffs(self):
        m = init_model(seed=1, domain=(-1, 1), mp=2, jn=8, r_m=1.0)
        g = kernel_gw(m, np.linspace(-1, 1, 16))
        assert np.all(g == 0.0)

    def test_gw_exactly_symmetric_and_psd(self):
        m = init_model(seed=2, domain=(-1, 1), mp=2, jn=16, r_m=2.0,
                       trainable_inner=True)
        g = kernel_gw(m, np.linspace(-1, 1, 32), OperatorSpec(c0=4.0, c2=(1.0,)))
        assert np.abs(g - g.T).max() == 0.0
        eig = np.linalg.eigvalsh(g)
        assert eig.min() >= -1e-12 * eig.max()

    def test_gw_single_cell_matches_direct_formula(self):
        """Single cell, identity operator: the factored kernel by hand."""
        m = init_model(seed=4, domain=(-1, 1), mp=1, jn=8, r_m=1.5,
                       trainable_inner=True)
        x = np.linspace(-1, 1, 12)
        g = kernel_gw(m, x, OperatorSpec.identity())
        w = m.weights[0]
        a = m.coeffs[0]
        z = np.outer(x, w[:, 0]) + w[:, 1]
        s1 = 1.0 - np.tanh(z) ** 2
        xaug = np.stack([x, np.ones_like(x)], axis=1)
        expected = ((s1 * a**2) @ s1.T) * (xaug @ xaug.T) / 8.0
        np.testing.assert_allclose(g, expected, atol=1e-14)


class TestHalfcellGap:
    def test_shared_weights_zero_gap(self):
        gap, _, _, _ = halfcell_spectral_gap(64, 2048, seed=3, shared_weights=True)
        assert gap == 0.0

    def test_gap_below_bound(self):
        for seed in range(3):
            gap, bound, _, _ = halfcell_spectral_gap(64, 2048, seed=seed)
            assert 0 < gap <= bound

    def test_rejects_odd_sizes(self):
        with pytest.raises(ValueError, match="even"):
            halfcell_spectral_gap(63, 2048, seed=0)


class TestUniformGrid:
    def test_endpoints_included(self):
        g = uniform_grid((0.0, 8.0), 9)
        assert g[0, 0] == 0.0 and g[-1, 0] == 8.0

    def test_nudges_off_blend_breakpoints(self):
        from eranklab.partition import uniform_partition

        p = uniform_partition((0.0, 8.0), 4, "b")
        # 257 points on [0, 8] land exactly on breakpoints like 0.25
        g = uniform_grid((0.0, 8.0), 257, p)
        bps = p.breakpoints_1d(0)
        assert np.min(np.abs(g[:, 0][:, None] - bps[None, :])) > 0.0

    def test_2d_shape(self):
        g = uniform_grid([(-1, 1), (0, 2)], (3, 5))
        assert g.shape == (15, 2)
