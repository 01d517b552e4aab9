import math

import numpy as np
import pytest

from fewanno import numerics
from fewanno.errors import InvalidInput, NumericalError, ShapeError

from conftest import assert_grad_close
from oracles import naive_n_mode_product


class TestSvd:
    def test_diagonal(self):
        res = numerics.svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(res.singular_values, [3.0, 1.0])

    def test_identity(self):
        res = numerics.svd(np.eye(4))
        np.testing.assert_allclose(res.singular_values, np.ones(4))

    def test_reconstruction_5x3(self, rng):
        m = rng.standard_normal((5, 3))
        u, s, v = numerics.svd(m)
        err = np.linalg.norm(u @ np.diag(s) @ v.T - m) / np.linalg.norm(m)
        assert err < 1e-9

    @pytest.mark.parametrize("shape", [(8, 8), (64, 16), (256, 64), (16, 64)])
    def test_reconstruction_larger(self, shape, rng):
        m = rng.standard_normal(shape)
        u, s, v = numerics.svd(m)
        assert np.linalg.norm(u @ np.diag(s) @ v.T - m) / np.linalg.norm(m) < 1e-9

    def test_descending_and_orthonormal(self, rng):
        m = rng.standard_normal((7, 4))
        u, s, v = numerics.svd(m)
        assert np.all(np.diff(s) <= 0)
        np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-9)
        np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-9)

    def test_scaling_property(self, rng):
        m = rng.standard_normal((6, 5))
        s = numerics.svd(m).singular_values
        for c in (-3.0, 0.5, 7.25):
            np.testing.assert_allclose(
                numerics.svd(c * m).singular_values, abs(c) * s, rtol=1e-12
            )

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInput):
            numerics.svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            numerics.svd(np.zeros((0, 3)))


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(numerics.softmax([0.0, 0.0]), [0.5, 0.5])

    def test_constant_vector(self):
        for tau in (0.1, 1.0, 7.0):
            np.testing.assert_allclose(
                numerics.softmax([2.5, 2.5, 2.5], tau), np.full(3, 1 / 3), rtol=1e-15
            )

    def test_closed_form(self):
        e = math.e
        np.testing.assert_allclose(
            numerics.softmax([1.0, 0.0]), [e / (e + 1), 1 / (e + 1)], rtol=1e-12
        )

    def test_sum_and_shift_invariance(self, rng):
        for _ in range(20):
            v = rng.standard_normal(rng.integers(2, 9)) * 10
            p = numerics.softmax(v, 0.7)
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all(p > 0)
            np.testing.assert_allclose(numerics.softmax(v + 3.17, 0.7), p, rtol=1e-12)

    def test_bad_temperature(self):
        for tau in (0.0, -1.0, np.nan):
            with pytest.raises(InvalidInput):
                numerics.softmax([1.0, 2.0], tau)


class TestNModeProduct:
    def test_identity_all_modes(self, rng):
        t = rng.standard_normal((2, 3, 4))
        for mode, dim in ((1, 2), (2, 3), (3, 4)):
            np.testing.assert_array_equal(numerics.n_mode_product(t, np.eye(dim), mode), t)

    def test_shape_contract(self, rng):
        t = rng.standard_normal((2, 3, 4))
        m = rng.standard_normal((5, 3))
        assert numerics.n_mode_product(t, m, 2).shape == (2, 5, 4)

    @pytest.mark.parametrize("mode,rows", [(1, 4), (2, 2), (3, 5)])
    def test_matches_triple_loop(self, mode, rows, rng):
        t = rng.standard_normal((2, 3, 4))
        m = rng.standard_normal((rows, t.shape[mode - 1]))
        np.testing.assert_allclose(
            numerics.n_mode_product(t, m, mode), naive_n_mode_product(t, m, mode), atol=1e-12
        )

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            numerics.n_mode_product(rng.standard_normal((2, 3, 4)), rng.standard_normal((5, 4)), 2)

    def test_bad_mode(self, rng):
        with pytest.raises(InvalidInput):
            numerics.n_mode_product(rng.standard_normal((2, 3, 4)), np.eye(2), 0)


class TestKronVec:
    def test_kron_identities(self):
        np.testing.assert_array_equal(numerics.kron(np.eye(2), np.eye(3)), np.eye(6))
        np.testing.assert_array_equal(
            numerics.kron([[1.0, 2.0]], [[3.0], [4.0]]), [[3.0, 6.0], [4.0, 8.0]]
        )
        np.testing.assert_array_equal(numerics.kron([[0.0]], [[5.0, 1.0]]), [[0.0, 0.0]])

    def test_vec_ordering(self):
        t = np.array([[[1.0, 2.0, 3.0]]])
        np.testing.assert_array_equal(numerics.vec(t), [1.0, 2.0, 3.0])
        t = np.array([[[1.0, 2.0]], [[3.0, 4.0]]])  # dims (2, 1, 2)
        np.testing.assert_array_equal(numerics.vec(t), [1.0, 2.0, 3.0, 4.0])

    @pytest.mark.parametrize("dims", [(2, 3, 2), (2, 3, 4), (3, 2, 2)])
    def test_kron_vec_identity(self, dims, rng):
        d1, d2, d3 = dims
        for _ in range(10):
            g = rng.standard_normal(dims)
            m_o = rng.standard_normal((d1, d1))
            m_i = rng.standard_normal((d2, d2))
            m_f = rng.standard_normal((d3, d3))
            seq = numerics.n_mode_product(g, m_f, 3)
            seq = numerics.n_mode_product(seq, m_i, 2)
            seq = numerics.n_mode_product(seq, m_o, 1)
            mo_hat = numerics.kron(numerics.kron(m_o, np.eye(d2)), np.eye(d3))
            mi_hat = numerics.kron(numerics.kron(np.eye(d1), m_i), np.eye(d3))
            mf_hat = numerics.kron(numerics.kron(np.eye(d1), np.eye(d2)), m_f)
            lhs = mo_hat @ mi_hat @ mf_hat @ numerics.vec(g)
            assert np.max(np.abs(lhs - numerics.vec(seq))) < 1e-10


class TestFiniteDiff:
    def test_quadratic(self):
        g = numerics.finite_diff_grad(lambda x: float(x @ x), np.array([1.0, 2.0]), h=1e-5)
        assert_grad_close(g, [2.0, 4.0], rtol=1e-6)

    def test_constant(self):
        g = numerics.finite_diff_grad(lambda x: 3.5, np.array([0.3, -2.0, 1.0]))
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_product(self):
        g = numerics.finite_diff_grad(lambda x: float(x[0] * x[1]), np.array([3.0, 5.0]), h=1e-5)
        assert_grad_close(g, [5.0, 3.0], rtol=1e-6)

    def test_matrix_argument(self, rng):
        a = rng.standard_normal((2, 3))
        g = numerics.finite_diff_grad(lambda m: float(np.sum(m * m)), a, h=1e-6)
        assert_grad_close(g, 2 * a, rtol=1e-6)

    def test_non_finite_function(self):
        with pytest.raises(NumericalError):
            numerics.finite_diff_grad(lambda x: float("nan"), np.array([1.0]))

    def test_bad_step(self):
        with pytest.raises(InvalidInput):
            numerics.finite_diff_grad(lambda x: 0.0, np.array([1.0]), h=0.0)
