import math

import numpy as np
import pytest

from fewanno import numerics, spectral
from fewanno.errors import DegenerateMatrix, NonSmoothPoint

from conftest import assert_grad_close


def closed_form_ratio(eps):
    # condition number of [[0, 1], [1, -eps]], cross-checked against direct SVD
    root = eps * math.sqrt(eps * eps + 4.0)
    return math.sqrt((2 + eps * eps + root) / (2 + eps * eps - root))


def random_orthogonal(n, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


class TestConditionNumber:
    def test_known_ratio(self):
        assert spectral.condition_number(np.diag([1.0, 0.02])) == pytest.approx(50.0, rel=1e-12)

    def test_orthogonal_is_one(self, rng):
        for n in (2, 3, 5):
            q = random_orthogonal(n, rng)
            assert spectral.condition_number(q) == pytest.approx(1.0, abs=1e-9)

    def test_two_by_two_closed_form(self):
        eps = 0.02
        w = np.array([[0.0, 1.0], [1.0, -eps]])
        assert spectral.condition_number(w) == pytest.approx(closed_form_ratio(eps), rel=1e-12)
        assert spectral.condition_number(w) == pytest.approx(1.0202008, abs=1e-6)

    def test_degenerate(self):
        with pytest.raises(DegenerateMatrix):
            spectral.condition_number(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_scale_invariance(self, rng):
        for _ in range(10):
            w = rng.standard_normal((4, 3))
            k = spectral.condition_number(w)
            for c in (-2.0, 0.1, 30.0):
                assert spectral.condition_number(c * w) == pytest.approx(k, rel=1e-9)

    def test_at_least_one(self, rng):
        for _ in range(20):
            w = rng.standard_normal((rng.integers(2, 7), rng.integers(2, 7)))
            assert spectral.condition_number(w) >= 1.0


class TestSvEntropy:
    def test_uniform_singular_values(self):
        assert spectral.sv_entropy(np.eye(3)) == pytest.approx(-math.log(3), rel=1e-12)

    def test_composed_closed_form(self):
        p = numerics.softmax(np.array([1.0, 0.02]))
        expected = float(np.sum(p * np.log(p)))
        assert spectral.sv_entropy(np.diag([1.0, 0.02])) == pytest.approx(expected, rel=1e-12)

    def test_single_predictor(self, rng):
        w = rng.standard_normal((1, 5))
        assert spectral.sv_entropy(w) == 0.0

    def test_range(self, rng):
        for _ in range(20):
            n, k = rng.integers(2, 7), rng.integers(2, 7)
            w = rng.standard_normal((n, k))
            h = spectral.sv_entropy(w)
            r = min(n, k)
            assert -math.log(r) - 1e-12 <= h <= 0.0


class TestGradConditionNumber:
    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            w = rng.standard_normal((4, 3))
            g = spectral.grad_condition_number(w)
            fd = numerics.finite_diff_grad(spectral.condition_number, w, h=1e-6)
            assert_grad_close(g, fd, rtol=1e-5)

    def test_diagonal_closed_form(self):
        g = spectral.grad_condition_number(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(g, np.diag([1.0, -2.0]), atol=1e-12)

    def test_zero_homogeneity(self, rng):
        w = rng.standard_normal((4, 3))
        g = spectral.grad_condition_number(2.0 * w)
        assert abs(np.sum(g * 2.0 * w)) < 1e-9 * spectral.condition_number(w)

    def test_non_smooth(self):
        with pytest.raises(NonSmoothPoint):
            spectral.grad_condition_number(np.eye(3))


class TestGradSvEntropy:
    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            w = rng.standard_normal((4, 3))
            g = spectral.grad_sv_entropy(w)
            fd = numerics.finite_diff_grad(spectral.sv_entropy, w, h=1e-6)
            assert_grad_close(g, fd, rtol=1e-5)

    def test_equal_singular_values_rejected(self):
        with pytest.raises(NonSmoothPoint):
            spectral.grad_sv_entropy(np.eye(2))

    def test_diagonal_closed_form(self):
        s = np.array([2.0, 1.0])
        p = numerics.softmax(s)
        h = float(np.sum(p * np.log(p)))
        expected = np.diag(p * (np.log(p) - h))
        np.testing.assert_allclose(
            spectral.grad_sv_entropy(np.diag(s)), expected, atol=1e-12
        )


class TestRegularizers:
    def test_zero_weights(self, rng):
        w = rng.standard_normal((3, 3))
        assert spectral.spectral_regularizer(w, 0.0, 0.0) == 0.0
        assert spectral.entropy_regularizer(w, 0.0) == 0.0

    def test_composite_value(self):
        w = np.diag([1.0, 0.02])
        assert spectral.spectral_regularizer(w, 1.0, 1.0) == pytest.approx(51.0004, rel=1e-12)

    def test_identity(self):
        assert spectral.spectral_regularizer(np.eye(2), 1.0, 1.0) == pytest.approx(3.0)
        assert spectral.entropy_regularizer(np.eye(3), 1.0) == pytest.approx(-math.log(3))

    def test_entropy_scaling(self):
        w = np.diag([1.0, 0.02])
        assert spectral.entropy_regularizer(w, 0.1) == pytest.approx(0.1 * spectral.sv_entropy(w))

    def test_zero_weight_skips_degenerate(self):
        w = np.array([[1.0, 2.0], [2.0, 4.0]])
        # lambda1 = 0 must not evaluate the (degenerate) condition number
        assert spectral.spectral_regularizer(w, 0.0, 2.0) == pytest.approx(2.0 * np.sum(w * w))
