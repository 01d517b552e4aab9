import numpy as np
import pytest

from fewanno import geometry, numerics
from fewanno.errors import InvalidInput
from fewanno.geometry import Box, ScoredBox

from conftest import assert_grad_close
from oracles import greedy_nms_reference, naive_iou


def random_box(rng):
    w, h = rng.uniform(0.05, 0.5, size=2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return Box(float(cx), float(cy), float(w), float(h))


A = Box(0.25, 0.25, 0.5, 0.5)
B = Box(0.5, 0.5, 0.5, 0.5)


class TestIou:
    def test_identical(self):
        assert geometry.iou(A, A) == 1.0

    def test_disjoint(self):
        assert geometry.iou(Box(0.1, 0.1, 0.1, 0.1), Box(0.9, 0.9, 0.1, 0.1)) == 0.0

    def test_hand_case(self):
        # intersection 0.0625, union 0.4375
        assert geometry.iou(A, B) == pytest.approx(1.0 / 7.0, rel=1e-12)

    def test_symmetry_and_range(self, rng):
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            v = geometry.iou(a, b)
            assert v == geometry.iou(b, a)
            assert 0.0 <= v <= 1.0


class TestGiou:
    def test_identical(self):
        assert geometry.giou(A, A) == 1.0
        assert geometry.giou_loss(A, A) == 0.0

    def test_hand_case(self):
        expected = 1.0 / 7.0 - (0.5625 - 0.4375) / 0.5625
        assert geometry.giou(A, B) == pytest.approx(expected, rel=1e-12)
        assert geometry.giou(A, B) == pytest.approx(-0.079365, abs=1e-6)

    def test_far_separated_limit(self):
        a = Box(0.005, 0.005, 0.01, 0.01)
        b = Box(0.995, 0.995, 0.01, 0.01)
        v = geometry.giou(a, b)
        assert -1.0 < v < -0.99

    def test_giou_below_iou(self, rng):
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            assert geometry.giou(a, b) <= geometry.iou(a, b) + 1e-15
            assert geometry.giou(a, b) == geometry.giou(b, a)


class TestPairwise:
    def test_single(self):
        np.testing.assert_array_equal(geometry.pairwise_iou([A]), [[1.0]])

    def test_two_disjoint(self):
        m = geometry.pairwise_iou([Box(0.1, 0.1, 0.1, 0.1), Box(0.9, 0.9, 0.1, 0.1)])
        np.testing.assert_array_equal(m, np.eye(2))

    def test_matches_pair_calls(self, rng):
        boxes = [random_box(rng) for _ in range(3)]
        m = geometry.pairwise_iou(boxes)
        for i in range(3):
            for j in range(3):
                assert m[i, j] == pytest.approx(geometry.iou(boxes[i], boxes[j]), rel=1e-12)
        np.testing.assert_allclose(m, m.T)
        np.testing.assert_allclose(np.diag(m), 1.0)


class TestL1:
    def test_identical(self):
        assert geometry.l1_box_loss(A, A) == 0.0

    def test_single_shift(self):
        assert geometry.l1_box_loss(B, Box(0.6, 0.5, 0.5, 0.5)) == pytest.approx(0.1)

    def test_all_coords(self):
        b2 = Box(0.55, 0.55, 0.55, 0.55)
        assert geometry.l1_box_loss(B, b2) == pytest.approx(0.2)


class TestNms:
    def test_duplicate_suppression(self):
        cands = [ScoredBox(A, 0.8, 0), ScoredBox(A, 0.9, 0)]
        assert geometry.nms(cands, 0.5) == [1]

    def test_disjoint_kept(self):
        cands = [
            ScoredBox(Box(0.1, 0.1, 0.1, 0.1), 0.9, 0),
            ScoredBox(Box(0.9, 0.9, 0.1, 0.1), 0.8, 0),
        ]
        assert geometry.nms(cands, 0.5) == [0, 1]

    def test_class_aware(self):
        cands = [ScoredBox(A, 0.9, 0), ScoredBox(A, 0.8, 1)]
        assert geometry.nms(cands, 0.5) == [0, 1]

    def test_against_reference(self, rng):
        for _ in range(20):
            boxes = [random_box(rng) for _ in range(5)]
            scores = rng.uniform(0, 1, size=5).tolist()
            classes = rng.integers(0, 2, size=5).tolist()
            cands = [ScoredBox(b, s, c) for b, s, c in zip(boxes, scores, classes)]
            expected = greedy_nms_reference(
                [b.as_array() for b in boxes], scores, classes, 0.4
            )
            assert geometry.nms(cands, 0.4) == expected

    def test_threshold_one_keeps_all(self, rng):
        cands = [ScoredBox(random_box(rng), float(s), 0) for s in rng.uniform(0, 1, 6)]
        kept = geometry.nms(cands, 1.0)
        assert sorted(kept) == list(range(6))
        scores = [cands[i].score for i in kept]
        assert scores == sorted(scores, reverse=True)

    def test_bad_threshold(self):
        with pytest.raises(InvalidInput):
            geometry.nms([ScoredBox(A, 0.5, 0)], 0.0)


class TestValidation:
    def test_zero_area_rejected(self):
        with pytest.raises(InvalidInput):
            Box(0.5, 0.5, 0.0, 0.1)

    def test_center_out_of_range(self):
        with pytest.raises(InvalidInput):
            Box(1.5, 0.5, 0.1, 0.1)

    def test_score_range(self):
        with pytest.raises(InvalidInput):
            ScoredBox(A, 1.5, 0)


class TestBoxGradients:
    def test_l1_grad(self, rng):
        for _ in range(10):
            a, b = random_box(rng).as_array(), random_box(rng).as_array()
            ga, gb = geometry.l1_box_grad(a, b)
            fa = numerics.finite_diff_grad(lambda x: geometry.l1_box_loss(x, b), a, h=1e-7)
            fb = numerics.finite_diff_grad(lambda x: geometry.l1_box_loss(a, x), b, h=1e-7)
            assert_grad_close(ga, fa, rtol=1e-5)
            assert_grad_close(gb, fb, rtol=1e-5)

    def test_giou_grad_overlapping(self, rng):
        for _ in range(20):
            a, b = random_box(rng).as_array(), random_box(rng).as_array()
            ga, gb = geometry.giou_loss_grad(a, b)
            fa = numerics.finite_diff_grad(lambda x: geometry.giou_loss(x, b), a, h=1e-7)
            fb = numerics.finite_diff_grad(lambda x: geometry.giou_loss(a, x), b, h=1e-7)
            assert_grad_close(ga, fa, rtol=1e-4, atol=1e-6)
            assert_grad_close(gb, fb, rtol=1e-4, atol=1e-6)

    def test_giou_grad_disjoint_and_nested(self):
        pairs = [
            (np.array([0.2, 0.2, 0.1, 0.1]), np.array([0.8, 0.8, 0.1, 0.1])),
            (np.array([0.5, 0.5, 0.6, 0.6]), np.array([0.5, 0.45, 0.1, 0.1])),
        ]
        for a, b in pairs:
            ga, gb = geometry.giou_loss_grad(a, b)
            fa = numerics.finite_diff_grad(lambda x: geometry.giou_loss(x, b), a, h=1e-7)
            fb = numerics.finite_diff_grad(lambda x: geometry.giou_loss(a, x), b, h=1e-7)
            assert_grad_close(ga, fa, rtol=1e-4, atol=1e-6)
            assert_grad_close(gb, fb, rtol=1e-4, atol=1e-6)

    def test_zero_grad_at_identity(self):
        a = A.as_array()
        ga, gb = geometry.giou_loss_grad(a, a)
        np.testing.assert_array_equal(ga, np.zeros(4))
        np.testing.assert_array_equal(gb, np.zeros(4))

    def test_naive_iou_agreement(self, rng):
        for _ in range(30):
            a, b = random_box(rng), random_box(rng)
            assert geometry.iou(a, b) == pytest.approx(
                naive_iou(a.as_array(), b.as_array()), rel=1e-12
            )
