"""Vector primitives: normalization, dot, tempered softmax cross-entropy."""

import numpy as np
import pytest

from pest.exceptions import (
    BadLabelError,
    DimensionMismatchError,
    NonPositiveTemperatureError,
    ZeroNormError,
)
from pest.linalg import (
    dot,
    l2_normalize,
    l2_normalize_rows,
    softmax_cross_entropy,
    softmax_cross_entropy_batch,
)


class TestNormalize:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.normal(size=rng.integers(2, 16))
            out = l2_normalize(v)
            assert np.isclose(np.linalg.norm(out), 1.0, atol=1e-12)

    def test_known_value(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)

    def test_direction_preserved(self):
        v = np.array([2.0, -1.0, 2.0])
        out = l2_normalize(v)
        np.testing.assert_allclose(out * np.linalg.norm(v), v, atol=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroNormError):
            l2_normalize([0.0, 0.0])

    def test_tiny_norm_rejected(self):
        with pytest.raises(ZeroNormError):
            l2_normalize([1e-13, 0.0])

    def test_does_not_mutate_input(self):
        v = np.array([3.0, 4.0])
        l2_normalize(v)
        np.testing.assert_array_equal(v, [3.0, 4.0])

    def test_rows_match_single(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(10, 5))
        rows = l2_normalize_rows(X)
        for i in range(10):
            np.testing.assert_allclose(rows[i], l2_normalize(X[i]), rtol=1e-14, atol=0)

    def test_rows_zero_row_rejected(self):
        X = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ZeroNormError):
            l2_normalize_rows(X)


class TestDot:
    def test_known_value(self):
        assert dot([1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            dot([1.0, 2.0], [1.0, 2.0, 3.0])


class TestSoftmaxCrossEntropy:
    def test_two_way_tie(self):
        """Equal logits split the softmax evenly: loss is ln 2 exactly."""
        loss, grad = softmax_cross_entropy([1.0, 1.0], 0)
        assert loss == pytest.approx(np.log(2.0), abs=1e-15)
        np.testing.assert_allclose(grad, [-0.5, 0.5], atol=1e-15)

    def test_unit_gap_value(self):
        """Logit gap of one: loss is ln(1 + e^-1)."""
        loss, _ = softmax_cross_entropy([1.0, 0.0], 0)
        assert loss == pytest.approx(0.31326168751822286, abs=1e-16)

    def test_loss_positive_unless_certain(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            z = rng.normal(size=rng.integers(2, 8))
            label = int(rng.integers(0, z.shape[0]))
            loss, _ = softmax_cross_entropy(z, label)
            assert loss > 0.0

    def test_saturated_loss_keeps_leading_digits(self):
        """A huge winning margin leaves a tiny but exactly nonzero loss."""
        loss, _ = softmax_cross_entropy([100.0, 0.0], 0)
        assert 0.0 < loss < 1e-40
        assert loss == pytest.approx(np.exp(-100.0), rel=1e-12)

    def test_deeply_saturated_loss_still_nonzero(self):
        loss, _ = softmax_cross_entropy([700.0, 0.0], 0)
        assert 0.0 < loss < 1e-300

    def test_temperature_scales_logits(self):
        z = [0.4, -0.3, 0.1]
        loss_t, _ = softmax_cross_entropy(z, 1, temperature=0.5)
        loss_scaled, _ = softmax_cross_entropy([v / 0.5 for v in z], 1)
        assert loss_t == pytest.approx(loss_scaled, rel=1e-14)

    def test_gradient_sums_to_zero(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            z = rng.normal(size=rng.integers(2, 8))
            label = int(rng.integers(0, z.shape[0]))
            t = float(rng.uniform(0.05, 2.0))
            _, grad = softmax_cross_entropy(z, label, t)
            assert abs(float(np.sum(grad))) < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        h = 1e-6
        for _ in range(50):
            z = rng.normal(size=rng.integers(2, 8))
            label = int(rng.integers(0, z.shape[0]))
            t = float(rng.uniform(0.2, 2.0))
            _, grad = softmax_cross_entropy(z, label, t)
            for j in range(z.shape[0]):
                zp, zm = z.copy(), z.copy()
                zp[j] += h
                zm[j] -= h
                lp, _ = softmax_cross_entropy(zp, label, t)
                lm, _ = softmax_cross_entropy(zm, label, t)
                fd = (lp - lm) / (2 * h)
                assert grad[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_bad_label_rejected(self):
        with pytest.raises(BadLabelError):
            softmax_cross_entropy([1.0, 2.0], 2)
        with pytest.raises(BadLabelError):
            softmax_cross_entropy([1.0, 2.0], -1)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(NonPositiveTemperatureError):
            softmax_cross_entropy([1.0, 2.0], 0, temperature=0.0)
        with pytest.raises(NonPositiveTemperatureError):
            softmax_cross_entropy([1.0, 2.0], 0, temperature=-1.0)


class TestSoftmaxCrossEntropyBatch:
    def test_matches_scalar_rowwise(self):
        """The batch path reproduces the scalar path bit for bit."""
        rng = np.random.default_rng(5)
        for _ in range(20):
            n, k = int(rng.integers(1, 6)), int(rng.integers(2, 8))
            Z = rng.normal(size=(n, k)) * rng.uniform(0.1, 50.0)
            y = rng.integers(0, k, size=n)
            t = float(rng.uniform(0.05, 2.0))
            losses, grads = softmax_cross_entropy_batch(Z, y, t)
            for i in range(n):
                loss_i, grad_i = softmax_cross_entropy(Z[i], int(y[i]), t)
                assert losses[i] == loss_i
                np.testing.assert_array_equal(grads[i], grad_i)

    def test_saturated_rows_match_scalar(self):
        Z = np.array([[100.0, 0.0], [0.0, 100.0], [1.0, 1.0]])
        y = np.array([0, 1, 0])
        losses, _ = softmax_cross_entropy_batch(Z, y)
        assert 0.0 < losses[0] < 1e-40
        assert 0.0 < losses[1] < 1e-40
        assert losses[2] == pytest.approx(np.log(2.0), abs=1e-15)

    def test_label_range_checked(self):
        with pytest.raises(BadLabelError):
            softmax_cross_entropy_batch([[1.0, 2.0]], [2])
