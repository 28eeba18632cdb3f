"""Linear encoders: forward, analytic backward, EMA shadow, checkpoints."""

import numpy as np
import pytest

from pest.encoders import LinearEncoder, MomentumEncoder
from pest.exceptions import (
    ConfigError,
    CorruptFileError,
    DimensionMismatchError,
    FormatVersionError,
    ZeroNormError,
)


def _small_encoder():
    weight = np.array([[1.0, 0.0], [0.0, 1.0]])
    return LinearEncoder(weight, np.zeros(2), "image")


class TestForward:
    def test_identity_weight_normalizes(self):
        enc = _small_encoder()
        np.testing.assert_allclose(enc.encode([3.0, 4.0]), [0.6, 0.8], atol=1e-15)

    def test_bias_only_output(self):
        enc = LinearEncoder(np.zeros((2, 2)), [1.0, 0.0], "image")
        np.testing.assert_array_equal(enc.encode([5.0, -2.0]), [1.0, 0.0])

    def test_affine_then_normalize(self):
        enc = LinearEncoder(np.array([[1.0, 0.0], [0.0, 1.0]]), [1.0, 0.0], "image")
        np.testing.assert_allclose(
            enc.encode([1.0, 1.0]), np.array([2.0, 1.0]) / np.sqrt(5.0), atol=1e-15
        )

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        enc = LinearEncoder(rng.normal(size=(4, 3)), rng.normal(size=4), "image")
        X = rng.normal(size=(8, 3))
        Z = enc.encode_batch(X)
        for i in range(8):
            np.testing.assert_allclose(Z[i], enc.encode(X[i]), atol=1e-15)

    def test_outputs_unit_norm(self):
        rng = np.random.default_rng(1)
        enc = LinearEncoder(rng.normal(size=(5, 3)), rng.normal(size=5), "text")
        Z = enc.encode_batch(rng.normal(size=(20, 3)))
        np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)

    def test_zero_output_rejected(self):
        enc = LinearEncoder(np.zeros((2, 2)), np.zeros(2), "image")
        with pytest.raises(ZeroNormError):
            enc.encode([1.0, 1.0])

    def test_wrong_input_dim_rejected(self):
        enc = _small_encoder()
        with pytest.raises(DimensionMismatchError):
            enc.encode([1.0, 2.0, 3.0])


class TestConstruction:
    def test_out_dim_one_rejected(self):
        with pytest.raises(ConfigError):
            LinearEncoder(np.ones((1, 3)), np.zeros(1), "image")

    def test_bad_role_rejected(self):
        with pytest.raises(ConfigError):
            LinearEncoder(np.ones((2, 2)), np.zeros(2), "audio")

    def test_initialize_bound_and_zero_bias(self):
        rng = np.random.default_rng(2)
        enc = LinearEncoder.initialize(16, 8, "image", rng)
        bound = 1.0 / 4.0
        assert np.all(np.abs(enc.weight) <= bound)
        np.testing.assert_array_equal(enc.bias, np.zeros(8))
        assert enc.role == "image"

    def test_copy_is_independent(self):
        enc = _small_encoder()
        dup = enc.copy()
        dup.weight[0, 0] = 99.0
        assert enc.weight[0, 0] == 1.0

    def test_params_are_live_views(self):
        enc = _small_encoder()
        enc.params()["weight"][0, 0] = 7.0
        assert enc.weight[0, 0] == 7.0

    def test_param_hash_tracks_bits(self):
        enc = _small_encoder()
        h0 = enc.param_hash()
        assert h0 == enc.copy().param_hash()
        enc.weight[0, 0] += 1e-300
        assert enc.param_hash() != h0


class TestBackward:
    def test_gradient_matches_finite_differences(self):
        """Loss = u . encode(x) for random u; parameter grads checked by FD."""
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(10):
            in_dim, out_dim = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            enc = LinearEncoder(rng.normal(size=(out_dim, in_dim)), rng.normal(size=out_dim), "image")
            x = rng.normal(size=in_dim)
            up = rng.normal(size=out_dim)
            grad = enc.encode_backward(x, up)

            def loss_at(weight, bias):
                probe = LinearEncoder(weight, bias, "image")
                return float(up @ probe.encode(x))

            for idx in np.ndindex(enc.weight.shape):
                Wp, Wm = enc.weight.copy(), enc.weight.copy()
                Wp[idx] += h
                Wm[idx] -= h
                fd = (loss_at(Wp, enc.bias) - loss_at(Wm, enc.bias)) / (2 * h)
                assert grad.d_weight[idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)
            for j in range(out_dim):
                bp, bm = enc.bias.copy(), enc.bias.copy()
                bp[j] += h
                bm[j] -= h
                fd = (loss_at(enc.weight, bp) - loss_at(enc.weight, bm)) / (2 * h)
                assert grad.d_bias[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_zero_input_gives_zero_weight_grad(self):
        """x = 0 still has bias gradient but no weight gradient."""
        enc = LinearEncoder(np.eye(2), [1.0, 1.0], "image")
        grad = enc.encode_backward([0.0, 0.0], [1.0, -1.0])
        np.testing.assert_array_equal(grad.d_weight, np.zeros((2, 2)))
        assert np.any(grad.d_bias != 0.0)

    def test_upstream_along_output_gives_zero_grad(self):
        """The normalized output is scale-invariant, so radial upstream dies."""
        rng = np.random.default_rng(4)
        enc = LinearEncoder(rng.normal(size=(3, 3)), rng.normal(size=3), "image")
        x = rng.normal(size=3)
        z = enc.encode(x)
        grad = enc.encode_backward(x, z)
        np.testing.assert_allclose(grad.d_weight, 0.0, atol=1e-12)
        np.testing.assert_allclose(grad.d_bias, 0.0, atol=1e-12)

    def test_batch_backward_sums_singles(self):
        rng = np.random.default_rng(5)
        enc = LinearEncoder(rng.normal(size=(4, 3)), rng.normal(size=4), "image")
        X = rng.normal(size=(6, 3))
        Up = rng.normal(size=(6, 4))
        batch = enc.encode_batch_backward(X, Up)
        dW = np.zeros_like(enc.weight)
        db = np.zeros_like(enc.bias)
        for i in range(6):
            g = enc.encode_backward(X[i], Up[i])
            dW += g.d_weight
            db += g.d_bias
        np.testing.assert_allclose(batch.d_weight, dW, atol=1e-12)
        np.testing.assert_allclose(batch.d_bias, db, atol=1e-12)

    def test_batch_size_mismatch_rejected(self):
        enc = _small_encoder()
        with pytest.raises(DimensionMismatchError):
            enc.encode_batch_backward(np.ones((3, 2)), np.ones((2, 2)))


class TestMomentumEncoder:
    def test_starts_as_copy(self):
        enc = _small_encoder()
        shadow = MomentumEncoder.from_online(enc, 0.9)
        assert shadow.encoder.param_hash() == enc.param_hash()
        enc.weight[0, 0] = 5.0
        assert shadow.encoder.weight[0, 0] == 1.0

    def test_update_is_convex_blend(self):
        enc = _small_encoder()
        shadow = MomentumEncoder.from_online(enc, 0.9)
        enc.weight[:] = 2.0
        enc.bias[:] = 1.0
        shadow.update(enc)
        np.testing.assert_allclose(
            shadow.encoder.weight, 0.9 * np.eye(2) + 0.1 * 2.0, atol=1e-15
        )
        np.testing.assert_allclose(shadow.encoder.bias, [0.1, 0.1], atol=1e-15)

    def test_repeated_updates_contract_toward_online(self):
        rng = np.random.default_rng(6)
        enc = LinearEncoder(rng.normal(size=(3, 3)), rng.normal(size=3), "image")
        shadow = MomentumEncoder.from_online(enc, 0.5)
        target = LinearEncoder(rng.normal(size=(3, 3)), rng.normal(size=3), "image")
        gaps = []
        for _ in range(6):
            shadow.update(target)
            gaps.append(float(np.linalg.norm(shadow.encoder.weight - target.weight)))
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_momentum_zero_tracks_exactly(self):
        enc = _small_encoder()
        shadow = MomentumEncoder.from_online(enc, 0.0)
        enc.weight[:] = 3.0
        shadow.update(enc)
        np.testing.assert_array_equal(shadow.encoder.weight, enc.weight)

    def test_momentum_one_rejected(self):
        with pytest.raises(ConfigError):
            MomentumEncoder.from_online(_small_encoder(), 1.0)

    def test_shape_mismatch_rejected(self):
        shadow = MomentumEncoder.from_online(_small_encoder(), 0.9)
        other = LinearEncoder(np.ones((3, 2)), np.zeros(3), "image")
        with pytest.raises(DimensionMismatchError):
            shadow.update(other)


class TestCheckpoint:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        enc = LinearEncoder(rng.normal(size=(5, 3)), rng.normal(size=5), "text")
        path = tmp_path / "enc.json"
        enc.save(path)
        back = LinearEncoder.load(path)
        np.testing.assert_array_equal(back.weight, enc.weight)
        np.testing.assert_array_equal(back.bias, enc.bias)
        assert back.role == "text"
        assert back.param_hash() == enc.param_hash()

    def test_save_is_deterministic(self, tmp_path):
        enc = _small_encoder()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        enc.save(a)
        enc.save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_version_rejected(self, tmp_path):
        enc = _small_encoder()
        path = tmp_path / "enc.json"
        enc.save(path)
        text = path.read_text().replace('"format_version":1', '"format_version":99')
        path.write_text(text)
        with pytest.raises(FormatVersionError):
            LinearEncoder.load(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "enc.json"
        path.write_bytes(b"\x00\x01not json")
        with pytest.raises(CorruptFileError):
            LinearEncoder.load(path)

    def test_wrong_record_kind_rejected(self, tmp_path):
        path = tmp_path / "enc.json"
        path.write_text('{"record": "something-else", "format_version": 1}\n')
        with pytest.raises(CorruptFileError):
            LinearEncoder.load(path)

    def test_dimension_disagreement_rejected(self, tmp_path):
        enc = _small_encoder()
        path = tmp_path / "enc.json"
        enc.save(path)
        text = path.read_text().replace('"in_dim":2', '"in_dim":3')
        path.write_text(text)
        with pytest.raises(CorruptFileError):
            LinearEncoder.load(path)
