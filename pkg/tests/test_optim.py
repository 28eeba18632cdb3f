"""AdamW update math and the cosine learning-rate schedule."""

import math

import numpy as np
import pytest

from pest.exceptions import ConfigError, DimensionMismatchError, StepOutOfRangeError
from pest.optim import AdamW, CosineSchedule


class TestCosineSchedule:
    def test_endpoints(self):
        sched = CosineSchedule(base_lr=0.1, total_steps=10, min_lr=0.01)
        assert sched.lr_at(0) == pytest.approx(0.1, abs=1e-15)
        assert sched.lr_at(10) == pytest.approx(0.01, abs=1e-15)

    def test_midpoint_is_mean(self):
        sched = CosineSchedule(base_lr=0.2, total_steps=8, min_lr=0.0)
        assert sched.lr_at(4) == pytest.approx(0.1, abs=1e-15)

    def test_monotone_nonincreasing(self):
        sched = CosineSchedule(base_lr=1.0, total_steps=50, min_lr=0.05)
        lrs = [sched.lr_at(s) for s in range(51)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert all(0.05 <= lr <= 1.0 for lr in lrs)

    def test_closed_form(self):
        sched = CosineSchedule(base_lr=0.3, total_steps=7, min_lr=0.02)
        for step in range(8):
            expected = 0.02 + 0.5 * (0.3 - 0.02) * (1 + math.cos(math.pi * step / 7))
            assert sched.lr_at(step) == pytest.approx(expected, abs=1e-15)

    def test_step_out_of_range(self):
        sched = CosineSchedule(base_lr=0.1, total_steps=5)
        with pytest.raises(StepOutOfRangeError):
            sched.lr_at(6)
        with pytest.raises(StepOutOfRangeError):
            sched.lr_at(-1)

    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigError):
            CosineSchedule(base_lr=0.0, total_steps=5)
        with pytest.raises(ConfigError):
            CosineSchedule(base_lr=0.1, total_steps=0)
        with pytest.raises(ConfigError):
            CosineSchedule(base_lr=0.1, total_steps=5, min_lr=0.2)


def _reference_adamw(params, grad_steps, lr, beta1, beta2, eps, wd):
    """Straight-line reimplementation used as the oracle, plain Python floats."""
    p = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(val) for k, val in params.items()}
    t = 0
    for grads in grad_steps:
        t += 1
        for name in p:
            g = grads[name]
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            mhat = m[name] / (1 - beta1**t)
            vhat = v[name] / (1 - beta2**t)
            p[name] = p[name] - lr * (mhat / (np.sqrt(vhat) + eps) + wd * p[name])
    return p


class TestAdamW:
    def test_decay_only_step(self):
        """Zero gradient still shrinks the parameter by lr * wd * p."""
        opt = AdamW(lr=0.1, weight_decay=0.05)
        params = {"w": np.array([1.0])}
        opt.apply(params, {"w": np.array([0.0])})
        assert params["w"][0] == pytest.approx(0.995, abs=1e-15)

    def test_first_step_is_signed_lr(self):
        """With fresh moments the update magnitude is ~lr regardless of |g|."""
        for g in (1e-4, 1.0, 1e4):
            opt = AdamW(lr=1e-3, weight_decay=0.0)
            params = {"w": np.array([0.0])}
            opt.apply(params, {"w": np.array([g])})
            assert params["w"][0] == pytest.approx(-1e-3, rel=1e-3)

    def test_matches_reference_trace(self):
        """Several steps over two parameter arrays match the oracle to 1e-12."""
        rng = np.random.default_rng(0)
        params = {
            "weight": rng.normal(size=(3, 2)),
            "bias": rng.normal(size=3),
        }
        grad_steps = [
            {"weight": rng.normal(size=(3, 2)), "bias": rng.normal(size=3)}
            for _ in range(7)
        ]
        expected = _reference_adamw(
            params, grad_steps, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, wd=0.05
        )
        opt = AdamW(lr=0.01, weight_decay=0.05)
        live = {k: v.copy() for k, v in params.items()}
        for grads in grad_steps:
            opt.apply(live, grads)
        np.testing.assert_allclose(live["weight"], expected["weight"], atol=1e-12)
        np.testing.assert_allclose(live["bias"], expected["bias"], atol=1e-12)

    def test_per_call_lr_override(self):
        opt_a = AdamW(lr=0.5)
        opt_b = AdamW(lr=0.01)
        pa = {"w": np.array([1.0])}
        pb = {"w": np.array([1.0])}
        g = {"w": np.array([0.3])}
        opt_a.apply(pa, g, lr=0.01)
        opt_b.apply(pb, g)
        np.testing.assert_array_equal(pa["w"], pb["w"])

    def test_updates_in_place(self):
        opt = AdamW(lr=0.1)
        arr = np.array([1.0, 2.0])
        params = {"w": arr}
        opt.apply(params, {"w": np.array([0.1, -0.2])})
        assert params["w"] is arr

    def test_state_keyed_by_name(self):
        """Moments persist across calls; a second step differs from a first."""
        opt = AdamW(lr=0.1, weight_decay=0.0)
        params = {"w": np.array([0.0])}
        g = {"w": np.array([1.0])}
        opt.apply(params, g)
        first = params["w"][0]
        opt.apply(params, g)
        second = params["w"][0] - first
        assert first != second
        assert opt.step == 2

    def test_name_mismatch_rejected(self):
        opt = AdamW()
        with pytest.raises(DimensionMismatchError):
            opt.apply({"w": np.array([1.0])}, {"b": np.array([1.0])})

    def test_shape_mismatch_rejected(self):
        opt = AdamW()
        with pytest.raises(DimensionMismatchError):
            opt.apply({"w": np.array([1.0])}, {"w": np.array([1.0, 2.0])})

    def test_bad_hyperparameters_rejected(self):
        with pytest.raises(ConfigError):
            AdamW(lr=-1.0)
        with pytest.raises(ConfigError):
            AdamW(beta1=1.0)
        with pytest.raises(ConfigError):
            AdamW(eps=0.0)
        with pytest.raises(ConfigError):
            AdamW(weight_decay=-0.1)
