import math

import numpy as np
import pytest

from gatednet.data import DataSplit, LabeledImage
from gatednet.errors import LabelError, ShapeError
from gatednet.ndcore import RngStream
from gatednet.nn import MlpConfig
from gatednet.optim import (
    GradCheckReport,
    RmspropState,
    finite_diff_check,
    max_relative_error,
    nll_loss,
    numeric_gradient,
    rmsprop_step,
)
from gatednet.train import TrainSchedule, train_base, validate


class TestNllLoss:
    def test_perfect_prediction(self):
        logp = np.full((2, 10), -50.0, np.float32)
        logp[0, 3] = 0.0
        logp[1, 7] = 0.0
        loss, _ = nll_loss(logp, np.array([3, 7]))
        assert loss == 0.0

    def test_uniform_rows(self):
        logp = np.full((4, 10), -math.log(10.0), np.float32)
        loss, _ = nll_loss(logp, np.array([0, 3, 5, 9]))
        assert loss == pytest.approx(math.log(10.0), rel=1e-6)

    def test_hand_mean(self):
        logp = np.full((2, 3), -9.0, np.float32)
        logp[0, 1] = -1.0
        logp[1, 2] = -3.0
        loss, grad = nll_loss(logp, np.array([1, 2]))
        assert loss == pytest.approx(2.0)
        expected = np.zeros((2, 3), np.float32)
        expected[0, 1] = -0.5
        expected[1, 2] = -0.5
        assert np.array_equal(grad, expected)

    def test_gradient_mass_per_row(self):
        rng = RngStream(0)
        logp = rng.uniform((6, 10), -4, 0)
        labels = np.arange(6)
        _, grad = nll_loss(logp, labels)
        np.testing.assert_allclose(grad.sum(axis=1), -1.0 / 6.0, rtol=1e-6)
        assert np.count_nonzero(grad) == 6

    def test_out_of_range_label_names_row(self):
        with pytest.raises(LabelError, match="row 1"):
            nll_loss(np.zeros((2, 10), np.float32), np.array([0, 10]))


class TestRmsprop:
    def test_zero_gradient_is_identity(self):
        p = np.array([1.0, -2.0], np.float32)
        state = RmspropState.init([p])
        rmsprop_step([p], [np.zeros(2, np.float32)], state)
        assert np.array_equal(p, np.array([1.0, -2.0], np.float32))
        assert np.all(state.v[0] == 0)

    def test_hand_computed_first_step(self):
        p = np.zeros(1, np.float32)
        g = np.ones(1, np.float32)
        state = RmspropState.init([p], lr=1e-2, rho=0.99, eps=1e-8)
        rmsprop_step([p], [g], state)
        assert state.v[0][0] == pytest.approx(0.01, rel=1e-6)
        assert p[0] == pytest.approx(-0.09999999, abs=1e-7)

    def test_two_steps_match_scalar_reference(self):
        lr, rho, eps = np.float32(0.05), np.float32(0.9), np.float32(1e-8)
        theta, v = np.float32(0.5), np.float32(0.0)
        grads = [np.float32(0.3), np.float32(-0.2)]
        for g in grads:
            v = rho * v + (np.float32(1.0) - rho) * (g * g)
            theta = theta - lr * g / (np.float32(np.sqrt(v)) + eps)

        p = np.array([0.5], np.float32)
        state = RmspropState.init([p], lr=0.05, rho=0.9, eps=1e-8)
        for g in grads:
            rmsprop_step([p], [np.array([g], np.float32)], state)
        assert p[0] == pytest.approx(float(theta), rel=1e-6)

    def test_constant_gradient_update_magnitude_approaches_lr(self):
        p = np.zeros(3, np.float32)
        g = np.array([0.5, -2.0, 7.0], np.float32)
        state = RmspropState.init([p], lr=1e-2, rho=0.99, eps=1e-8)
        prev = p.copy()
        for _ in range(500):
            prev = p.copy()
            rmsprop_step([p], [g], state)
        step = np.abs(p - prev)
        np.testing.assert_allclose(step, 1e-2, rtol=0.01)
        assert np.array_equal(np.sign(prev - p), np.sign(g))

    def test_deterministic(self):
        def run():
            p = np.array([1.0, 2.0], np.float32)
            state = RmspropState.init([p])
            for i in range(10):
                rmsprop_step([p], [np.array([0.1 * i, -0.2], np.float32)], state)
            return p

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        p = np.zeros(2, np.float32)
        state = RmspropState.init([p])
        with pytest.raises(ShapeError):
            rmsprop_step([p], [np.zeros(3, np.float32)], state)
        with pytest.raises(ShapeError):
            rmsprop_step([p], [], state)


class TestFiniteDiffCheck:
    def test_toy_gated_network_passes(self):
        report = finite_diff_check()
        assert report.passed(1e-3)
        for key in ("dense0.w", "gate0.b", "relu", "log_softmax", "nll"):
            assert key in report.entries
            assert report.entries[key] < 1e-3

    def test_corrupted_gradient_is_flagged(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 8)
        up = rng.uniform(-1, 1, 8)
        numeric = numeric_gradient(lambda: float((up * x * x).sum()), x)
        analytic = 2 * up * x
        assert max_relative_error(analytic, numeric) < 1e-6
        assert max_relative_error(analytic + 1e-2, numeric) > 1e-3

    def test_report_lines(self):
        report = GradCheckReport(entries={"dense": 1e-9, "gate": 5e-2})
        lines = report.lines(1e-3)
        assert any("ok" in line for line in lines)
        assert any("FAIL" in line for line in lines)
        assert not report.passed(1e-3)


class TestOverfitSanity:
    def test_small_subset_is_memorized(self, synth_data):
        # 32 fixed samples; loss on that training subset must dive under
        # 0.05 inside 2000 updates (evaluated without dropout).
        train, _ = synth_data
        subset = train[:32]
        split = DataSplit(train=subset, val=subset)
        schedule = TrainSchedule(
            epochs_base=2000, epochs_gates=1, batch_size=32, val_interval_updates=100
        )
        config = MlpConfig()
        params, stats, curve = train_base(split, config, schedule, RngStream(0).child("b"))
        assert curve.min_val_loss("base") < 0.05
        steps = [r.step for r in curve.series("base", "val")]
        assert max(steps) <= 2000
