import numpy as np
import pytest

from chainfraud.autodiff import Parameter
from chainfraud.errors import NumericError
from chainfraud.optim import AdamW, constant_schedule, linear_warmup_decay


def make_param(value, name="p"):
    p = Parameter(np.asarray(value, dtype=float), name)
    return p


class TestAdamW:
    def test_zero_grad_zero_decay_is_noop(self):
        p = make_param([1.5, -2.0])
        opt = AdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_first_step_hand_value(self):
        # scalar theta=1, g=1, lr=0.1: bias-corrected m_hat=v_hat=1,
        # theta' = 1 - 0.1 / (1 + 1e-8)
        p = make_param([1.0])
        opt = AdamW([p], lr=0.1, weight_decay=0.0)
        p.grad = np.array([1.0])
        opt.step()
        expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
        assert p.data[0] == pytest.approx(expected, abs=1e-15)
        assert p.data[0] == pytest.approx(0.9, abs=1e-8)

    def test_decoupled_decay_only(self):
        p = make_param([4.0])
        opt = AdamW([p], lr=0.1, weight_decay=0.001)
        p.grad = np.array([0.0])
        opt.step()
        assert p.data[0] == pytest.approx(4.0 * (1 - 1e-4), rel=1e-14)

    def test_missing_grad_names_parameter(self):
        p = make_param([1.0], name="encoder.w")
        opt = AdamW([p], lr=0.1)
        with pytest.raises(NumericError, match="encoder.w"):
            opt.step()

    def test_zero_decay_matches_plain_adam_bitwise(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=8)
        grads = [rng.normal(size=8) for _ in range(5)]

        p = make_param(base.copy())
        opt = AdamW([p], lr=0.01, weight_decay=0.0)
        for g in grads:
            p.grad = g
            opt.step()

        # reference Adam loop written independently
        theta = base.copy()
        m = np.zeros(8)
        v = np.zeros(8)
        for t, g in enumerate(grads, start=1):
            m = 0.9 * m + (1 - 0.9) * g
            v = 0.999 * v + (1 - 0.999) * g * g
            m_hat = m / (1 - 0.9 ** t)
            v_hat = v / (1 - 0.999 ** t)
            theta = theta - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_array_equal(p.data, theta)

    def test_raw_update_skips_bias_correction(self):
        p = make_param([1.0])
        opt = AdamW([p], lr=0.1, weight_decay=0.0, bias_correction=False)
        p.grad = np.array([1.0])
        opt.step()
        # m=0.1, v=0.001 -> update = 0.1 * 0.1 / (sqrt(0.001) + 1e-8)
        expected = 1.0 - 0.1 * 0.1 / (np.sqrt(0.001) + 1e-8)
        assert p.data[0] == pytest.approx(expected, rel=1e-14)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            p = make_param(rng.normal(size=4))
            opt = AdamW([p], lr=0.05)
            for _ in range(10):
                p.grad = rng.normal(size=4)
                opt.step()
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())


class TestSchedules:
    def test_constant(self):
        assert all(constant_schedule(s, 100, 10) == 1.0 for s in range(100))

    def test_warmup_origin_and_final_decay(self):
        total, warmup = 200, 20
        assert linear_warmup_decay(0, total, warmup) == 0.0
        assert linear_warmup_decay(total - 1, total, warmup) <= 1e-12

    def test_peak_at_warmup_end(self):
        total, warmup = 100, 10
        values = [linear_warmup_decay(s, total, warmup) for s in range(total)]
        assert max(values) == values[warmup]
        assert values[warmup] == 1.0
        # ramp up then strictly decay
        assert all(a < b for a, b in zip(values[:warmup], values[1:warmup + 1]))
        assert all(a > b for a, b in zip(values[warmup:], values[warmup + 1:]))

    def test_degenerate_totals(self):
        assert linear_warmup_decay(0, 1, 0) == 1.0
        assert linear_warmup_decay(0, 2, 1) == 0.0
        assert linear_warmup_decay(1, 2, 1) == 0.0
