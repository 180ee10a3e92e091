"""AdamW decoupled decay semantics and one-cycle schedule boundaries."""

import numpy as np
import pytest

from gazereg.optim import AdamW, OneCycleSchedule, one_cycle_rate
from gazereg.tensor import Tensor


def param(value):
    return Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)


def test_zero_grad_decay_only():
    p = param([1.0])
    opt = AdamW({"p": p}, lr=0.01, weight_decay=0.01)
    p.grad = np.zeros(1)
    opt.step()
    np.testing.assert_allclose(p.data, [0.9999], rtol=1e-12)


def test_no_decay_no_grad_is_noop():
    p = param([1.0])
    opt = AdamW({"p": p}, lr=0.01, weight_decay=0.0)
    p.grad = np.zeros(1)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0])


def test_first_step_bias_corrected():
    p = param([0.0])
    opt = AdamW({"p": p}, lr=0.01, weight_decay=0.0)
    p.grad = np.ones(1)
    opt.step()
    # bias-corrected m-hat = v-hat = 1 at step 1, so update = -lr/(1+eps)
    np.testing.assert_allclose(p.data, [-0.01], atol=1e-9)


def test_frozen_param_untouched():
    frozen = Tensor(np.ones(3), requires_grad=False)
    live = param(np.ones(3))
    opt = AdamW({"frozen": frozen, "live": live}, lr=0.1, weight_decay=0.1)
    live.grad = np.ones(3)
    opt.step()
    np.testing.assert_array_equal(frozen.data, np.ones(3))
    assert not np.array_equal(live.data, np.ones(3))


def test_missing_gradient_rejected():
    p = param([1.0])
    opt = AdamW({"p": p}, lr=0.01)
    with pytest.raises(ValueError, match="missing gradient"):
        opt.step()


def test_gradient_shape_mismatch_rejected():
    p = param([1.0, 2.0])
    opt = AdamW({"p": p}, lr=0.01)
    p.grad = np.zeros(3)
    with pytest.raises(ValueError, match="shape"):
        opt.step()


def test_state_round_trip():
    p = param([1.0, -1.0])
    opt = AdamW({"p": p}, lr=0.01)
    p.grad = np.array([0.5, -0.25])
    opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays().items()}

    fresh = AdamW({"p": param([0.0, 0.0])}, lr=0.01)
    fresh.load_state_arrays(arrays, opt.step_count)
    for key, val in fresh.state_arrays().items():
        np.testing.assert_array_equal(val, arrays[key])
    assert fresh.step_count == 1


# ------------------------------------------------------------- one-cycle


def schedule(max_rate=7e-5, total=1000):
    return OneCycleSchedule(max_rate=max_rate, total_steps=total)


def test_rate_at_zero_is_max_over_div():
    s = schedule()
    assert one_cycle_rate(s, 0) == pytest.approx(7e-5 / 25.0, rel=1e-12)


def test_rate_at_warmup_end_is_max():
    s = schedule()
    assert one_cycle_rate(s, s.warmup_steps) == pytest.approx(7e-5, rel=1e-9)


def test_rate_at_total_is_max_over_final_div():
    s = schedule()
    assert one_cycle_rate(s, s.total_steps) == pytest.approx(7e-5 / 1e4, rel=1e-9)


def test_rate_monotone_up_then_down():
    s = schedule(total=200)
    rates = [s.rate(i) for i in range(201)]
    top = int(np.argmax(rates))
    assert top == s.warmup_steps
    assert all(a < b for a, b in zip(rates[:top], rates[1:top + 1]))
    assert all(a > b for a, b in zip(rates[top:-1], rates[top + 1:]))


def test_step_out_of_range_rejected():
    s = schedule(total=100)
    with pytest.raises(ValueError):
        s.rate(-1)
    with pytest.raises(ValueError):
        s.rate(101)


def test_invalid_schedule_rejected():
    with pytest.raises(ValueError):
        OneCycleSchedule(max_rate=-1.0, total_steps=100)
    with pytest.raises(ValueError):
        OneCycleSchedule(max_rate=1.0, total_steps=100, warmup_frac=1.5)
    with pytest.raises(ValueError):
        OneCycleSchedule(max_rate=1.0, total_steps=1)
