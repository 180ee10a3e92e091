"""Multi-head attention: degenerate cases, exact permutation equivariance."""

import numpy as np
import pytest

from gazereg.attention import init_attention_params, multi_head_attention
from gazereg.tensor import ShapeError, Tensor, grad_check, linear


def make_params(d, heads, seed=0, dtype=np.float64):
    return init_attention_params(d, heads, np.random.default_rng(seed), dtype=dtype)


def test_width_not_divisible_rejected_at_build():
    with pytest.raises(ShapeError, match="divisible"):
        make_params(10, 4)


def test_single_token_reduces_to_value_then_output_projection():
    d, heads = 8, 2
    params = make_params(d, heads, seed=1)
    token = Tensor(np.random.default_rng(2).normal(size=(1, d)))
    out = multi_head_attention(token, heads, params)
    # softmax over one key is exactly 1, so attention passes v straight through
    expected = linear(linear(token, params["wv"], params["bv"]), params["wo"], params["bo"])
    np.testing.assert_array_equal(out.data, expected.data)


def test_identical_tokens_give_identical_rows():
    d, heads = 8, 4
    params = make_params(d, heads, seed=3)
    row = np.random.default_rng(4).normal(size=d)
    out = multi_head_attention(Tensor(np.stack([row, row])), heads, params)
    np.testing.assert_array_equal(out.data[0], out.data[1])


@pytest.mark.parametrize("seed", range(5))
def test_permutation_equivariance_is_exact(seed):
    d, heads, t = 12, 3, 7
    params = make_params(d, heads, seed=seed)
    rng = np.random.default_rng(100 + seed)
    tokens = rng.normal(size=(t, d))
    perm = rng.permutation(t)
    out = multi_head_attention(Tensor(tokens), heads, params)
    out_perm = multi_head_attention(Tensor(tokens[perm]), heads, params)
    np.testing.assert_array_equal(out_perm.data, out.data[perm])


def test_batched_matches_per_sequence():
    d, heads = 8, 2
    params = make_params(d, heads, seed=5)
    rng = np.random.default_rng(6)
    batch = rng.normal(size=(3, 4, d))
    out = multi_head_attention(Tensor(batch), heads, params)
    for i in range(3):
        single = multi_head_attention(Tensor(batch[i]), heads, params)
        np.testing.assert_array_equal(out.data[i], single.data)


@pytest.mark.parametrize("seed", range(3))
def test_attention_gradients_match_fd(seed):
    d, heads, t = 6, 2, 4
    params = make_params(d, heads, seed=seed)
    w = np.random.default_rng(seed + 50).normal(size=(t, d))

    def f(x):
        return (multi_head_attention(x, heads, params) * Tensor(w)).sum()

    x = Tensor(np.random.default_rng(seed + 60).normal(size=(t, d)), requires_grad=True)
    assert grad_check(f, x, h=1e-5) < 1e-4


def test_attention_parameter_gradients_match_fd():
    d, heads, t = 6, 2, 4
    params = make_params(d, heads, seed=9)
    tokens = Tensor(np.random.default_rng(10).normal(size=(t, d)))
    w = np.random.default_rng(11).normal(size=(t, d))
    for name in ("wq", "wk", "wv", "wo", "bq", "bo"):
        def f(p, name=name):
            trial = dict(params)
            trial[name] = p
            return (multi_head_attention(tokens, heads, trial) * Tensor(w)).sum()

        p = Tensor(params[name].data.copy(), requires_grad=True)
        assert grad_check(f, p, h=1e-5) < 1e-4, name
