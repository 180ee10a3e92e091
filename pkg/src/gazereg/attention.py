"""
Multi-head scaled dot-product self-attention over a frame-token sequence.

No positional encoding: the op is exactly permutation-equivariant in the
token axis. The two reductions over that axis (the softmax normalizer and
the attention-weighted value sum) run in sorted order, so equivariance holds
bit-for-bit, not just approximately.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, Tensor, linear, softmax

PROJECTIONS = ("q", "k", "v", "o")


def init_attention_params(d: int, heads: int, rng: np.random.Generator,
                          dtype=np.float32) -> dict:
    """Query/key/value/output projection weights for width d."""
    if d % heads != 0:
        raise ShapeError(f"attention width {d} not divisible by {heads} heads")
    scale = 1.0 / math.sqrt(d)
    params = {}
    for name in PROJECTIONS:
        params[f"w{name}"] = Tensor(
            (rng.standard_normal((d, d)) * scale).astype(dtype), requires_grad=True)
        params[f"b{name}"] = Tensor(np.zeros(d, dtype=dtype), requires_grad=True)
    return params


def multi_head_attention(tokens: Tensor, heads: int, params: dict) -> Tensor:
    """Attend over tokens [T x d] (or batched [B x T x d])."""
    squeeze = tokens.data.ndim == 2
    if squeeze:
        tokens = tokens.reshape(1, *tokens.shape)
    if tokens.data.ndim != 3:
        raise ShapeError(f"attention expects [T x d] or [B x T x d], got {tokens.shape}")
    b, t, d = tokens.shape
    if d % heads != 0:
        raise ShapeError(f"attention width {d} not divisible by {heads} heads")
    dk = d // heads

    def split(x):
        return x.reshape(b, t, heads, dk).transpose((0, 2, 1, 3))

    q = split(linear(tokens, params["wq"], params["bq"]))
    k = split(linear(tokens, params["wk"], params["bk"]))
    v = split(linear(tokens, params["wv"], params["bv"]))

    scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dk))
    attn = softmax(scores, axis=-1)

    # weighted value sum over the key axis, in permutation-stable order
    ctx = (attn.reshape(b, heads, t, t, 1) * v.reshape(b, heads, 1, t, dk)) \
        .sum(axis=3, stable=True)

    merged = ctx.transpose((0, 2, 1, 3)).reshape(b, t, d)
    out = linear(merged, params["wo"], params["bo"])
    return out.reshape(t, d) if squeeze else out
