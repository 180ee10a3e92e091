"""
2D cross-correlation as an autodiff primitive.

The public contract is NCHW in / NCHW out. Internally the op runs in NHWC so
the im2col matrix is built with a cheap last-axis-contiguous copy before the
GEMM; the column matrix is kept for the backward pass.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor


def conv2d_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def conv2d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate x [N,C,H,W] with kernels k [F,C,kh,kw]."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {k.shape}")
    n, c, h, w = x.shape
    f, ck, kh, kw = k.shape
    if ck != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {k.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride {stride} or padding {padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d kernel ({kh}x{kw}) larger than padded input "
            f"({h + 2 * padding}x{w + 2 * padding})")

    oh = conv2d_output_extent(h, kh, stride, padding)
    ow = conv2d_output_extent(w, kw, stride, padding)

    xh = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))
    if padding:
        xh = np.pad(xh, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = sliding_window_view(xh, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (n, oh, ow, c, kh, kw) -> rows of kh*kw*c, contiguous in c
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * oh * ow, kh * kw * c)
    kmat = np.ascontiguousarray(k.data.transpose(2, 3, 1, 0)).reshape(kh * kw * c, f)
    out_nhwc = (cols @ kmat).reshape(n, oh, ow, f)
    out_data = np.ascontiguousarray(out_nhwc.transpose(0, 3, 1, 2))

    hp, wp = xh.shape[1:3]

    def bwd(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, f)
        if k.requires_grad:
            gk = (cols.T @ gmat).reshape(kh, kw, c, f).transpose(3, 2, 0, 1)
            k._accumulate(np.ascontiguousarray(gk))
        if x.requires_grad:
            gcols = (gmat @ kmat.T).reshape(n, oh, ow, kh, kw, c)
            gx_pad = np.zeros((n, hp, wp, c), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gx_pad[:, i:i + oh * stride:stride, j:j + ow * stride:stride, :] += \
                        gcols[:, :, :, i, j, :]
            if padding:
                gx_pad = gx_pad[:, padding:-padding, padding:-padding, :]
            x._accumulate(np.ascontiguousarray(gx_pad.transpose(0, 3, 1, 2)))

    return Tensor._node(out_data, (x, k), "conv2d", bwd)
