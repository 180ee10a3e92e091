"""
Model assembly: normalization-free residual backbones, the binned gaze head,
and the attention detection head, with named parameter stores that can be
frozen, checksummed, and checkpointed.

The gaze backbone and detector backbone share one architecture; the detector
widens the final 1x1 projection from eta to eta+lambda so its representation
carries a gaze-constrained slice (the first eta coordinates) plus lambda
leaky coordinates that no constraint touches.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .attention import init_attention_params, multi_head_attention
from .conv import conv2d, conv2d_output_extent
from .tensor import ShapeError, Tensor, concat, linear, softmax

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class BackboneConfig:
    input_size: tuple  # (H, W, C)
    block_widths: tuple  # channels per residual stage, each stage strides 2
    feature_width: int  # eta for the gaze backbone, eta+lambda for the detector

    def __post_init__(self):
        h, w, c = self.input_size
        if min(h, w, c) < 1 or self.feature_width < 1 or not self.block_widths:
            raise ValueError(f"invalid backbone config: {self}")
        for _ in self.block_widths:
            h = conv2d_output_extent(h, 3, 2, 1)
            w = conv2d_output_extent(w, 3, 2, 1)
        if min(h, w) < 1:
            raise ValueError(
                f"input {self.input_size[:2]} collapses below 1x1 after "
                f"{len(self.block_widths)} stride-2 stages")


@dataclass(frozen=True)
class RepresentationLayout:
    """Positional split of a width eta+lambda representation: coordinates
    [0, eta) are the gaze-constrained slice, [eta, eta+lambda) are leaky."""
    eta: int
    lam: int

    def __post_init__(self):
        if self.eta < 1 or self.lam < 0:
            raise ValueError(f"invalid representation layout: {self}")

    @property
    def width(self) -> int:
        return self.eta + self.lam

    def constrained(self, reps: Tensor) -> Tensor:
        return reps[..., : self.eta]

    def leaky(self, reps: Tensor) -> Tensor:
        return reps[..., self.eta:]


class ParamStore:
    """Named parameter group (theta_gb / theta_go / theta_db / theta_do)."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, Tensor] = {}
        self.frozen = False

    def add(self, key: str, array: np.ndarray) -> Tensor:
        t = Tensor(array, requires_grad=not self.frozen)
        self.params[key] = t
        return t

    def freeze(self):
        self.frozen = True
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for key in sorted(self.params):
            digest.update(key.encode())
            digest.update(self.params[key].data.tobytes())
        return digest.hexdigest()

    def named(self, prefix: str = "") -> dict:
        pre = f"{prefix}." if prefix else ""
        return {f"{pre}{key}": p for key, p in self.params.items()}


class ModelBundle:
    """All parameter stores of one training setup, with frozen-flag control."""

    def __init__(self, stores: dict):
        self.stores = dict(stores)

    def freeze(self, store_names):
        for name in store_names:
            if name not in self.stores:
                raise ValueError(f"unknown parameter store {name!r}; "
                                 f"have {sorted(self.stores)}")
            self.stores[name].freeze()

    def trainable(self) -> dict:
        out = {}
        for name, store in self.stores.items():
            if not store.frozen:
                out.update(store.named(name))
        return out

    def checksum(self, store_name: str) -> str:
        return self.stores[store_name].checksum()


def freeze(bundle: ModelBundle, store_names) -> ModelBundle:
    bundle.freeze(store_names)
    return bundle


def _he_conv(rng, f, c, kh, kw, dtype):
    std = math.sqrt(2.0 / (c * kh * kw))
    return (rng.standard_normal((f, c, kh, kw)) * std).astype(dtype)


def _xavier(rng, n_in, n_out, dtype):
    std = 1.0 / math.sqrt(n_in)
    return (rng.standard_normal((n_in, n_out)) * std).astype(dtype)


class Backbone:
    """Stem conv, one stride-2 residual block per stage, 1x1 projection to
    feature_width, global average pool. No batch statistics anywhere, so the
    forward pass is batch-order independent and deterministic."""

    def __init__(self, cfg: BackboneConfig, store: ParamStore,
                 rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.store = store
        h, w, c = cfg.input_size
        widths = cfg.block_widths
        store.add("stem.w", _he_conv(rng, widths[0], c, 3, 3, dtype))
        store.add("stem.b", np.zeros(widths[0], dtype=dtype))
        c_in = widths[0]
        for i, c_out in enumerate(widths):
            store.add(f"stage{i}.a.w", _he_conv(rng, c_out, c_in, 3, 3, dtype))
            store.add(f"stage{i}.a.b", np.zeros(c_out, dtype=dtype))
            store.add(f"stage{i}.b.w", _he_conv(rng, c_out, c_out, 3, 3, dtype))
            store.add(f"stage{i}.b.b", np.zeros(c_out, dtype=dtype))
            store.add(f"stage{i}.sc.w", _he_conv(rng, c_out, c_in, 1, 1, dtype))
            store.add(f"stage{i}.sc.b", np.zeros(c_out, dtype=dtype))
            c_in = c_out
        store.add("proj.w", _he_conv(rng, cfg.feature_width, c_in, 1, 1, dtype))
        store.add("proj.b", np.zeros(cfg.feature_width, dtype=dtype))

    def _conv(self, x, key, stride, padding):
        p = self.store.params
        out = conv2d(x, p[f"{key}.w"], stride=stride, padding=padding)
        b = p[f"{key}.b"]
        return out + b.reshape(1, b.shape[0], 1, 1)

    def forward(self, frames: Tensor) -> Tensor:
        h, w, c = self.cfg.input_size
        if frames.shape[1:] != (c, h, w):
            raise ShapeError(
                f"backbone expects frames [N,{c},{h},{w}], got {frames.shape}")
        x = self._conv(frames, "stem", 1, 1).relu()
        for i in range(len(self.cfg.block_widths)):
            hmid = self._conv(x, f"stage{i}.a", 2, 1).relu()
            hout = self._conv(hmid, f"stage{i}.b", 1, 1)
            sc = self._conv(x, f"stage{i}.sc", 2, 0)
            x = ((hout + sc) * INV_SQRT2).relu()
        x = self._conv(x, "proj", 1, 0)
        return x.mean(axis=(2, 3))


def bin_centers(bins: int) -> np.ndarray:
    """Uniform bin centers over [-pi, pi), symmetric about 0."""
    width = 2.0 * math.pi / bins
    return -math.pi + (np.arange(bins) + 0.5) * width


@dataclass
class GazeHeadOutput:
    yaw_logits: Tensor  # [N x B]
    pitch_logits: Tensor
    yaw: Tensor  # [N] softmax-expected angles in radians
    pitch: Tensor


class GazeHead:
    """Independent linear projections to B yaw bins and B pitch bins."""

    def __init__(self, eta: int, bins: int, store: ParamStore,
                 rng: np.random.Generator, dtype=np.float32):
        self.bins = bins
        self.store = store
        self.centers = bin_centers(bins).astype(dtype)
        for angle in ("yaw", "pitch"):
            store.add(f"{angle}.w", _xavier(rng, eta, bins, dtype))
            store.add(f"{angle}.b", np.zeros(bins, dtype=dtype))

    def forward(self, feats: Tensor) -> GazeHeadOutput:
        p = self.store.params
        yaw_logits = linear(feats, p["yaw.w"], p["yaw.b"])
        pitch_logits = linear(feats, p["pitch.w"], p["pitch.b"])
        centers = Tensor(self.centers)

        def expectation(logits):
            return (softmax(logits, axis=1) * centers).sum(axis=1)

        return GazeHeadOutput(yaw_logits, pitch_logits,
                              expectation(yaw_logits), expectation(pitch_logits))


class DetectionHead:
    """One multi-head attention layer over the T frame tokens, stable mean
    pool, then a two-layer projection to a fake-probability."""

    def __init__(self, width: int, heads: int, hidden: int, clip_len: int,
                 store: ParamStore, rng: np.random.Generator, dtype=np.float32):
        self.width = width
        self.heads = heads
        self.clip_len = clip_len
        self.store = store
        attn = init_attention_params(width, heads, rng, dtype=dtype)
        for key, tensor in attn.items():
            tensor.requires_grad = not store.frozen
            store.params[f"attn.{key}"] = tensor
        store.add("head.w1", _xavier(rng, width, hidden, dtype))
        store.add("head.b1", np.zeros(hidden, dtype=dtype))
        store.add("head.w2", _xavier(rng, hidden, 1, dtype))
        store.add("head.b2", np.zeros(1, dtype=dtype))

    def forward(self, reps: Tensor) -> Tensor:
        """reps [T x width] or [B x T x width] -> probability per clip."""
        squeeze = reps.data.ndim == 2
        if squeeze:
            reps = reps.reshape(1, *reps.shape)
        if reps.shape[1] != self.clip_len:
            raise ShapeError(
                f"detection head configured for {self.clip_len}-frame clips, "
                f"got {reps.shape[1]}")
        p = self.store.params
        attn_params = {k[len("attn."):]: v for k, v in p.items() if k.startswith("attn.")}
        tokens = multi_head_attention(reps, self.heads, attn_params)
        pooled = tokens.mean(axis=1, stable=True)
        hidden = linear(pooled, p["head.w1"], p["head.b1"]).relu()
        prob = linear(hidden, p["head.w2"], p["head.b2"]).sigmoid()
        prob = prob.reshape(prob.shape[0])
        return prob[0] if squeeze else prob


@dataclass
class GazeModel:
    cfg: BackboneConfig
    bins: int
    backbone: Backbone = field(init=False)
    head: GazeHead = field(init=False)
    bundle: ModelBundle = field(init=False)

    def __init__(self, cfg: BackboneConfig, bins: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.cfg = cfg
        self.bins = bins
        gb, go = ParamStore("gb"), ParamStore("go")
        self.backbone = Backbone(cfg, gb, rng, dtype)
        self.head = GazeHead(cfg.feature_width, bins, go, rng, dtype)
        self.bundle = ModelBundle({"gb": gb, "go": go})

    @property
    def eta(self) -> int:
        return self.cfg.feature_width

    def backbone_forward(self, frames: Tensor) -> Tensor:
        return self.backbone.forward(frames)

    def forward(self, frames: Tensor) -> GazeHeadOutput:
        return self.head.forward(self.backbone.forward(frames))


@dataclass
class DetectorModel:
    cfg: BackboneConfig
    layout: RepresentationLayout
    heads: int
    hidden: int
    clip_len: int
    backbone: Backbone = field(init=False)
    head: DetectionHead = field(init=False)
    bundle: ModelBundle = field(init=False)

    def __init__(self, cfg: BackboneConfig, layout: RepresentationLayout,
                 heads: int, hidden: int, clip_len: int,
                 rng: np.random.Generator, dtype=np.float32):
        if cfg.feature_width != layout.width:
            raise ValueError(
                f"detector feature width {cfg.feature_width} != eta+lambda {layout.width}")
        self.cfg = cfg
        self.layout = layout
        self.heads = heads
        self.hidden = hidden
        self.clip_len = clip_len
        db, do = ParamStore("db"), ParamStore("do")
        self.backbone = Backbone(cfg, db, rng, dtype)
        self.head = DetectionHead(layout.width, heads, hidden, clip_len, do, rng, dtype)
        self.bundle = ModelBundle({"db": db, "do": do})

    def backbone_forward(self, frames: Tensor) -> Tensor:
        return self.backbone.forward(frames)

    def head_forward(self, reps: Tensor) -> Tensor:
        return self.head.forward(reps)


def frozen_copy_forward(frames: Tensor, gaze_model: GazeModel,
                        detector: DetectorModel) -> Tensor:
    """Ablation representation: the constrained slice is copied verbatim from
    the frozen gaze backbone; only the leaky slice comes from (and trains)
    the detector backbone."""
    layout = detector.layout
    if gaze_model.cfg.input_size != detector.cfg.input_size:
        raise ShapeError("gaze and detector backbones expect different input sizes")
    gaze_feats = gaze_model.backbone_forward(frames).detach()
    if layout.lam == 0:
        return gaze_feats
    leaky = layout.leaky(detector.backbone_forward(frames))
    return concat([gaze_feats, leaky], axis=1)
