"""The learned action-conditioned frame predictor.

Architecture, per unroll step: the previous frame is concatenated with the
(broadcast-tiled, normalized) action, passed through two stride-2 convs into
a convolutional GRU cell, and two heads read the recurrent state out: a
kernel head emitting K softmax-normalized transformation kernels and a mask
head emitting K+1 per-pixel compositing masks (softmax across slots, the
extra slot blending a static background image, taken to be the first context
frame). The next frame is the masked composite of the kernel-transformed
previous frame and that background.

During the first CONTEXT_FRAMES unroll steps the net consumes ground-truth
frames (building up recurrent state); afterwards it consumes its own
predictions. All math is dtype-generic so the trainer can run float32 and
the gradient checker float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..core import ACTION_LIMIT_MM
from ..errors import (DimensionError, MagicError, TruncatedError, VersionError)
from .base import CONTEXT_FRAMES, PredictionRequest
from .convops import conv2d, nearest_resize, sigmoid, softmax
from .transforms import transform_batch

MODEL_MAGIC = b"TMPM"
MODEL_VERSION = 1
PARAM_ORDER = ("w1", "b1", "w2", "b2", "wz", "bz", "wr", "br", "wc", "bc",
               "wk", "bk", "wm", "bm")


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of the learned predictor; defaults match the shipped pipeline."""

    image_shape: tuple[int, int, int] = (48, 64, 3)
    n_kernels: int = 4
    kernel_size: int = 5
    enc1: int = 8
    enc2: int = 8
    hidden: int = 8

    @property
    def grid_shape(self) -> tuple[int, int]:
        h, w, _ = self.image_shape
        h2, w2 = -(-h // 2), -(-w // 2)
        return -(-h2 // 2), -(-w2 // 2)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, w, c = cfg.image_shape
    cin = c + 3
    k2 = cfg.n_kernels * cfg.kernel_size * cfg.kernel_size
    g = cfg.hidden
    return {
        "w1": (3, 3, cin, cfg.enc1), "b1": (cfg.enc1,),
        "w2": (3, 3, cfg.enc1, cfg.enc2), "b2": (cfg.enc2,),
        "wz": (3, 3, cfg.enc2 + g, g), "bz": (g,),
        "wr": (3, 3, cfg.enc2 + g, g), "br": (g,),
        "wc": (3, 3, cfg.enc2 + g, g), "bc": (g,),
        "wk": (g, k2), "bk": (k2,),
        "wm": (3, 3, g, cfg.n_kernels + 1), "bm": (cfg.n_kernels + 1,),
    }


def init_params(cfg: ModelConfig, seed: int = 0, kernel_bias: float = 2.0,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """Seeded parameter initialization.

    ``kernel_bias`` is added to the center-tap logit of every kernel, biasing
    the transform toward the identity; a large value (say 60) makes the
    softmax an exact one-hot in float32, which is the identity-initialized
    model the tests lean on.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name in ("b1", "b2"):
            # small positive bias keeps ReLU pre-activations off the exact
            # kink, where finite differences disagree with any subgradient
            params[name] = np.full(shape, 0.05, dtype=dtype)
        elif name.startswith("b"):
            params[name] = np.zeros(shape, dtype=dtype)
        elif name == "wk":
            params[name] = (0.01 * rng.standard_normal(shape)).astype(dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            std = np.sqrt(2.0 / fan_in)
            params[name] = (std * rng.standard_normal(shape)).astype(dtype)
    ks = cfg.kernel_size
    center = (ks // 2) * ks + ks // 2
    bk = params["bk"].reshape(cfg.n_kernels, ks * ks)
    bk[:, center] += dtype(kernel_bias)
    return params


def _step(params: dict, cfg: ModelConfig, x_img: np.ndarray, action: np.ndarray,
          h: np.ndarray, background: np.ndarray, heads: bool):
    """One unroll step; returns (output_or_None, new_h, cache)."""
    b, hh, ww, c = x_img.shape
    a = (action * (1.0 / ACTION_LIMIT_MM)).astype(x_img.dtype)
    tile = np.broadcast_to(a[:, None, None, :], (b, hh, ww, 3))
    inp = np.concatenate([x_img, tile], axis=-1)
    y1, c1 = conv2d(inp, params["w1"], params["b1"], stride=2)
    r1 = np.maximum(y1, 0.0)
    y2, c2 = conv2d(r1, params["w2"], params["b2"], stride=2)
    r2 = np.maximum(y2, 0.0)

    xh = np.concatenate([r2, h], axis=-1)
    zl, cz = conv2d(xh, params["wz"], params["bz"])
    z = sigmoid(zl)
    rl, cr = conv2d(xh, params["wr"], params["br"])
    r = sigmoid(rl)
    xrh = np.concatenate([r2, r * h], axis=-1)
    hl, cc = conv2d(xrh, params["wc"], params["bc"])
    hc = np.tanh(hl)
    h_new = (1.0 - z) * h + z * hc

    cache = {"c1": c1, "r1": r1, "c2": c2, "r2": r2, "cz": cz, "cr": cr,
             "cc": cc, "z": z, "r": r, "hc": hc, "h_prev": h, "heads": heads}
    if not heads:
        return None, h_new, cache

    gh, gw = h_new.shape[1], h_new.shape[2]
    gap = h_new.mean(axis=(1, 2))
    klog = gap @ params["wk"] + params["bk"]
    ks = cfg.kernel_size
    kprob = softmax(klog.reshape(b, cfg.n_kernels, ks * ks), axis=-1)
    kernels = kprob.reshape(b, cfg.n_kernels, ks, ks)
    # masks are computed at half image resolution (the recurrent grid is a
    # quarter), since compositing needs sharper spatial support than the
    # recurrent state itself
    mh, mw = min(2 * gh, hh), min(2 * gw, ww)
    h_up = nearest_resize(h_new, mh, mw)
    mlog, cm = conv2d(h_up, params["wm"], params["bm"])
    msmall = softmax(mlog, axis=-1)
    masks = nearest_resize(msmall, hh, ww)
    out, ct = transform_batch(x_img, kernels, masks, background)
    cache.update({"gap": gap, "kprob": kprob, "cm": cm, "msmall": msmall,
                  "ct": ct, "grid": (gh, gw), "mask_grid": (mh, mw)})
    return out, h_new, cache


def rollout(params: dict, cfg: ModelConfig, ctx_images: np.ndarray,
            ctx_actions: np.ndarray, future_actions: np.ndarray,
            with_cache: bool = False):
    """Unroll the predictor over a batch.

    ctx_images (B, CONTEXT_FRAMES, H, W, C); ctx_actions (B, CF-1, 3);
    future_actions (B, T, 3). Returns (B, T, H, W, C) predictions, plus the
    per-step caches when ``with_cache`` (for backpropagation).
    """
    b = ctx_images.shape[0]
    t = future_actions.shape[1]
    gh, gw = cfg.grid_shape
    dtype = ctx_images.dtype
    background = ctx_images[:, 0]
    h = np.zeros((b, gh, gw, cfg.hidden), dtype=dtype)
    caches = []
    for i in range(CONTEXT_FRAMES - 1):
        _, h, cache = _step(params, cfg, ctx_images[:, i], ctx_actions[:, i],
                            h, background, heads=False)
        if with_cache:
            caches.append(cache)
    preds = np.empty(ctx_images.shape[:1] + (t,) + ctx_images.shape[2:], dtype=dtype)
    x = ctx_images[:, CONTEXT_FRAMES - 1]
    for k in range(t):
        out, h, cache = _step(params, cfg, x, future_actions[:, k], h,
                              background, heads=True)
        preds[:, k] = out
        x = out
        if with_cache:
            caches.append(cache)
    return (preds, caches) if with_cache else preds


class LearnedPredictor:
    """Predictor facade bundling a ModelConfig with its parameters."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]):
        shapes = param_shapes(cfg)
        for name, shape in shapes.items():
            if name not in params or tuple(params[name].shape) != shape:
                raise DimensionError(f"parameter {name} missing or misshaped")
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0,
               kernel_bias: float = 2.0) -> "LearnedPredictor":
        return cls(cfg, init_params(cfg, seed=seed, kernel_bias=kernel_bias))

    def _check_request(self, req: PredictionRequest) -> None:
        if req.image_shape != tuple(self.cfg.image_shape):
            raise DimensionError(
                f"request images {req.image_shape} != model {self.cfg.image_shape}")

    def predict(self, req: PredictionRequest) -> np.ndarray:
        """Predicted frames (T, H, W, C), clipped into [0, 1]."""
        self._check_request(req)
        preds = rollout(self.params, self.cfg,
                        req.context_images[None].astype(np.float32),
                        req.context_actions[None],
                        req.future_actions[None])
        return np.clip(preds[0], 0.0, 1.0)

    def predict_many(self, req: PredictionRequest, actions_batch: np.ndarray) -> np.ndarray:
        """Evaluate (N, T, 3) candidate plans against one shared context.

        The warmup steps do not depend on the candidate actions, so they run
        once at batch size 1 and the recurrent state is tiled across the
        batch; batch members are independent, so this agrees with
        per-candidate prediction up to float32 rounding.
        """
        self._check_request(req)
        actions_batch = np.asarray(actions_batch)
        n, t, _ = actions_batch.shape
        ctx = req.context_images[None].astype(np.float32)
        background = ctx[:, 0]
        gh, gw = self.cfg.grid_shape
        h = np.zeros((1, gh, gw, self.cfg.hidden), dtype=np.float32)
        for i in range(CONTEXT_FRAMES - 1):
            _, h, _ = _step(self.params, self.cfg, ctx[:, i],
                            req.context_actions[None][:, i], h, background,
                            heads=False)
        h = np.repeat(h, n, axis=0)
        x = np.repeat(ctx[:, CONTEXT_FRAMES - 1], n, axis=0)
        bg = np.repeat(background, n, axis=0)
        hh, ww, c = self.cfg.image_shape
        preds = np.empty((n, t, hh, ww, c), dtype=np.float32)
        for k in range(t):
            out, h, _ = _step(self.params, self.cfg, x, actions_batch[:, k],
                              h, bg, heads=True)
            preds[:, k] = out
            x = out
        return np.clip(preds, 0.0, 1.0)

    # -- checkpoint io ------------------------------------------------------

    def save(self, path) -> None:
        h, w, c = self.cfg.image_shape
        head = MODEL_MAGIC + struct.pack(
            "<9H", MODEL_VERSION, h, w, c, self.cfg.enc1, self.cfg.enc2,
            self.cfg.hidden, self.cfg.n_kernels, self.cfg.kernel_size)
        payload = b"".join(
            np.ascontiguousarray(self.params[name], dtype="<f4").tobytes()
            for name in PARAM_ORDER)
        with open(path, "wb") as fh:
            fh.write(head + payload)

    @classmethod
    def load(cls, path) -> "LearnedPredictor":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 22:
            raise TruncatedError(f"model file holds {len(blob)} bytes, header needs 22")
        if blob[:4] != MODEL_MAGIC:
            raise MagicError(f"bad magic {blob[:4]!r}, expected {MODEL_MAGIC!r}")
        version, h, w, c, e1, e2, g, k, ks = struct.unpack("<9H", blob[4:22])
        if version != MODEL_VERSION:
            raise VersionError(f"model format version {version}, supported {MODEL_VERSION}")
        cfg = ModelConfig(image_shape=(h, w, c), n_kernels=k, kernel_size=ks,
                          enc1=e1, enc2=e2, hidden=g)
        shapes = param_shapes(cfg)
        total = 22 + 4 * sum(int(np.prod(s)) for s in shapes.values())
        if len(blob) != total:
            raise TruncatedError(f"model file holds {len(blob)} bytes, expected {total}")
        params = {}
        offset = 22
        for name in PARAM_ORDER:
            shape = shapes[name]
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            params[name] = arr.reshape(shape).copy()
            offset += 4 * count
        return cls(cfg, params)
