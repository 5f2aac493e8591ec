"""Trainer for the learned predictor: BPTT by hand, SGD with momentum.

The rollout loss is the mean squared error between predicted and recorded
frames, averaged over every element of the batch. Gradients flow through the
full autoregressive chain (each prediction feeds the next step's input) and
are derived manually; grad_check verifies them against central finite
differences and is the correctness gate for the whole module.
"""

from __future__ import annotations

import numpy as np

from ..config import TrainConfig
from ..data import Dataset
from ..errors import InvalidInputError, TrainingDivergedError
from .base import CONTEXT_FRAMES
from .convops import conv2d_grad, nearest_resize_grad, softmax_grad
from .learned import LearnedPredictor, ModelConfig, param_shapes, rollout
from .transforms import transform_batch_grad


def rollout_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean per-frame MSE over a (B, T, H, W, C) rollout."""
    d = preds - targets
    return float(np.mean(d * d))


def _step_backward(params, cfg: ModelConfig, cache: dict, dout, dh, grads):
    """Backprop one unroll step; returns (dx_img, dh_prev)."""
    enc2 = cfg.enc2
    if cache["heads"]:
        dprev, dkern, dmasks, _dbg = transform_batch_grad(dout, cache["ct"])
        gh, gw = cache["grid"]
        mh, mw = cache["mask_grid"]
        dmsmall = nearest_resize_grad(dmasks, mh, mw)
        dmlog = softmax_grad(dmsmall, cache["msmall"], axis=-1)
        dh_up, dwm, dbm = conv2d_grad(dmlog, cache["cm"])
        dh_new = nearest_resize_grad(dh_up, gh, gw)
        grads["wm"] += dwm
        grads["bm"] += dbm

        b = dout.shape[0]
        ks = cfg.kernel_size
        dkprob = dkern.reshape(b, cfg.n_kernels, ks * ks)
        dklog = softmax_grad(dkprob, cache["kprob"], axis=-1).reshape(b, -1)
        grads["wk"] += cache["gap"].T @ dklog
        grads["bk"] += dklog.sum(axis=0)
        dgap = dklog @ params["wk"].T
        dh_new += dgap[:, None, None, :] / (gh * gw)
        dh_new += dh
    else:
        dprev = None
        dh_new = dh

    z, r, hc, h_prev = cache["z"], cache["r"], cache["hc"], cache["h_prev"]
    dz = dh_new * (hc - h_prev)
    dhc = dh_new * z
    dh_prev = dh_new * (1.0 - z)

    dhl = dhc * (1.0 - hc * hc)
    dxrh, dwc, dbc = conv2d_grad(dhl, cache["cc"])
    grads["wc"] += dwc
    grads["bc"] += dbc
    dr2 = dxrh[..., :enc2].copy()
    drh = dxrh[..., enc2:]
    dr = drh * h_prev
    dh_prev += drh * r

    dzl = dz * z * (1.0 - z)
    dxh_z, dwz, dbz = conv2d_grad(dzl, cache["cz"])
    grads["wz"] += dwz
    grads["bz"] += dbz
    drl = dr * r * (1.0 - r)
    dxh_r, dwr, dbr = conv2d_grad(drl, cache["cr"])
    grads["wr"] += dwr
    grads["br"] += dbr
    dxh = dxh_z + dxh_r
    dr2 += dxh[..., :enc2]
    dh_prev += dxh[..., enc2:]

    dy2 = dr2 * (cache["r2"] > 0)
    dr1, dw2, db2 = conv2d_grad(dy2, cache["c2"])
    grads["w2"] += dw2
    grads["b2"] += db2
    dy1 = dr1 * (cache["r1"] > 0)
    dinp, dw1, db1 = conv2d_grad(dy1, cache["c1"])
    grads["w1"] += dw1
    grads["b1"] += db1
    dx_enc = dinp[..., :cfg.image_shape[2]]

    dx = dx_enc if dprev is None else dprev + dx_enc
    return dx, dh_prev


def rollout_gradients(params, cfg: ModelConfig, ctx_images, ctx_actions,
                      future_actions, targets
                      ) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and parameter gradients for one batch of rollouts."""
    preds, caches = rollout(params, cfg, ctx_images, ctx_actions,
                            future_actions, with_cache=True)
    t = future_actions.shape[1]
    diff = preds - targets
    loss = float(np.mean(diff * diff))
    dpred = diff * (2.0 / diff.size)

    grads = {name: np.zeros(shape, dtype=ctx_images.dtype)
             for name, shape in param_shapes(cfg).items()}
    gh, gw = cfg.grid_shape
    dh = np.zeros((ctx_images.shape[0], gh, gw, cfg.hidden), dtype=ctx_images.dtype)
    dx_chain = None
    for k in range(t - 1, -1, -1):
        dout = dpred[:, k].copy()
        if dx_chain is not None:
            dout += dx_chain
        dx_chain, dh = _step_backward(params, cfg, caches[CONTEXT_FRAMES - 1 + k],
                                      dout, dh, grads)
    # context steps: inputs are ground truth, only recurrent state chains back
    zero = np.zeros_like(dpred[:, 0])
    for k in range(CONTEXT_FRAMES - 2, -1, -1):
        _, dh = _step_backward(params, cfg, caches[k], zero, dh, grads)
    return loss, grads


def _batch_arrays(trajs, horizon: int):
    """Stack a list of trajectories into rollout inputs with given horizon."""
    imgs = np.stack([tr.images for tr in trajs])
    acts = np.stack([tr.actions for tr in trajs])
    cf = CONTEXT_FRAMES
    ctx_images = imgs[:, :cf]
    ctx_actions = acts[:, :cf - 1]
    future_actions = acts[:, cf - 1:cf - 1 + horizon]
    targets = imgs[:, cf:cf + horizon]
    return ctx_images, ctx_actions, future_actions, targets


def max_horizon(ds: Dataset) -> int:
    return min(tr.length for tr in ds.trajectories) - CONTEXT_FRAMES


def evaluate(model: LearnedPredictor, ds: Dataset, horizon: int | None = None,
             batch_size: int = 32) -> float:
    """Mean rollout loss of ``model`` over a dataset (no gradient)."""
    horizon = horizon or max_horizon(ds)
    total = 0.0
    count = 0
    for start in range(0, len(ds.trajectories), batch_size):
        chunk = ds.trajectories[start:start + batch_size]
        ci, ca, fa, tg = _batch_arrays(chunk, horizon)
        preds = rollout(model.params, model.cfg, ci, ca, fa)
        total += float(np.sum((preds - tg) ** 2))
        count += preds.size
    return total / count


def train(model: LearnedPredictor, train_ds: Dataset, val_ds: Dataset,
          cfg: TrainConfig) -> tuple[LearnedPredictor, dict]:
    """SGD-with-momentum training; deterministic given cfg.seed.

    Returns a new predictor (the input model's parameters are not touched)
    and a history dict with per-epoch train/val losses and the curriculum
    horizon in effect.
    """
    if not train_ds.trajectories or not val_ds.trajectories:
        raise InvalidInputError("train and val datasets must be non-empty")
    if train_ds.image_shape != tuple(model.cfg.image_shape):
        raise InvalidInputError(
            f"dataset images {train_ds.image_shape} != model {model.cfg.image_shape}")
    params = {k: v.copy() for k, v in model.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    full = max_horizon(train_ds)
    n = len(train_ds.trajectories)
    history = {"train_loss": [], "val_loss": [], "horizon": []}
    for epoch in range(cfg.epochs):
        horizon = cfg.horizon_at(epoch, full)
        order = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((cfg.seed, epoch)))).permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = [train_ds.trajectories[i] for i in order[start:start + cfg.batch_size]]
            ci, ca, fa, tg = _batch_arrays(batch, horizon)
            loss, grads = rollout_gradients(params, model.cfg, ci, ca, fa, tg)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            for name in sorted(params):
                velocity[name] = cfg.momentum * velocity[name] - cfg.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]
            epoch_loss += loss
            n_batches += 1
        val_loss = evaluate(LearnedPredictor(model.cfg, params), val_ds)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch)
        history["train_loss"].append(epoch_loss / max(n_batches, 1))
        history["val_loss"].append(val_loss)
        history["horizon"].append(horizon)
    return LearnedPredictor(model.cfg, params), history


def grad_check(model: LearnedPredictor, probe_batch, epsilon: float = 1e-5,
               grads: dict | None = None) -> float:
    """Worst relative error of analytic vs central-difference gradients.

    ``probe_batch`` is (ctx_images, ctx_actions, future_actions, targets);
    everything is promoted to float64. Pass precomputed ``grads`` to verify
    someone else's gradients (the negative-control fixture does this). The
    relative error denominator is floored at 1e-6 so exact zero gradients
    compare cleanly.
    """
    ci, ca, fa, tg = (np.asarray(x, dtype=np.float64) for x in probe_batch)
    params = {k: v.astype(np.float64) for k, v in model.params.items()}
    if grads is None:
        _, grads = rollout_gradients(params, model.cfg, ci, ca, fa, tg)

    def loss_at(p):
        preds = rollout(p, model.cfg, ci, ca, fa)
        return rollout_loss(preds, tg)

    worst = 0.0
    for name in sorted(params):
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_at(params)
            flat[i] = orig - epsilon
            down = loss_at(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(numeric) + abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst
