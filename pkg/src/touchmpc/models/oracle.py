"""Ground-truth and trivial predictors used for planner validation.

The oracle wraps the simulator itself: it clones the hidden state carried in
the request and rolls the noise-free dynamics forward, so its predictions
equal the environment's actual future frames exactly. The persistence
predictor repeats the last context frame and serves as the reference the
learned model must beat.
"""

from __future__ import annotations

import numpy as np

from .. import sim
from ..config import EnvConfig
from ..errors import HorizonError, InvalidInputError
from .base import PredictionRequest

MAX_ORACLE_HORIZON = 18


class OraclePredictor:
    """Perfect dynamics: replays the simulator from the state snapshot."""

    def __init__(self, env_cfg: EnvConfig, max_horizon: int = MAX_ORACLE_HORIZON):
        self.env_cfg = env_cfg
        self.max_horizon = max_horizon

    def _check(self, req: PredictionRequest) -> sim.SimState:
        if req.sim_state is None:
            raise InvalidInputError("oracle predictions need a sim_state snapshot")
        if req.horizon > self.max_horizon:
            raise HorizonError(
                f"requested horizon {req.horizon} exceeds cap {self.max_horizon}")
        return req.sim_state

    def predict(self, req: PredictionRequest) -> np.ndarray:
        """Noise-free future frames (T, H, W, C); the snapshot is untouched."""
        state = self._check(req).clone()
        frames = []
        for a in req.future_actions:
            state, img = sim.step(self.env_cfg, state, a, noise=False)
            frames.append(img)
        return np.stack(frames)

    def predict_many(self, req: PredictionRequest, actions_batch: np.ndarray) -> np.ndarray:
        """Evaluate (N, T, 3) candidate plans at once via the batched core."""
        actions_batch = np.asarray(actions_batch, dtype=np.float64)
        n, t, _ = actions_batch.shape
        if t > self.max_horizon:
            raise HorizonError(
                f"requested horizon {t} exceeds cap {self.max_horizon}")
        state = self._check(req)
        sensor = np.repeat(state.sensor[None, :], n, axis=0)
        obj = np.repeat(state.obj[None, :], n, axis=0)
        face = np.full(n, state.top_face, dtype=np.int64)
        h, w, c = self.env_cfg.image_shape
        out = np.empty((n, t, h, w, c), dtype=np.float32)
        for k in range(t):
            sensor, obj, face = sim.physics_step_batch(
                self.env_cfg, sensor, obj, face, actions_batch[:, k])
            out[:, k] = sim.render_batch(self.env_cfg, sensor, obj, face)
        return out


def oracle_predict(env_cfg: EnvConfig, sim_state, future_actions,
                   max_horizon: int = MAX_ORACLE_HORIZON) -> np.ndarray:
    """Ground-truth future frames for an action sequence.

    Clones ``sim_state``, steps the noise-free simulator, and renders each
    frame; the passed state is untouched. Raises HorizonError beyond the cap.
    """
    future_actions = np.asarray(future_actions, dtype=np.float64)
    if future_actions.shape[0] > max_horizon:
        raise HorizonError(
            f"requested horizon {future_actions.shape[0]} exceeds cap {max_horizon}")
    state = sim_state.clone()
    frames = []
    for a in future_actions:
        state, img = sim.step(env_cfg, state, a, noise=False)
        frames.append(img)
    return np.stack(frames)


class PersistencePredictor:
    """Predicts that nothing ever changes: every frame = last context frame."""

    def predict(self, req: PredictionRequest) -> np.ndarray:
        last = req.context_images[-1]
        return np.repeat(last[None], req.horizon, axis=0)

    def predict_many(self, req: PredictionRequest, actions_batch: np.ndarray) -> np.ndarray:
        n, t, _ = np.asarray(actions_batch).shape
        last = req.context_images[-1]
        return np.broadcast_to(last, (n, t) + last.shape).copy()
