"""Prediction request type and the predictor interface contract.

A dynamics model maps (context, future action sequence) to a sequence of
predicted tactile images. Implementations are duck-typed: they provide

    predict(req) -> (T, H, W, C) float32
    predict_many(req, actions_batch) -> (N, T, H, W, C) float32

where predict_many evaluates N alternative future action sequences against
the same context (the planner's hot path). Both must be pure functions of
(parameters, request) so candidate rollouts can be evaluated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..errors import DimensionError, InvalidInputError

CONTEXT_FRAMES = 3


@dataclass
class PredictionRequest:
    """Context for one rollout: recent frames, their actions, future plan.

    ``context_images`` holds the CONTEXT_FRAMES most recent observations
    (oldest first); ``context_actions`` the actions between them (one fewer).
    ``future_actions`` is the (T, 3) plan to evaluate from the newest frame.
    ``sim_state`` carries the hidden simulator state snapshot and is only
    consumed by the oracle model; learned models ignore it.
    """

    context_images: np.ndarray
    context_actions: np.ndarray
    future_actions: np.ndarray
    sim_state: Any = None

    def __post_init__(self):
        self.context_images = np.asarray(self.context_images, dtype=np.float32)
        self.context_actions = np.asarray(self.context_actions, dtype=np.float64)
        self.future_actions = np.asarray(self.future_actions, dtype=np.float64)
        if self.context_images.ndim != 4 or self.context_images.shape[0] != CONTEXT_FRAMES:
            raise DimensionError(
                f"context_images must be ({CONTEXT_FRAMES}, H, W, C), "
                f"got {self.context_images.shape}")
        if self.context_actions.shape != (CONTEXT_FRAMES - 1, 3):
            raise DimensionError(
                f"context_actions must be ({CONTEXT_FRAMES - 1}, 3), "
                f"got {self.context_actions.shape}")
        if self.future_actions.ndim != 2 or self.future_actions.shape[1] != 3 \
                or self.future_actions.shape[0] < 1:
            raise DimensionError(
                f"future_actions must be (T>=1, 3), got {self.future_actions.shape}")

    @property
    def horizon(self) -> int:
        return self.future_actions.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.context_images.shape[1:])


def padded_context(observations: list[np.ndarray], actions: list[np.ndarray]
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Build (context_images, context_actions) from an episode prefix.

    At episode start the history is shorter than CONTEXT_FRAMES; the first
    frame is repeated (with zero actions) to fill the missing slots.
    """
    if not observations:
        raise InvalidInputError("need at least one observation for context")
    if len(actions) != len(observations) - 1:
        raise InvalidInputError("need exactly one action between consecutive frames")
    obs = list(observations[-CONTEXT_FRAMES:])
    acts = list(actions[-(len(obs) - 1):]) if len(obs) > 1 else []
    while len(obs) < CONTEXT_FRAMES:
        obs.insert(0, observations[0])
        acts.insert(0, np.zeros(3))
    return np.stack(obs), np.stack(acts) if acts else np.zeros((CONTEXT_FRAMES - 1, 3))
