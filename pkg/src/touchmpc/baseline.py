"""Hand-engineered centroid controller: the comparison point for tactile MPC.

The controller localizes the contact in the current and goal images by the
squared-difference-weighted pixel centroid, then commands a fixed-length
step along the vector between the two centroids (mapped from pixels to mm),
while regulating the press depth toward a nominal contact height. It never
commands a lift beyond that regulation, so tasks that require breaking
contact are structurally out of its reach.
"""

from __future__ import annotations

import numpy as np

from .config import BaselineConfig, EnvConfig
from .core import ACTION_LIMIT_MM, GoalSpec
from .errors import DimensionError, NoContactError

__all__ = ["estimate_centroid", "baseline_step", "tune_step_length",
           "CentroidController"]


def estimate_centroid(img: np.ndarray, background: np.ndarray,
                      blank_eps: float = 1e-4) -> tuple[float, float]:
    """Weighted centroid (u, v) of the contact region in ``img``.

    Pixel weights are the squared pointwise differences from the no-contact
    background image, summed over channels. Raises NoContactError when the
    total weight falls below blank_eps * H * W (a blank image).
    """
    img = np.asarray(img, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if img.shape != background.shape or img.ndim != 3:
        raise DimensionError(f"image {img.shape} vs background {background.shape}")
    h, w, _ = img.shape
    weight = ((img - background) ** 2).sum(axis=-1)
    total = float(weight.sum())
    if total < blank_eps * h * w:
        raise NoContactError(f"total contact weight {total:.3g} below blank threshold")
    u = float((weight.sum(axis=0) * np.arange(w)).sum() / total)
    v = float((weight.sum(axis=1) * np.arange(h)).sum() / total)
    return u, v


def baseline_step(cur: np.ndarray, goal: GoalSpec, cfg: BaselineConfig,
                  sensor_z: float, background: np.ndarray,
                  px_per_mm: float) -> np.ndarray:
    """One control action of the centroid baseline.

    Lateral motion: a step of ``cfg.step_length`` mm along the pixel-space
    vector from the current centroid to the goal centroid (or exactly the
    remaining distance when closer than one step). Vertical motion always
    regulates sensor_z toward cfg.contact_z and never exceeds that gap, so
    the controller cannot lift off on purpose. A blank current image yields
    a pure descent toward contact.
    """
    dz = float(np.clip(cfg.contact_z - sensor_z, -ACTION_LIMIT_MM, ACTION_LIMIT_MM))
    try:
        cu, cv = estimate_centroid(cur, background, cfg.blank_eps)
        gu, gv = estimate_centroid(goal.image, background, cfg.blank_eps)
    except NoContactError:
        return np.array([0.0, 0.0, dz])
    gap_px = np.array([gu - cu, gv - cv])
    dist_mm = float(np.hypot(*gap_px)) / px_per_mm
    if dist_mm <= 1e-12:
        lateral = np.zeros(2)
    elif dist_mm <= cfg.step_length:
        lateral = gap_px / px_per_mm
    else:
        lateral = cfg.step_length * gap_px / np.hypot(*gap_px)
    action = np.array([lateral[0], lateral[1], dz])
    return np.clip(action, -ACTION_LIMIT_MM, ACTION_LIMIT_MM)


class CentroidController:
    """Episode-shaped wrapper so the benchmark can drive the baseline.

    Only the newest observation and the robot's own z coordinate are read;
    the hidden object state is never consulted.
    """

    def __init__(self, cfg: BaselineConfig, env_cfg: EnvConfig):
        from .sim import background_image
        self.cfg = cfg
        self.env_cfg = env_cfg
        self.background = background_image(env_cfg)

    def begin_episode(self, goal: GoalSpec, init_seed: int = 0) -> None:
        self.goal = goal

    def select_action(self, observations, actions, sim_state, t: int = 0) -> np.ndarray:
        return baseline_step(observations[-1], self.goal, self.cfg,
                             float(sim_state.sensor[2]), self.background,
                             self.env_cfg.px_per_mm)


def tune_step_length(env_cfg: EnvConfig, candidates, n_episodes: int,
                     seed: int, t_max: int = 15,
                     base_cfg: BaselineConfig | None = None) -> float:
    """Pick the step length minimizing median final centroid distance.

    Runs the same seeded episode battery for every candidate; ties go to the
    smaller step. The tuned value is what the benchmark's baseline uses.
    """
    from .bench import (episode_seed, final_centroid_distance_px, lower_median,
                        run_controller_episode, sample_goal)
    candidates = sorted(float(c) for c in candidates)
    if not candidates:
        raise ValueError("need at least one candidate step length")
    base_cfg = base_cfg or BaselineConfig(contact_z=env_cfg.nominal_contact_z)
    best = None
    for cand in candidates:
        cfg = BaselineConfig(step_length=cand, contact_z=base_cfg.contact_z,
                             blank_eps=base_cfg.blank_eps)
        dists = []
        for ep in range(n_episodes):
            goal, goal_state = sample_goal(env_cfg, seed, ep)
            controller = CentroidController(cfg, env_cfg)
            final_state, _ = run_controller_episode(
                env_cfg, episode_seed(seed, ep), controller, goal, t_max)
            dists.append(final_centroid_distance_px(env_cfg, final_state, goal_state))
        med = lower_median(dists)
        if best is None or med < best[0]:
            best = (med, cand)
    return best[1]
