"""Tactile servoing on simulated gel-imprint sensors.

The package covers the full loop: contact simulators for three touch tasks,
autonomous data collection, an action-conditioned predictive image model
(oracle and learned), CEM-based model-predictive control toward goal tactile
images, a hand-engineered centroid baseline, and a benchmark harness that
compares the two controllers under paired seeds.
"""

from .config import (BaselineConfig, BenchConfig, Config, EnvConfig,
                     PlannerConfig, TrainConfig, load_config, save_config)
from .core import (ACTION_LIMIT_MM, DEFAULT_IMAGE_SHAPE, GoalSpec, as_image,
                   clamp_action, expand_repeats, mse)
from .data import Dataset, Trajectory, collect, load, save, split
from .sim import (SimState, background_image, die_top_face, in_contact,
                  object_centroid_px, render_imprint, reset, step)

__version__ = "0.1.0"

__all__ = [
    "ACTION_LIMIT_MM", "DEFAULT_IMAGE_SHAPE", "BaselineConfig", "BenchConfig",
    "Config", "Dataset", "EnvConfig", "GoalSpec", "PlannerConfig", "SimState",
    "TrainConfig", "Trajectory", "as_image", "background_image", "clamp_action",
    "collect", "die_top_face", "expand_repeats", "in_contact", "load",
    "load_config", "mse", "object_centroid_px", "render_imprint", "reset",
    "save", "save_config", "split", "step",
]
