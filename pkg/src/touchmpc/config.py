"""Environment and pipeline configuration, loadable from one INI-style file.

One file with [env], [planner], [train], [baseline] and [bench] sections
governs the whole pipeline; every module reads shared facts (such as the
image shape) from the EnvConfig instead of hard-coding them.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .core import DEFAULT_IMAGE_SHAPE
from .errors import ConfigError

TASKS = ("ball", "stick", "die")


@dataclass(frozen=True)
class EnvConfig:
    """Physical constants and sensor geometry for one simulated task.

    Lengths are millimetres. The sensor's gel face spans ``sensor_diameter``
    across the image width, which fixes the mm->px scale for every module.
    Per-task fields are ignored by the other tasks.
    """

    task: str = "ball"
    image_shape: tuple[int, int, int] = DEFAULT_IMAGE_SHAPE
    sensor_diameter: float = 40.0
    workspace_xy: float = 20.0        # |x|, |y| bound for the sensor
    workspace_z: tuple[float, float] = (0.0, 15.0)
    reset_z: float = 14.0             # lifted height after reset (no contact)
    reset_jitter: float = 1.0         # std of seeded object jitter at reset
    contact_threshold: float = 0.5    # penetration depth that counts as contact
    depth_scale: float = 6.0          # penetration (mm) mapped to intensity 1.0
    grad_gain: float = 2.0            # gain on depth-gradient channels
    noise_std: float = 0.005          # pixel noise std, intensity units

    # ball task
    dish_radius: float = 9.0
    ball_radius: float = 4.0
    slip_alpha: float = 0.8           # ball displacement per mm of contact drag
    curvature_k: float = 0.15         # fraction of center offset recovered per step

    # stick task
    tip_radius: float = 3.0
    tip_height: float = 10.0
    max_deflection: float = 6.0
    drag_gain: float = 0.7            # deflection gained per mm of finger drag
    drag_radius: float = 6.0          # finger-to-tip distance within which drag acts
    spring_factor: float = 0.6        # deflection retained per uncontacted step

    # die task
    die_half: float = 6.0             # half-width of the top face
    die_height: float = 10.0          # height of the face plate
    dot_height: float = 3.0           # raised dot relief above the plate
    dot_radius: float = 1.5
    push_threshold: float = 3.0       # lateral push magnitude that rolls the die
    push_radius: float = 10.0         # finger-to-die distance within which pushes act
    grip_radius: float = 2.5          # rolls need the finger this close to the die top
    offset_follow: float = 0.15       # in-plane offset gained per mm of push
    offset_max: float = 8.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of {TASKS}")
        h, w, c = self.image_shape
        if h < 4 or w < 4 or c < 1:
            raise ConfigError(f"image shape too small: {self.image_shape}")
        for name in ("sensor_diameter", "contact_threshold", "depth_scale",
                     "dish_radius", "ball_radius", "slip_alpha", "curvature_k",
                     "tip_radius", "max_deflection", "drag_gain", "spring_factor",
                     "die_half", "push_threshold"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    @property
    def px_per_mm(self) -> float:
        return self.image_shape[1] / self.sensor_diameter

    @property
    def object_top(self) -> float:
        """Height of the task object's highest contact surface."""
        if self.task == "ball":
            return 2.0 * self.ball_radius
        if self.task == "stick":
            return self.tip_height
        return self.die_height + self.dot_height

    @property
    def nominal_contact_z(self) -> float:
        """Sensor height giving a firm nominal press on the object."""
        return self.object_top - 0.5 * self.depth_scale

    @property
    def env_tag(self) -> str:
        h, w, c = self.image_shape
        return f"{self.task}-{h}x{w}x{c}"


@dataclass(frozen=True)
class PlannerConfig:
    """Cross-entropy-method settings for the MPC planner."""

    n_samples: int = 100
    n_iters: int = 3
    elite_fraction: float = 0.1
    plan_length: int = 5              # distinct planned actions
    action_repeat: int = 3            # horizon = plan_length * action_repeat
    init_std: tuple[float, float, float] = (1.5, 1.5, 1.0)  # mm per axis, iteration 0
    min_std: float = 0.3              # mm, refit floor
    warm_start: bool = False          # seed each replan with the previous best plan
    seed: int = 0

    def __post_init__(self):
        if self.n_elites < 2 or self.n_elites > self.n_samples:
            raise ConfigError("need n_samples >= elites >= 2")
        if self.plan_length < 1 or self.action_repeat < 1:
            raise ConfigError("plan_length and action_repeat must be >= 1")

    @property
    def n_elites(self) -> int:
        return max(2, int(round(self.elite_fraction * self.n_samples)))

    @property
    def horizon(self) -> int:
        return self.plan_length * self.action_repeat


@dataclass(frozen=True)
class TrainConfig:
    """Learned-model trainer settings."""

    learning_rate: float = 0.02
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 6
    # (epoch, rollout horizon) pairs: from the given epoch on, unroll this
    # many prediction steps. 0 horizon means "full trajectory".
    curriculum: tuple[tuple[int, int], ...] = ((0, 4), (2, 8), (4, 0))
    seed: int = 0
    grad_check_dtype: str = "float64"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def horizon_at(self, epoch: int, full: int) -> int:
        h = full
        for start, hor in self.curriculum:
            if epoch >= start:
                h = hor if hor > 0 else full
        return min(h, full)


@dataclass(frozen=True)
class BaselineConfig:
    """Hand-engineered centroid controller settings."""

    step_length: float = 2.0          # mm per control step, tuned by tune_step_length
    contact_z: float = 5.0            # nominal press height the controller regulates to
    # total squared-difference weight below eps * H * W counts as a blank image
    blank_eps: float = 1e-4

    def __post_init__(self):
        if self.step_length <= 0:
            raise ConfigError("step_length must be > 0")


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark protocol settings."""

    n_episodes: int = 30
    t_max: int = 15
    seed: int = 0
    # goal sampling bounds, as fractions of the task's reachable region
    ball_goal_frac: float = 0.7
    stick_goal_frac: float = 0.8
    die_goal_rolls: int = 2
    threshold_grid_max: int = 24      # px, threshold curve sampled at 0..max


@dataclass(frozen=True)
class Config:
    """Bundle of all sections of one config file."""

    env: EnvConfig = field(default_factory=EnvConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


_SECTIONS = {
    "env": EnvConfig,
    "planner": PlannerConfig,
    "train": TrainConfig,
    "baseline": BaselineConfig,
    "bench": BenchConfig,
}


def _parse_value(text: str, kind):
    text = text.strip()
    if kind is float:
        return float(text)
    if kind is int:
        return int(text)
    if kind is str:
        return text
    # tuple-typed fields are comma / semicolon separated
    if kind in (tuple, "tuple"):
        return text
    raise ConfigError(f"unsupported config field type {kind}")


def _coerce_field(fld: dataclasses.Field, text: str):
    text = text.strip()
    try:
        if fld.type in ("float", float):
            return float(text)
        if fld.type in ("int", int):
            return int(text)
        if fld.type in ("str", str):
            return text
        if fld.name == "image_shape":
            parts = [int(p) for p in text.replace("x", ",").split(",")]
            return tuple(parts)
        if fld.name in ("workspace_z", "init_std"):
            parts = [float(p) for p in text.split(",")]
            return tuple(parts)
        if fld.name == "curriculum":
            pairs = []
            for chunk in text.split(";"):
                chunk = chunk.strip()
                if chunk:
                    e, h = chunk.split(",")
                    pairs.append((int(e), int(h)))
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(f"bad value for {fld.name}: {text!r}") from exc
    raise ConfigError(f"config field {fld.name} cannot be parsed from text")


def load_config(path) -> Config:
    """Read the INI config file at ``path`` into a Config bundle.

    Unknown sections or keys are errors so that typos fail loudly.
    """
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"config file not found: {path}")
    kwargs = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        cls = _SECTIONS[section]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        sec_kwargs = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            sec_kwargs[key] = _coerce_field(fields[key], raw)
        kwargs[section] = cls(**sec_kwargs)
    return Config(**kwargs)


def save_config(cfg: Config, path) -> None:
    """Write ``cfg`` back out as an INI file (inverse of load_config)."""
    parser = configparser.ConfigParser()
    for section, value in (("env", cfg.env), ("planner", cfg.planner),
                           ("train", cfg.train), ("baseline", cfg.baseline),
                           ("bench", cfg.bench)):
        parser.add_section(section)
        for fld in dataclasses.fields(value):
            v = getattr(value, fld.name)
            if fld.name == "image_shape":
                v = ",".join(str(x) for x in v)
            elif fld.name in ("workspace_z", "init_std"):
                v = ",".join(repr(float(x)) for x in v)
            elif fld.name == "curriculum":
                v = "; ".join(f"{e},{h}" for e, h in v)
            parser.set(section, fld.name, str(v))
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
