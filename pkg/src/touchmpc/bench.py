"""Benchmark harness: goal generation, paired-seed episodes, reports.

The protocol mirrors the evaluation the controllers are meant to reproduce:
for every episode index, a goal and an initial environment state are drawn
from the master seed, every controller runs from that identical start, and
the final frame is scored by image MSE plus a ground-truth metric the
simulator makes exact: pixel distance between final and goal object
positions (ball/stick) or top-face match (die).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import CentroidController
from .config import BaselineConfig, BenchConfig, EnvConfig, PlannerConfig
from .core import GoalSpec, mse
from .data import Trajectory
from .errors import InvalidGoalError, TouchMpcError
from .icosa import N_FACES, faces_within
from .models.base import PredictionRequest, padded_context
from .planner import plan_cem
from .sim import SimState, render_imprint, reset, step
from .svgplot import step_plot_svg


@dataclass(frozen=True)
class GoalStateSpec:
    """Desired hidden configuration a goal image is rendered from.

    ``position`` is the task 2-vector (ball center / stick deflection / die
    offset); ``top_face`` applies to the die only. ``press_depth`` is how
    deep the goal press is; None means the nominal contact depth.
    """

    task: str
    position: tuple[float, float] = (0.0, 0.0)
    top_face: int = 0
    press_depth: float | None = None


def make_goal(env_cfg: EnvConfig, spec: GoalStateSpec, seed: int
              ) -> tuple[GoalSpec, SimState]:
    """Render a noise-free goal image; returns it with the withheld state.

    The sensor is placed at the field center pressing to the goal depth, so
    the goal image shows the object at its position relative to that pose.
    Raises InvalidGoalError for configurations outside the reachable region.
    """
    if spec.task != env_cfg.task:
        raise InvalidGoalError(f"goal task {spec.task!r} != env task {env_cfg.task!r}")
    pos = np.asarray(spec.position, dtype=np.float64)
    r = float(np.hypot(*pos))
    if env_cfg.task == "ball":
        if r > env_cfg.dish_radius:
            raise InvalidGoalError(f"ball at radius {r:.2f} outside dish "
                                   f"{env_cfg.dish_radius}")
        face = 0
    elif env_cfg.task == "stick":
        if r > env_cfg.max_deflection:
            raise InvalidGoalError(f"deflection {r:.2f} beyond limit "
                                   f"{env_cfg.max_deflection}")
        face = 0
    else:
        if not 1 <= spec.top_face <= N_FACES:
            raise InvalidGoalError(f"die face {spec.top_face} not in 1..{N_FACES}")
        if r > env_cfg.offset_max:
            raise InvalidGoalError(f"die offset {r:.2f} beyond limit "
                                   f"{env_cfg.offset_max}")
        face = spec.top_face
    depth = spec.press_depth if spec.press_depth is not None \
        else env_cfg.object_top - env_cfg.nominal_contact_z
    z = env_cfg.object_top - depth
    lo, hi = env_cfg.workspace_z
    if not lo <= z <= hi:
        raise InvalidGoalError(f"goal press depth {depth} puts sensor z {z} "
                               f"outside [{lo}, {hi}]")
    state, _ = reset(env_cfg, seed)
    state.obj = pos.copy()
    state.top_face = face
    state.sensor = np.array([0.0, 0.0, z])
    image = render_imprint(env_cfg, state)
    return GoalSpec(image=image, env_tag=env_cfg.env_tag), state.clone()


def _episode_rng(master_seed: int, episode: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((master_seed, episode, stream))))


def episode_seed(master_seed: int, episode: int) -> int:
    """Environment reset seed for one benchmark episode."""
    return int(_episode_rng(master_seed, episode, 2).integers(0, 2**63))


def sample_goal(env_cfg: EnvConfig, master_seed: int, episode: int,
                bench_cfg: BenchConfig | None = None,
                stick_opposite: bool = False) -> tuple[GoalSpec, SimState]:
    """Draw a reachable goal for one episode from the master seed.

    Ball positions are uniform over 70% of the dish radius, stick
    deflections uniform over [40%, 80%] of the deflection limit, die faces
    uniform over faces at most two rolls from the start face (excluding it),
    with a small uniform offset. ``stick_opposite`` flips nothing here; it
    is consumed by initial_engagement so that the start deflection opposes
    this goal.
    """
    bench_cfg = bench_cfg or BenchConfig()
    rng = _episode_rng(master_seed, episode, 3)
    if env_cfg.task == "ball":
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = bench_cfg.ball_goal_frac * env_cfg.dish_radius * np.sqrt(rng.uniform())
        spec = GoalStateSpec("ball", (rad * np.cos(ang), rad * np.sin(ang)))
    elif env_cfg.task == "stick":
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = env_cfg.max_deflection * rng.uniform(0.5 * bench_cfg.stick_goal_frac,
                                                   bench_cfg.stick_goal_frac)
        spec = GoalStateSpec("stick", (rad * np.cos(ang), rad * np.sin(ang)))
    else:
        start = N_FACES
        choices = [f for f in faces_within(start, bench_cfg.die_goal_rolls)
                   if f != start]
        target = int(rng.choice(choices))
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = 0.25 * env_cfg.offset_max * rng.uniform()
        spec = GoalStateSpec("die", (rad * np.cos(ang), rad * np.sin(ang)),
                             top_face=target)
    return make_goal(env_cfg, spec, episode_seed(master_seed, episode))


def initial_engagement(env_cfg: EnvConfig, goal_state: SimState,
                       stick_opposite: bool) -> list[np.ndarray]:
    """Scripted pre-roll actions applied before handing control over.

    Every episode starts by bringing the lifted sensor down to the nominal
    contact depth (split into bound-respecting steps), so both controllers
    begin with a visible imprint. Stick episodes that must oppose the goal
    additionally drag the tip to the far side, so reaching the goal requires
    releasing contact first.
    """
    pre: list[np.ndarray] = []
    remaining = env_cfg.nominal_contact_z - env_cfg.reset_z
    while abs(remaining) > 1e-9:
        dz = float(np.clip(remaining, -6.0, 6.0))
        pre.append(np.array([0.0, 0.0, dz]))
        remaining -= dz
    if env_cfg.task == "stick" and stick_opposite:
        direction = np.asarray(goal_state.obj, dtype=np.float64)
        n = float(np.hypot(*direction))
        direction = direction / n if n > 1e-9 else np.array([1.0, 0.0])
        drag = -3.0 * direction
        pre.append(np.array([drag[0], drag[1], 0.0]))
        pre.append(np.array([drag[0], drag[1], 0.0]))
    return pre


def run_controller_episode(env_cfg: EnvConfig, init_seed: int, controller,
                           goal: GoalSpec, t_max: int,
                           init_actions: list[np.ndarray] | None = None
                           ) -> tuple[SimState, Trajectory]:
    """Run one closed-loop episode; returns the final state and trajectory."""
    state, obs = reset(env_cfg, init_seed)
    observations = [obs]
    actions: list[np.ndarray] = []
    for a in (init_actions or []):
        state, obs = step(env_cfg, state, a)
        observations.append(obs)
        actions.append(np.asarray(a, dtype=np.float64))
    controller.begin_episode(goal, init_seed)
    for t in range(t_max):
        a = controller.select_action(observations, actions, state, t)
        state, obs = step(env_cfg, state, a)
        observations.append(obs)
        actions.append(np.asarray(a, dtype=np.float64))
    traj = Trajectory(np.stack(observations),
                      np.array(actions, dtype=np.float32).reshape(len(actions), 3),
                      init_seed, env_cfg.env_tag)
    return state, traj


class MpcController:
    """Tactile-MPC controller: replans with CEM at every step."""

    def __init__(self, model, planner_cfg: PlannerConfig):
        self.model = model
        self.planner_cfg = planner_cfg
        self.plans = []
        self._carry = None

    def begin_episode(self, goal: GoalSpec, init_seed: int) -> None:
        self.goal = goal
        self.init_seed = init_seed
        self.plans = []
        self._carry = None

    def select_action(self, observations, actions, sim_state, t: int) -> np.ndarray:
        ctx_imgs, ctx_acts = padded_context(observations, actions)
        req = PredictionRequest(ctx_imgs, ctx_acts,
                                np.zeros((self.planner_cfg.horizon, 3)),
                                sim_state=sim_state)
        seed = int(np.random.SeedSequence(
            (self.planner_cfg.seed, self.init_seed, t)).generate_state(1)[0])
        plan = plan_cem(self.model, req, self.goal, self.planner_cfg, seed=seed,
                        init_plan=self._carry)
        self.plans.append(plan)
        if self.planner_cfg.warm_start:
            # only one of the block's repeats was executed, so the previous
            # plan is still roughly aligned; carry it whole and let the refit
            # absorb the one-step offset
            self._carry = plan.best_plan
        return plan.best_actions[0]


def make_baseline_controller(env_cfg: EnvConfig, step_length: float = 2.0,
                             blank_eps: float = 1e-4) -> CentroidController:
    cfg = BaselineConfig(step_length=step_length,
                         contact_z=env_cfg.nominal_contact_z,
                         blank_eps=blank_eps)
    return CentroidController(cfg, env_cfg)


def rel_position_px(env_cfg: EnvConfig, state: SimState) -> np.ndarray:
    """Object position relative to the sensor, in pixel units (unbounded)."""
    rel = state.obj - state.sensor[:2]
    return rel * env_cfg.px_per_mm


def final_centroid_distance_px(env_cfg: EnvConfig, final_state: SimState,
                               goal_state: SimState) -> float:
    """Ground-truth distance between final and goal imprint positions (px).

    Both positions are object-relative-to-sensor, matching what the tactile
    image shows; the distance is computed in the fixed mm->px scale and is
    defined even when an object has left the field of view.
    """
    d = rel_position_px(env_cfg, final_state) - rel_position_px(env_cfg, goal_state)
    return float(np.hypot(*d))


@dataclass
class EpisodeResult:
    """Scores for one controller on one episode."""

    controller: str
    episode: int
    seed: int
    final_mse: float
    centroid_distance_px: float | None
    die_success: bool | None
    per_step_mse: list[float] = field(default_factory=list)
    failed: bool = False


@dataclass
class BenchReport:
    """Paired-seed benchmark outcome for one task."""

    task: str
    n_episodes: int
    t_max: int
    seed: int
    controllers: list[str]
    episodes: dict[str, list[EpisodeResult]]
    medians: dict[str, dict[str, float]]
    success_rates: dict[str, float]
    threshold_curves: dict[str, list[tuple[float, int]]]


def lower_median(values) -> float:
    """Median with the lower-of-the-two convention for even counts."""
    ordered = sorted(values)
    if not ordered:
        return float("nan")
    return float(ordered[(len(ordered) - 1) // 2])


def threshold_curve(distances, grid=None) -> list[tuple[float, int]]:
    """Counts of episodes with distance strictly below each threshold."""
    distances = [float(d) for d in distances]
    if any(not np.isfinite(d) or d < 0 for d in distances):
        distances = [d for d in distances if np.isfinite(d) and d >= 0]
    if grid is None:
        grid = np.arange(0.0, BenchConfig().threshold_grid_max + 1.0)
    return [(float(th), int(sum(d < th for d in distances))) for th in grid]


def run_benchmark(env_cfg: EnvConfig, controllers: dict, n_episodes: int,
                  t_max: int, seed: int, bench_cfg: BenchConfig | None = None,
                  stick_opposite: bool = False) -> BenchReport:
    """Compare controllers on paired seeds.

    ``controllers`` maps a name to a factory () -> controller, so each
    episode gets a fresh instance. A controller exception marks that episode
    failed (infinite distance, unsuccessful) and the run continues.
    """
    if not controllers:
        raise ValueError("need at least one controller")
    bench_cfg = bench_cfg or BenchConfig()
    episodes: dict[str, list[EpisodeResult]] = {name: [] for name in controllers}
    for ep in range(n_episodes):
        goal, goal_state = sample_goal(env_cfg, seed, ep, bench_cfg)
        init_seed = episode_seed(seed, ep)
        init_actions = initial_engagement(env_cfg, goal_state, stick_opposite)
        for name, factory in controllers.items():
            controller = factory()
            try:
                final_state, traj = run_controller_episode(
                    env_cfg, init_seed, controller, goal, t_max, init_actions)
                per_step = [mse(img, goal.image) for img in traj.images]
                result = EpisodeResult(
                    controller=name, episode=ep, seed=init_seed,
                    final_mse=per_step[-1],
                    centroid_distance_px=(
                        None if env_cfg.task == "die"
                        else final_centroid_distance_px(env_cfg, final_state, goal_state)),
                    die_success=(
                        None if env_cfg.task != "die"
                        else final_state.top_face == goal_state.top_face),
                    per_step_mse=per_step)
            except Exception as exc:  # noqa: BLE001 - a crashed controller is a scored failure
                if isinstance(exc, KeyboardInterrupt):
                    raise
                result = EpisodeResult(
                    controller=name, episode=ep, seed=init_seed,
                    final_mse=float("inf"),
                    centroid_distance_px=None if env_cfg.task == "die" else float("inf"),
                    die_success=False if env_cfg.task == "die" else None,
                    failed=True)
            episodes[name].append(result)
    medians = {}
    success_rates = {}
    curves = {}
    grid = np.arange(0.0, bench_cfg.threshold_grid_max + 1.0)
    for name, results in episodes.items():
        medians[name] = {"final_mse": lower_median([r.final_mse for r in results])}
        if env_cfg.task == "die":
            success_rates[name] = sum(bool(r.die_success) for r in results) / len(results)
        else:
            dists = [r.centroid_distance_px for r in results]
            medians[name]["centroid_distance_px"] = lower_median(dists)
            curves[name] = threshold_curve(dists, grid)
    return BenchReport(task=env_cfg.task, n_episodes=n_episodes, t_max=t_max,
                       seed=seed, controllers=list(controllers),
                       episodes=episodes, medians=medians,
                       success_rates=success_rates, threshold_curves=curves)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def emit_report(report: BenchReport, out_dir) -> list[str]:
    """Write per-episode and summary tables plus threshold-curve plots.

    Emitting the same report twice produces byte-identical files. Returns
    the relative names of the files written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    lines = ["task\tcontroller\tepisode\tseed\tfailed\tfinal_mse\t"
             "centroid_distance_px\tdie_success"]
    for name in report.controllers:
        for r in report.episodes[name]:
            lines.append("\t".join([
                report.task, name, str(r.episode), str(r.seed),
                "1" if r.failed else "0", _fmt(r.final_mse),
                _fmt(r.centroid_distance_px), _fmt(r.die_success)]))
    (out / "episodes.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append("episodes.tsv")

    lines = ["task\tcontroller\tn_episodes\tn_failed\tmedian_final_mse\t"
             "median_centroid_distance_px\tsuccess_rate"]
    for name in report.controllers:
        results = report.episodes[name]
        med = report.medians[name]
        lines.append("\t".join([
            report.task, name, str(len(results)),
            str(sum(r.failed for r in results)),
            _fmt(med.get("final_mse")),
            _fmt(med.get("centroid_distance_px")),
            _fmt(report.success_rates.get(name))]))
    (out / "summary.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append("summary.tsv")

    if report.threshold_curves:
        curves = {name: [(x, float(y)) for x, y in pts]
                  for name, pts in report.threshold_curves.items()}
        svg = step_plot_svg(curves,
                            title=f"{report.task}: episodes within threshold",
                            x_label="final centroid distance threshold (px)",
                            y_label=f"episodes (of {report.n_episodes})")
        (out / "threshold_curves.svg").write_text(svg, encoding="utf-8")
        written.append("threshold_curves.svg")
    return written
