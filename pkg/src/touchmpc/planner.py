"""Cross-entropy-method planning and the model-predictive control loop.

Planning samples short action plans from a diagonal Gaussian, scores each by
rolling the dynamics model forward and summing the per-step image distance
to the goal, then refits the Gaussian to the lowest-cost elites. The MPC
loop replans from scratch every step and executes only the first action of
the winning plan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, PlannerConfig
from .core import ACTION_LIMIT_MM, GoalSpec, expand_repeats, mse
from .data import Trajectory
from .errors import PlanningFailedError, TouchMpcError
from .models.base import CONTEXT_FRAMES, PredictionRequest, padded_context
from .sim import reset, step


@dataclass
class PlanResult:
    """Outcome of one CEM planning call."""

    best_actions: np.ndarray          # (horizon, 3) after repeat expansion
    best_cost: float
    elite_mean_costs: list[float]     # one entry per CEM iteration
    predicted_images: np.ndarray      # (horizon, H, W, C) for the best plan
    best_plan: np.ndarray = field(default=None)  # (plan_length, 3) pre-expansion


def rollout_cost(model, context: PredictionRequest, actions, goal: GoalSpec) -> float:
    """Sum of per-step MSE to the goal image over the whole predicted rollout."""
    req = PredictionRequest(context.context_images, context.context_actions,
                            actions, context.sim_state)
    preds = model.predict(req)
    return float(sum(mse(goal.image, frame) for frame in preds))


def _batch_costs(preds: np.ndarray, goal_image: np.ndarray) -> np.ndarray:
    """Vectorized rollout costs for (N, T, H, W, C) predictions."""
    n, t = preds.shape[:2]
    per_el = preds.reshape(n, t, -1).astype(np.float64)
    per_el -= goal_image.reshape(-1).astype(np.float64)
    np.square(per_el, out=per_el)
    return per_el.mean(axis=2).sum(axis=1)


def _predict_many(model, req: PredictionRequest, actions_batch: np.ndarray) -> np.ndarray:
    if hasattr(model, "predict_many"):
        return model.predict_many(req, actions_batch)
    outs = []
    for acts in actions_batch:
        outs.append(model.predict(PredictionRequest(
            req.context_images, req.context_actions, acts, req.sim_state)))
    return np.stack(outs)


def _score_candidates(model, req: PredictionRequest, expanded: np.ndarray,
                      goal_image: np.ndarray, chunk: int = 20) -> np.ndarray:
    """Rollout costs for all candidates, evaluated in memory-bounded chunks."""
    n = expanded.shape[0]
    costs = np.empty(n)
    for start in range(0, n, chunk):
        preds = _predict_many(model, req, expanded[start:start + chunk])
        costs[start:start + chunk] = _batch_costs(preds, goal_image)
    return costs


def _candidate_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed, iteration, index))))


def plan_cem(model, context: PredictionRequest, goal: GoalSpec,
             cfg: PlannerConfig, seed: int | None = None,
             cost_scale: float = 1.0,
             init_plan: np.ndarray | None = None) -> PlanResult:
    """Optimize an action plan with the cross-entropy method.

    Each iteration draws ``cfg.n_samples`` plans of ``cfg.plan_length``
    actions from the per-dimension Gaussian (iteration 0: zero mean,
    ``cfg.init_std``), clamps them, expands by ``cfg.action_repeat``, scores
    them with the summed-MSE rollout cost, and refits mean/std to the top
    elites (std floored at ``cfg.min_std``). Every candidate's noise comes
    from its own generator split from (seed, iteration, index), so parallel
    and serial evaluation orders would sample identically. Returns the best
    plan seen across all iterations; deterministic given the seed.

    ``init_plan`` warm-starts the search: it becomes the iteration-0 mean
    and replaces sample 0, so a plan carried over from the previous MPC step
    is re-scored exactly and never lost to sampling noise. ``cost_scale``
    multiplies every cost by a positive constant; the chosen plan is
    invariant to it, which is how that invariance gets tested.
    """
    seed = cfg.seed if seed is None else seed
    if init_plan is not None:
        mean = np.clip(np.asarray(init_plan, dtype=np.float64),
                       -ACTION_LIMIT_MM, ACTION_LIMIT_MM)
    else:
        mean = np.zeros((cfg.plan_length, 3))
    std = np.tile(np.asarray(cfg.init_std, dtype=np.float64), (cfg.plan_length, 1))
    best_cost = np.inf
    best_plan = None
    best_index = -1
    elite_means = []
    for it in range(cfg.n_iters):
        plans = np.empty((cfg.n_samples, cfg.plan_length, 3))
        for i in range(cfg.n_samples):
            g = _candidate_rng(seed, it, i)
            plans[i] = mean + std * g.standard_normal((cfg.plan_length, 3))
        if it == 0 and init_plan is not None:
            plans[0] = mean
        np.clip(plans, -ACTION_LIMIT_MM, ACTION_LIMIT_MM, out=plans)
        expanded = np.repeat(plans, cfg.action_repeat, axis=1)
        costs = cost_scale * _score_candidates(model, context, expanded, goal.image)
        finite = np.isfinite(costs)
        if not finite.any():
            raise PlanningFailedError(f"all {cfg.n_samples} costs non-finite at iteration {it}")
        costs = np.where(finite, costs, np.inf)
        order = np.argsort(costs, kind="stable")
        elites = plans[order[:cfg.n_elites]]
        elite_means.append(float(costs[order[:cfg.n_elites]].mean()))
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_plan = plans[order[0]].copy()
            best_index = (it, int(order[0]))
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), cfg.min_std)
    best_actions = expand_repeats(best_plan, cfg.action_repeat)
    best_preds = _predict_many(model, context, best_actions[None])[0]
    return PlanResult(best_actions=best_actions, best_cost=best_cost,
                      elite_mean_costs=elite_means, predicted_images=best_preds,
                      best_plan=best_plan)


def mpc_episode(env_cfg: EnvConfig, init_seed: int, model, goal: GoalSpec,
                cfg: PlannerConfig, t_max: int,
                noise: bool = True) -> tuple[Trajectory, list[PlanResult]]:
    """Run closed-loop MPC for ``t_max`` steps from a fresh episode.

    At every step the planner sees the last CONTEXT_FRAMES observations
    (padded by repetition at the start), plans from scratch, and executes
    only the first action of the best plan. Returns the executed trajectory
    and the per-step plans. Deterministic given (init_seed, cfg.seed).
    """
    state, obs = reset(env_cfg, init_seed)
    observations = [obs]
    actions: list[np.ndarray] = []
    plans: list[PlanResult] = []
    carry = None
    for t in range(t_max):
        ctx_imgs, ctx_acts = padded_context(observations, actions)
        req = PredictionRequest(ctx_imgs, ctx_acts, np.zeros((cfg.horizon, 3)),
                                sim_state=state)
        try:
            plan = plan_cem(model, req, goal, cfg,
                            seed=int(np.random.SeedSequence(
                                (cfg.seed, init_seed, t)).generate_state(1)[0]),
                            init_plan=carry)
            first = plan.best_actions[0]
        except TouchMpcError as exc:
            raise type(exc)(f"step {t}: {exc}") from exc
        if cfg.warm_start:
            carry = plan.best_plan
        state, obs = step(env_cfg, state, first, noise=noise)
        observations.append(obs)
        actions.append(np.asarray(first, dtype=np.float64))
        plans.append(plan)
    traj = Trajectory(np.stack(observations),
                      np.array(actions, dtype=np.float32).reshape(len(actions), 3),
                      init_seed, env_cfg.env_tag)
    return traj, plans
