"""Deterministic quasi-static contact simulators for the three touch tasks.

Three single-finger tasks share one sensor model: a flat gel face driven in
x, y, z. Dynamics are first-order and step-indexed (no velocities): each
step integrates the commanded finger delta, decides contact, and applies one
task-specific object update.

    ball   a bearing in a shallow dish; contact drag displaces it opposite
           the finger, and the dish curvature re-centers it when free.
    stick  a spring-loaded analog-stick tip; contact within a small capture
           radius drags the deflection, springs pull it home otherwise.
    die    a 20-sided die abstracted to a face automaton: pushes above a
           threshold roll the top face along icosahedral adjacency edges.

The imprint renderer turns per-pixel penetration depth into a 3-channel
image: normalized depth plus the two finite-difference depth gradients
(encoded as 0.5 +/- scaled gradient) so imprints carry edge structure.

Physics and rendering are implemented once, vectorized over a batch axis;
the scalar reset/step/render API wraps batch size 1, and planners may drive
the batch entry points directly to evaluate many candidate rollouts at once.
Noise-free results are bit-identical between the two routes because every
operation is elementwise.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import icosa
from .config import EnvConfig
from .core import ACTION_LIMIT_MM, clamp_action
from .errors import CorruptedStateError, NotVisibleError, TaskMismatchError

# 3x3 pip-grid offsets (in units of half the face width) for 1..9 dots.
_PIP = {
    "TL": (-1, -1), "TC": (0, -1), "TR": (1, -1),
    "ML": (-1, 0), "C": (0, 0), "MR": (1, 0),
    "BL": (-1, 1), "BC": (0, 1), "BR": (1, 1),
}
_PIP_LAYOUT = {
    1: ("C",),
    2: ("TL", "BR"),
    3: ("TL", "C", "BR"),
    4: ("TL", "TR", "BL", "BR"),
    5: ("TL", "TR", "C", "BL", "BR"),
    6: ("TL", "ML", "BL", "TR", "MR", "BR"),
    7: ("TL", "ML", "BL", "TR", "MR", "BR", "C"),
    8: ("TL", "ML", "BL", "TR", "MR", "BR", "TC", "BC"),
    9: ("TL", "ML", "BL", "TR", "MR", "BR", "TC", "BC", "C"),
}
_MAX_CIRCLES = 10  # nine pips plus the rim marker


@dataclass
class SimState:
    """Full hidden world state: sensor pose, object pose, and noise stream.

    ``obj`` is the task's 2-vector: ball center (mm, dish frame), stick
    deflection (mm), or die in-plane offset (mm). ``top_face`` is only
    meaningful for the die task (0 otherwise).
    """

    task: str
    sensor: np.ndarray                 # (3,) x, y, z in mm
    obj: np.ndarray                    # (2,)
    top_face: int
    rng: np.random.Generator

    def clone(self) -> "SimState":
        g = np.random.Generator(np.random.PCG64())
        g.bit_generator.state = self.rng.bit_generator.state
        return SimState(self.task, self.sensor.copy(), self.obj.copy(),
                        self.top_face, g)

    def same_as(self, other: "SimState") -> bool:
        return (self.task == other.task
                and np.array_equal(self.sensor, other.sensor)
                and np.array_equal(self.obj, other.obj)
                and self.top_face == other.top_face
                and self.rng.bit_generator.state == other.rng.bit_generator.state)


def _validate_state(cfg: EnvConfig, state: SimState) -> None:
    if state.task != cfg.task:
        raise CorruptedStateError(f"state task {state.task!r} != cfg task {cfg.task!r}")
    if not (np.all(np.isfinite(state.sensor)) and np.all(np.isfinite(state.obj))):
        raise CorruptedStateError("non-finite state")
    tol = 1e-6
    if cfg.task == "ball":
        if np.hypot(*state.obj) > cfg.dish_radius + tol:
            raise CorruptedStateError("ball outside dish")
    elif cfg.task == "stick":
        if np.hypot(*state.obj) > cfg.max_deflection + tol:
            raise CorruptedStateError("stick deflection beyond limit")
    else:
        if not 1 <= state.top_face <= icosa.N_FACES:
            raise CorruptedStateError(f"die face {state.top_face} out of range")
        if np.hypot(*state.obj) > cfg.offset_max + tol:
            raise CorruptedStateError("die offset beyond limit")


# ---------------------------------------------------------------------------
# batched noise-free core
# ---------------------------------------------------------------------------

def contact_mask(cfg: EnvConfig, sensor: np.ndarray, obj: np.ndarray) -> np.ndarray:
    """Which of a batch of poses couple the gel to the object.

    Besides the penetration-depth threshold, the object must lie under the
    finite gel face: the whole field for the ball, a tight capture radius
    for the stick tip, and a push radius for the die.
    """
    deep = (cfg.object_top - sensor[:, 2]) > cfg.contact_threshold
    rel = obj - sensor[:, :2]
    h, w, _ = cfg.image_shape
    if cfg.task == "ball":
        half_x = 0.5 * w / cfg.px_per_mm
        half_y = 0.5 * h / cfg.px_per_mm
        near = (np.abs(rel[:, 0]) <= half_x) & (np.abs(rel[:, 1]) <= half_y)
    elif cfg.task == "stick":
        near = np.hypot(rel[:, 0], rel[:, 1]) <= cfg.drag_radius
    else:
        near = np.hypot(rel[:, 0], rel[:, 1]) <= cfg.push_radius
    return deep & near


def physics_step_batch(cfg: EnvConfig, sensor: np.ndarray, obj: np.ndarray,
                       face: np.ndarray, actions: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance N independent worlds one step (noise-free, pure).

    Object updates use the realized finger displacement after workspace
    clamping, not the raw command. Returns new (sensor, obj, face) arrays.
    """
    a = np.clip(actions, -ACTION_LIMIT_MM, ACTION_LIMIT_MM)
    new_sensor = sensor + a
    lo, hi = cfg.workspace_z
    np.clip(new_sensor[:, 0], -cfg.workspace_xy, cfg.workspace_xy, out=new_sensor[:, 0])
    np.clip(new_sensor[:, 1], -cfg.workspace_xy, cfg.workspace_xy, out=new_sensor[:, 1])
    np.clip(new_sensor[:, 2], lo, hi, out=new_sensor[:, 2])
    delta = new_sensor - sensor
    contact = contact_mask(cfg, new_sensor, obj)
    new_face = face.copy()

    if cfg.task == "ball":
        dragged = obj - cfg.slip_alpha * delta[:, :2]
        freed = obj * (1.0 - cfg.curvature_k)
        new_obj = np.where(contact[:, None], dragged, freed)
        _clamp_radius(new_obj, cfg.dish_radius)
    elif cfg.task == "stick":
        dragged = obj + cfg.drag_gain * delta[:, :2]
        _clamp_radius(dragged, cfg.max_deflection)
        freed = obj * cfg.spring_factor
        new_obj = np.where(contact[:, None], dragged, freed)
    else:
        push = delta[:, :2]
        mag = np.hypot(push[:, 0], push[:, 1])
        new_obj = np.where(contact[:, None], obj + cfg.offset_follow * push, obj)
        # rolling needs grip: the finger must start the motion on the die top
        rel_before = obj - sensor[:, :2]
        gripped = np.hypot(rel_before[:, 0], rel_before[:, 1]) <= cfg.grip_radius
        rolling = contact & gripped & (mag > cfg.push_threshold)
        for i in np.flatnonzero(rolling):
            new_face[i] = icosa.roll(int(face[i]), push[i])
            # the die tumbles end-over-end with the dragging finger and
            # lands beneath the fingertip
            new_obj[i] = new_sensor[i, :2]
        _clamp_radius(new_obj, cfg.offset_max)
    return new_sensor, new_obj, new_face


def _clamp_radius(xy: np.ndarray, radius: float) -> None:
    r = np.hypot(xy[:, 0], xy[:, 1])
    over = r > radius
    if np.any(over):
        xy[over] *= (radius / r[over])[:, None]


@functools.lru_cache(maxsize=8)
def _pixel_grids(cfg: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sample offsets (mm, relative to the sensor center) of each pixel."""
    h, w, _ = cfg.image_shape
    xs = (np.arange(w) - w / 2.0) / cfg.px_per_mm
    ys = (np.arange(h) - h / 2.0) / cfg.px_per_mm
    return xs[None, :], ys[:, None]


def _field_reach(cfg: EnvConfig) -> float:
    """Lateral distance beyond which no object pixel can be in the image."""
    h, w, _ = cfg.image_shape
    half_diag = 0.5 * float(np.hypot(w, h)) / cfg.px_per_mm
    if cfg.task == "ball":
        return half_diag + cfg.ball_radius
    if cfg.task == "stick":
        return half_diag + cfg.tip_radius
    return half_diag + cfg.die_half * 1.5


@functools.lru_cache(maxsize=64)
def _die_circles_cached(die_half: float, dot_radius: float, face: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    cx = np.full(_MAX_CIRCLES, 1e6)
    cy = np.full(_MAX_CIRCLES, 1e6)
    rad = np.zeros(_MAX_CIRCLES)
    n_dots = (face % 9) + 1
    # scale the radius so every face carries a similar imprint energy; a
    # single huge dot and nine small ones are equally visible to the cost
    radius = min(dot_radius * np.sqrt(5.0 / n_dots), 0.4 * die_half)
    rng = np.random.Generator(np.random.PCG64(face))
    span = 0.55 * die_half
    placed = 0
    # deterministic rejection sampling; falls back to loosened separation if
    # a face is unlucky, which cannot change the dot count
    sep = 2.0 * radius
    attempts = 0
    while placed < n_dots:
        p = rng.uniform(-span, span, size=2)
        attempts += 1
        if all((p[0] - cx[i]) ** 2 + (p[1] - cy[i]) ** 2 >= sep * sep
               for i in range(placed)):
            cx[placed], cy[placed] = p
            rad[placed] = radius
            placed += 1
        if attempts > 200:
            sep *= 0.9
            attempts = 0
    ang = 2.0 * np.pi * (face - 1) / icosa.N_FACES
    cx[-1] = 0.825 * die_half * np.cos(ang)
    cy[-1] = 0.825 * die_half * np.sin(ang)
    rad[-1] = 0.7 * dot_radius
    arr = np.stack([cx, cy])
    arr.setflags(write=False)
    rad.setflags(write=False)
    return arr, rad


def _die_circles(cfg: EnvConfig, face: int) -> tuple[np.ndarray, np.ndarray]:
    """Dot centers (relative to the die center) and radii for one face.

    Each face scatters its f mod 9 + 1 dots pseudo-randomly (seeded by the
    face id, so the arrangement is deterministic and shippable) with a
    minimum separation. Scattered patterns overlap different faces' patterns
    roughly equally little, so image distance identifies the face instead of
    tracking dot count, and the face-unique rim marker disambiguates faces
    that share a count.
    """
    return _die_circles_cached(cfg.die_half, cfg.dot_radius, face)


def _depth_batch(cfg: EnvConfig, sensor: np.ndarray, obj: np.ndarray,
                 face: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Penetration-depth fields (M, H, W) for the selected batch members."""
    xs, ys = _pixel_grids(cfg)
    rel = obj[idx] - sensor[idx, :2]
    z = sensor[idx, 2]
    dx = xs[None, :, :] - rel[:, 0, None, None]
    dy = ys[None, :, :] - rel[:, 1, None, None]
    if cfg.task == "ball":
        r = cfg.ball_radius
        rho2 = dx * dx + dy * dy
        cap = r * r - rho2
        np.maximum(cap, 0.0, out=cap)
        surface = np.sqrt(cap, out=cap)
        surface += r
        surface -= z[:, None, None]
        surface[rho2 >= r * r] = 0.0
        return np.maximum(surface, 0.0, out=surface)
    if cfg.task == "stick":
        rho2 = dx * dx + dy * dy
        pen = np.maximum(cfg.tip_height - z, 0.0)
        return np.where(rho2 <= cfg.tip_radius**2, pen[:, None, None], 0.0)

    plate_pen = np.maximum(cfg.die_height - z, 0.0)
    top_pen = np.maximum(cfg.die_height + cfg.dot_height - z, 0.0)
    plate = np.maximum(np.abs(dx), np.abs(dy)) <= cfg.die_half
    depth = np.where(plate, plate_pen[:, None, None], 0.0)
    centers = np.empty((len(idx), 2, _MAX_CIRCLES))
    radii = np.empty((len(idx), _MAX_CIRCLES))
    for j, f in enumerate(face[idx]):
        centers[j], radii[j] = _die_circles(cfg, int(f))
    d2 = ((dx[:, None, :, :] - centers[:, 0, :, None, None]) ** 2
          + (dy[:, None, :, :] - centers[:, 1, :, None, None]) ** 2)
    hit = (d2 <= (radii**2)[:, :, None, None]).any(axis=1)
    return np.where(hit, top_pen[:, None, None], depth)


def render_batch(cfg: EnvConfig, sensor: np.ndarray, obj: np.ndarray,
                 face: np.ndarray) -> np.ndarray:
    """Noise-free imprints (N, H, W, C) for N independent world states."""
    n = sensor.shape[0]
    h, w, c = cfg.image_shape
    out = np.empty((n, h, w, c), dtype=np.float32)
    out[:] = _background_cached(cfg)
    rel = obj - sensor[:, :2]
    visible = ((sensor[:, 2] < cfg.object_top)
               & (np.hypot(rel[:, 0], rel[:, 1]) <= _field_reach(cfg)))
    idx = np.flatnonzero(visible)
    if idx.size == 0:
        return out
    depth = _depth_batch(cfg, sensor, obj, face, idx)
    d0 = np.clip(depth * (1.0 / cfg.depth_scale), 0.0, 1.0).astype(np.float32)
    img = np.empty((len(idx), h, w, c), dtype=np.float32)
    img[..., 0] = d0
    half_gain = 0.5 * cfg.grad_gain
    if c > 1:
        gu = img[..., 1]
        gu[:, :, 1:-1] = d0[:, :, 2:] - d0[:, :, :-2]
        gu[:, :, 1:-1] *= 0.5 * half_gain
        gu[:, :, 0] = half_gain * (d0[:, :, 1] - d0[:, :, 0])
        gu[:, :, -1] = half_gain * (d0[:, :, -1] - d0[:, :, -2])
        gu += 0.5
    if c > 2:
        gv = img[..., 2]
        gv[:, 1:-1, :] = d0[:, 2:, :] - d0[:, :-2, :]
        gv[:, 1:-1, :] *= 0.5 * half_gain
        gv[:, 0, :] = half_gain * (d0[:, 1, :] - d0[:, 0, :])
        gv[:, -1, :] = half_gain * (d0[:, -1, :] - d0[:, -2, :])
        gv += 0.5
    if c > 3:
        img[..., 3:] = 0.5
    np.clip(img, 0.0, 1.0, out=img)
    out[idx] = img
    return out


@functools.lru_cache(maxsize=8)
def _background_cached(cfg: EnvConfig) -> np.ndarray:
    h, w, c = cfg.image_shape
    img = np.full((h, w, c), 0.5, dtype=np.float32)
    img[:, :, 0] = 0.0
    img.setflags(write=False)
    return img


def background_image(cfg: EnvConfig) -> np.ndarray:
    """The constant no-contact image for this sensor configuration."""
    return _background_cached(cfg).copy()


# ---------------------------------------------------------------------------
# scalar environment API
# ---------------------------------------------------------------------------

def reset(cfg: EnvConfig, seed: int) -> tuple[SimState, np.ndarray]:
    """Start a fresh episode: object at its home pose, sensor lifted."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if cfg.task == "ball":
        obj = rng.normal(0.0, cfg.reset_jitter, size=2)
        limit = cfg.dish_radius
        face = 0
    elif cfg.task == "stick":
        obj = np.zeros(2)
        limit = cfg.max_deflection
        face = 0
    else:
        obj = rng.normal(0.0, cfg.reset_jitter, size=2)
        limit = cfg.offset_max
        face = icosa.N_FACES
    r = float(np.hypot(*obj))
    if r > limit:
        obj *= limit / r
    sensor = np.array([0.0, 0.0, cfg.reset_z])
    state = SimState(cfg.task, sensor, obj, face, rng)
    return state, render_imprint(cfg, state, rng=state.rng)


def step(cfg: EnvConfig, state: SimState, action,
         noise: bool = True) -> tuple[SimState, np.ndarray]:
    """Advance one step: move the finger, update the object, render.

    Returns a fresh state; the input state is never mutated. Pixel noise is
    drawn from the new state's own generator so cloned states replay
    bit-identically; ``noise=False`` renders clean and leaves the generator
    untouched.
    """
    _validate_state(cfg, state)
    a = clamp_action(action)
    new = state.clone()
    sensor, obj, face = physics_step_batch(
        cfg, state.sensor[None, :], state.obj[None, :],
        np.array([state.top_face]), a[None, :])
    new.sensor = sensor[0]
    new.obj = obj[0]
    new.top_face = int(face[0])
    img = render_imprint(cfg, new, rng=new.rng if noise else None)
    return new, img


def render_imprint(cfg: EnvConfig, state: SimState,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Render the gel imprint of ``state`` as a tactile image.

    Channel 0 is penetration depth normalized by ``cfg.depth_scale``;
    channels 1 and 2 are 0.5 plus the scaled finite-difference gradients of
    that depth along u and v. With no contact anywhere this is the constant
    background (0, 0.5, 0.5). Noise is only added when ``rng`` is given, so
    the noise-free render is a pure function of the state.
    """
    img = render_batch(cfg, state.sensor[None, :], state.obj[None, :],
                       np.array([state.top_face]))[0]
    if rng is not None and cfg.noise_std > 0.0:
        noisy = img + rng.normal(0.0, cfg.noise_std, size=img.shape)
        return np.clip(noisy, 0.0, 1.0).astype(np.float32)
    return img


def rel_to_px(cfg: EnvConfig, rel_xy) -> tuple[float, float]:
    """Map an offset from the sensor center (mm) to pixel coordinates."""
    h, w, _ = cfg.image_shape
    u = w / 2.0 + cfg.px_per_mm * float(rel_xy[0])
    v = h / 2.0 + cfg.px_per_mm * float(rel_xy[1])
    return u, v


def in_contact(cfg: EnvConfig, state: SimState) -> bool:
    """True iff the gel currently couples to the object (see contact_mask)."""
    return bool(contact_mask(cfg, state.sensor[None, :], state.obj[None, :])[0])


def object_centroid_px(cfg: EnvConfig, state: SimState) -> tuple[float, float]:
    """Ground-truth pixel coordinates of the object center.

    Raises NotVisibleError when the center falls outside the image.
    """
    _validate_state(cfg, state)
    rel = state.obj - state.sensor[:2]
    u, v = rel_to_px(cfg, rel)
    h, w, _ = cfg.image_shape
    if not (0.0 <= u < w and 0.0 <= v < h):
        raise NotVisibleError(f"object at ({u:.1f}, {v:.1f}) px is outside the image")
    return u, v


def die_top_face(state: SimState) -> int:
    """Current top face of the die (die task only)."""
    if state.task != "die":
        raise TaskMismatchError(f"die_top_face on task {state.task!r}")
    return state.top_face
