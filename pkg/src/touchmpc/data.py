"""Random-interaction data collection and bit-exact trajectory persistence.

On-disk layout: a dataset is a directory holding ``manifest.json`` plus one
binary file per trajectory. Each trajectory file is

    magic b"TMPC" | u16 version | u16 T_ep | u16 H | u16 W | u16 C
    | T_ep*H*W*C float32 images (row-major)
    | (T_ep-1)*3 float32 actions (row-major)

with all integers and floats little-endian. The manifest records the format
version, an environment-config snapshot, counts, per-file SHA-256 checksums
and per-trajectory seeds, so a load can detect truncation, corruption and
missing files as distinct errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EnvConfig
from .core import ACTION_LIMIT_MM, clamp_action
from .errors import (ChecksumError, ConsistencyError, InvalidInputError,
                     InvalidSplitError, MagicError, TruncatedError, VersionError)
from .sim import reset, step

MAGIC = b"TMPC"
FORMAT_VERSION = 1
EPISODE_LENGTH_RANGE = (15, 18)


@dataclass
class Trajectory:
    """One recorded (image, action) sequence.

    ``images`` has shape (T, H, W, C) float32 and ``actions`` (T-1, 3)
    float32; image t+1 is the observation after applying action t.
    """

    images: np.ndarray
    actions: np.ndarray
    seed: int
    env_tag: str

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.actions = np.ascontiguousarray(self.actions, dtype=np.float32)
        if self.images.ndim != 4 or self.images.shape[0] < 1:
            raise InvalidInputError(f"images must be (T, H, W, C), got {self.images.shape}")
        if self.actions.shape != (self.images.shape[0] - 1, 3):
            raise InvalidInputError(
                f"actions shape {self.actions.shape} does not match {self.images.shape[0]} images")

    @property
    def length(self) -> int:
        return self.images.shape[0]

    def same_as(self, other: "Trajectory") -> bool:
        return (np.array_equal(self.images, other.images)
                and np.array_equal(self.actions, other.actions)
                and self.seed == other.seed
                and self.env_tag == other.env_tag)


@dataclass
class Dataset:
    """A list of trajectories plus the manifest describing them."""

    trajectories: list[Trajectory]
    manifest: dict

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.trajectories[0].images.shape[1:])

    def same_as(self, other: "Dataset") -> bool:
        return (len(self) == len(other)
                and self.manifest == other.manifest
                and all(a.same_as(b) for a, b in zip(self.trajectories, other.trajectories)))


def _traj_seed(master_seed: int, index: int) -> int:
    """Derive the per-trajectory environment seed from the master seed."""
    ss = np.random.SeedSequence((master_seed, index, 0))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def collect(cfg: EnvConfig, n_traj: int, t_ep: int, seed: int,
            action_repeat: int = 3) -> Dataset:
    """Record ``n_traj`` random-interaction trajectories of length ``t_ep``.

    A fresh action is drawn uniformly from the +/-6 mm box every
    ``action_repeat`` steps and repeated in between; images are recorded at
    every step. The result is a pure function of the arguments.
    """
    if n_traj < 1:
        raise InvalidInputError("n_traj must be >= 1")
    lo, hi = EPISODE_LENGTH_RANGE
    if not lo <= t_ep <= hi:
        raise InvalidInputError(f"t_ep must be in [{lo}, {hi}], got {t_ep}")
    trajectories = []
    for i in range(n_traj):
        env_seed = _traj_seed(seed, i)
        policy = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((seed, i, 1))))
        state, img = reset(cfg, env_seed)
        images = [img]
        actions = []
        current = np.zeros(3)
        for t in range(t_ep - 1):
            if t % action_repeat == 0:
                current = clamp_action(policy.uniform(
                    -ACTION_LIMIT_MM, ACTION_LIMIT_MM, size=3))
            state, img = step(cfg, state, current)
            images.append(img)
            actions.append(current)
        trajectories.append(Trajectory(
            np.stack(images), np.array(actions, dtype=np.float32),
            env_seed, cfg.env_tag))
    manifest = _build_manifest(cfg, trajectories, t_ep, seed, action_repeat)
    return Dataset(trajectories, manifest)


def _build_manifest(cfg: EnvConfig, trajectories, t_ep, seed, action_repeat) -> dict:
    h, w, c = cfg.image_shape
    return {
        "format": "touchmpc-dataset",
        "version": FORMAT_VERSION,
        "env": dataclasses.asdict(cfg),
        "env_tag": cfg.env_tag,
        "image_shape": [h, w, c],
        "n_trajectories": len(trajectories),
        "t_ep": t_ep,
        "collection_seed": seed,
        "action_repeat": action_repeat,
        "action_sampling": "uniform over the +/-6 mm box, fresh every repeat block",
        "files": {},
    }


def traj_to_bytes(traj: Trajectory) -> bytes:
    t, h, w, c = traj.images.shape
    head = MAGIC + struct.pack("<5H", FORMAT_VERSION, t, h, w, c)
    body = traj.images.astype("<f4").tobytes() + traj.actions.astype("<f4").tobytes()
    return head + body


def traj_from_bytes(blob: bytes, seed: int, env_tag: str) -> Trajectory:
    if len(blob) < 14:
        raise TruncatedError(f"trajectory file holds {len(blob)} bytes, header needs 14")
    if blob[:4] != MAGIC:
        raise MagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, t, h, w, c = struct.unpack("<5H", blob[4:14])
    if version != FORMAT_VERSION:
        raise VersionError(f"trajectory format version {version}, supported {FORMAT_VERSION}")
    n_img = t * h * w * c
    n_act = (t - 1) * 3
    expected = 14 + 4 * (n_img + n_act)
    if len(blob) != expected:
        raise TruncatedError(f"trajectory file holds {len(blob)} bytes, expected {expected}")
    images = np.frombuffer(blob, dtype="<f4", count=n_img, offset=14).reshape(t, h, w, c)
    actions = np.frombuffer(blob, dtype="<f4", count=n_act,
                            offset=14 + 4 * n_img).reshape(t - 1, 3)
    return Trajectory(images.copy(), actions.copy(), seed, env_tag)


def _traj_filename(index: int) -> str:
    return f"traj_{index:05d}.tmpc"


def save(ds: Dataset, dir_path) -> None:
    """Write a dataset directory; the same dataset always yields the same bytes."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = dict(ds.manifest)
    manifest["n_trajectories"] = len(ds.trajectories)
    files = {}
    for i, traj in enumerate(ds.trajectories):
        name = _traj_filename(i)
        blob = traj_to_bytes(traj)
        (root / name).write_bytes(blob)
        files[name] = {
            "sha256": hashlib.sha256(blob).hexdigest(),
            "seed": traj.seed,
            "env_tag": traj.env_tag,
        }
    manifest["files"] = files
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load(dir_path) -> Dataset:
    """Read a dataset directory back, verifying structure and checksums."""
    root = Path(dir_path)
    man_path = root / "manifest.json"
    if not man_path.exists():
        raise ConsistencyError(f"no manifest.json under {root}")
    manifest = json.loads(man_path.read_text(encoding="utf-8"))
    if manifest.get("format") != "touchmpc-dataset":
        raise MagicError(f"not a dataset manifest: {man_path}")
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionError(
            f"dataset version {manifest.get('version')}, supported {FORMAT_VERSION}")
    files = manifest.get("files", {})
    if len(files) != manifest.get("n_trajectories"):
        raise ConsistencyError(
            f"manifest claims {manifest.get('n_trajectories')} trajectories "
            f"but lists {len(files)} files")
    trajectories = []
    for name in sorted(files):
        entry = files[name]
        path = root / name
        if not path.exists():
            raise ConsistencyError(f"manifest lists {name} but the file is missing")
        blob = path.read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if digest != entry["sha256"]:
            raise ChecksumError(f"{name}: stored {entry['sha256'][:12]}.., got {digest[:12]}..")
        trajectories.append(traj_from_bytes(blob, entry["seed"], entry["env_tag"]))
    return Dataset(trajectories, manifest)


def split(ds: Dataset, held_out_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split into (train, test); disjoint and exhaustive."""
    if not 0.0 < held_out_fraction < 1.0:
        raise InvalidSplitError(f"fraction must be in (0, 1), got {held_out_fraction}")
    n = len(ds.trajectories)
    n_test = int(round(held_out_fraction * n))
    if n_test < 1 or n_test >= n:
        raise InvalidSplitError(
            f"split of {n} trajectories at {held_out_fraction} leaves an empty side")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train, test = [], []
    for i, traj in enumerate(ds.trajectories):
        (test if i in test_idx else train).append(traj)

    def _sub_manifest(trajs):
        m = dict(ds.manifest)
        m["n_trajectories"] = len(trajs)
        m["files"] = {}
        return m

    return (Dataset(train, _sub_manifest(train)),
            Dataset(test, _sub_manifest(test)))
