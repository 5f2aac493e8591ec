"""Icosahedral (d20) face-adjacency table and roll-direction selection.

The die simulator treats the 20-sided die as a face automaton: the top face
can only transition to one of its three neighbours in the icosahedron's
face-adjacency graph. The table ships as a data file so it can be inspected
and checksum-tested independently of the code.

Each neighbour of the current top face is assigned an outward direction in
the sensor's (x, y) plane: slot i of the (ascending-sorted) neighbour list
points at angle 120*i degrees. A lateral push rolls the die toward whichever
slot is angularly nearest the push direction.
"""

from __future__ import annotations

import functools
import hashlib
import importlib.resources
import math

import numpy as np

from .errors import FormatError

N_FACES = 20

# Angles (radians) of the three neighbour slots of any top face.
SLOT_ANGLES = tuple(2.0 * math.pi * i / 3.0 for i in range(3))


def _table_text() -> str:
    res = importlib.resources.files("touchmpc").joinpath("data_files/d20_adjacency.txt")
    return res.read_text(encoding="utf-8")


def table_sha256() -> str:
    """SHA-256 hex digest of the shipped adjacency file."""
    return hashlib.sha256(_table_text().encode("utf-8")).hexdigest()


@functools.lru_cache(maxsize=1)
def adjacency() -> dict[int, tuple[int, int, int]]:
    """Parse the shipped table into {face: (n1, n2, n3)} with n1 < n2 < n3."""
    table: dict[int, tuple[int, int, int]] = {}
    for line in _table_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, tail = line.partition(":")
        face = int(head)
        nbrs = tuple(int(t) for t in tail.split())
        if len(nbrs) != 3 or not 1 <= face <= N_FACES:
            raise FormatError(f"malformed adjacency line: {line!r}")
        table[face] = tuple(sorted(nbrs))  # type: ignore[assignment]
    if len(table) != N_FACES:
        raise FormatError(f"adjacency table has {len(table)} faces, expected {N_FACES}")
    for face, nbrs in table.items():
        for n in nbrs:
            if face not in table[n]:
                raise FormatError(f"adjacency not symmetric at {face}<->{n}")
    return table


def neighbors(face: int) -> tuple[int, int, int]:
    """The three faces adjacent to ``face``, ascending."""
    return adjacency()[face]


def roll(face: int, push_xy) -> int:
    """Face reached by rolling ``face`` along the push direction.

    Picks the neighbour slot whose outward angle is nearest the angle of
    ``push_xy``. A zero push is directionless and returns ``face`` unchanged.
    """
    px, py = float(push_xy[0]), float(push_xy[1])
    if px == 0.0 and py == 0.0:
        return face
    ang = math.atan2(py, px) % (2.0 * math.pi)
    best_slot = 0
    best_gap = float("inf")
    for i, slot_ang in enumerate(SLOT_ANGLES):
        gap = abs((ang - slot_ang + math.pi) % (2.0 * math.pi) - math.pi)
        if gap < best_gap:
            best_gap = gap
            best_slot = i
    return adjacency()[face][best_slot]


def faces_within(face: int, n_rolls: int) -> list[int]:
    """All faces reachable from ``face`` in at most ``n_rolls`` transitions."""
    frontier = {face}
    seen = {face}
    for _ in range(n_rolls):
        frontier = {n for f in frontier for n in adjacency()[f]} - seen
        seen |= frontier
    return sorted(seen)


def roll_distance(a: int, b: int) -> int:
    """Minimum number of adjacency transitions from face ``a`` to ``b``."""
    if a == b:
        return 0
    dist = {a: 0}
    frontier = [a]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for f in frontier:
            for n in adjacency()[f]:
                if n not in dist:
                    dist[n] = d
                    if n == b:
                        return d
                    nxt.append(n)
        frontier = nxt
    raise ValueError(f"face {b} unreachable from {a}")  # pragma: no cover


def neighbor_direction(face: int, neighbor: int) -> np.ndarray:
    """Unit (x, y) outward direction assigned to ``neighbor`` of ``face``."""
    nbrs = adjacency()[face]
    slot = nbrs.index(neighbor)
    a = SLOT_ANGLES[slot]
    return np.array([math.cos(a), math.sin(a)])
