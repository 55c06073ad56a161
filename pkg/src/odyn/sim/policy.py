"""Scripted pusher controller used for data generation.

Per step it picks the object closest to the centroid of the remaining
objects and tries to drive that one away from the group, quantized to
one of four axis-aligned commands. An epsilon fraction of steps takes a
uniformly random command instead, which keeps the action distribution
from collapsing to a single axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import WorldState

# left, right, up, down in world coordinates
COMMAND_DIRS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


def others_centroid(w: WorldState, i: int) -> np.ndarray:
    pts = [o.pos for j, o in enumerate(w.objects) if j != i]
    return np.mean(pts, axis=0)


def pick_target(w: WorldState) -> int:
    """Index of the object nearest the centroid of the others; the lowest
    index wins a tie. A single object is its own target."""
    n = len(w.objects)
    if n == 1:
        return 0
    d = np.array(
        [np.linalg.norm(w.objects[i].pos - others_centroid(w, i)) for i in range(n)]
    )
    return int(np.argmin(d))


def push_direction(w: WorldState, target: int) -> np.ndarray:
    """Unit direction that separates the target from the group."""
    if len(w.objects) == 1:
        return np.array([1.0, 0.0])
    d = w.objects[target].pos - others_centroid(w, target)
    nrm = np.linalg.norm(d)
    if nrm < 1e-9:
        return np.array([1.0, 0.0])
    return d / nrm


@dataclass
class ScriptedPolicy:
    push_speed: float = 1.5
    epsilon: float = 0.2

    def command_index(self, w: WorldState, rng: np.random.Generator) -> int:
        if rng.uniform() < self.epsilon:
            return int(rng.integers(0, 4))
        d = push_direction(w, pick_target(w))
        return int(np.argmax(COMMAND_DIRS @ d))

    def act(self, w: WorldState, rng: np.random.Generator) -> np.ndarray:
        """Pusher velocity command for this step, (2,) float64."""
        return COMMAND_DIRS[self.command_index(w, rng)] * self.push_speed
