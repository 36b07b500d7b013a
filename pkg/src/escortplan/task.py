"""Reach-avoid task satisfaction.

The probability that a trajectory satisfies the task given known object
locations is a product, over timesteps and objects, of a soft collision
factor and a soft goal factor.  Everything is accumulated in log space.

Under an uncertain belief the satisfaction probability is the belief
expectation of that product, estimated by Monte Carlo over object samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import ObjectBelief, objects_from_normals


@dataclass(frozen=True)
class ReachAvoidTask:
    goal: tuple[float, float] = (90.0, 50.0)
    reach_radius: float = 10.0
    avoid_radius: float = 4.0
    peak_collision: float = 0.9
    # False applies the goal factor at the final pose only
    reach_every_step: bool = True

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))
        if not self.reach_radius > 0:
            raise ValueError(f"reach_radius must be > 0, got {self.reach_radius}")
        if not self.avoid_radius > 0:
            raise ValueError(f"avoid_radius must be > 0, got {self.avoid_radius}")
        if not 0 < self.peak_collision <= 1:
            raise ValueError(f"peak_collision must be in (0, 1], got {self.peak_collision}")


def _xy(points) -> np.ndarray:
    return np.asarray(points, dtype=float)[..., :2]


def avoid_factor(position, obj, task: ReachAvoidTask) -> float:
    d2 = np.sum((_xy(position) - np.asarray(obj, dtype=float)) ** 2)
    return float(1.0 - task.peak_collision * np.exp(-d2 / (2 * task.avoid_radius**2)))


def reach_factor(position, task: ReachAvoidTask) -> float:
    d2 = np.sum((_xy(position) - np.asarray(task.goal)) ** 2)
    return float(np.exp(-d2 / (2 * task.reach_radius**2)))


def log_reach(paths, task: ReachAvoidTask) -> np.ndarray:
    """Summed log goal factor of each path ``(..., K, 2|3) -> (...)``."""
    d2 = np.sum((_xy(paths) - np.asarray(task.goal)) ** 2, axis=-1)
    logs = -d2 / (2 * task.reach_radius**2)
    return logs.sum(axis=-1) if task.reach_every_step else logs[..., -1]


def log_avoid(paths, objects, task: ReachAvoidTask) -> np.ndarray:
    """Per-object log collision factor summed over timesteps.

    ``paths`` is ``(P, K, 2|3)`` and ``objects`` is ``(..., N, 2)``; the result
    is ``(P,) + objects.shape[:-1]``, i.e. indexed ``[path, ..., object]``.
    """
    paths = _xy(paths)
    objects = np.asarray(objects, dtype=float)
    lead = objects.shape[:-1]
    flat = objects.reshape(-1, 2)
    P, K = paths.shape[:2]
    d2 = np.subtract.outer(paths[..., 0].reshape(-1), flat[:, 0])
    d2 *= d2
    dy = np.subtract.outer(paths[..., 1].reshape(-1), flat[:, 1])
    dy *= dy
    d2 += dy
    d2 *= -1.0 / (2 * task.avoid_radius**2)
    y = np.exp(d2, out=d2)
    y *= task.peak_collision
    # log1p(-y) = -y to within y^2/2 < 5e-17 once y < 1e-8
    near = y > 1e-8
    logs = np.negative(y, out=y)
    with np.errstate(divide="ignore"):
        logs[near] = np.log1p(logs[near])
    return logs.reshape(P, K, -1).sum(axis=1).reshape((P,) + lead)


def log_satisfaction(paths, objects, task: ReachAvoidTask) -> np.ndarray:
    """log P(task | path, objects) for paths ``(P, K, .)`` x samples ``(S, N, 2)`` -> ``(P, S)``."""
    return log_reach(paths, task)[:, None] + log_avoid(paths, objects, task).sum(axis=-1)


def satisfaction_given_objects(traj, objects, task: ReachAvoidTask) -> float:
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or len(traj) == 0:
        raise ValueError("trajectory must be a non-empty (K, 2|3) array")
    objects = np.asarray(objects, dtype=float).reshape(1, -1, 2)
    return float(np.exp(log_satisfaction(traj[None], objects, task))[0, 0])


def expected_satisfaction(paths, belief: ObjectBelief, z, task: ReachAvoidTask) -> np.ndarray:
    """Monte Carlo belief expectation for each path given fixed normals ``z``.

    ``z`` has shape ``(S, N, 2)``; reusing it across calls gives common random
    numbers.  Returns ``(P,)``.
    """
    samples = objects_from_normals(belief.means, belief.info, z)
    return np.exp(log_satisfaction(paths, samples, task)).mean(axis=-1)


def marginal_satisfaction(traj, belief: ObjectBelief, task: ReachAvoidTask, n_mc: int, rng) -> float:
    """Expected satisfaction of one trajectory under the current belief."""
    if n_mc < 1:
        raise ValueError(f"n_mc must be >= 1, got {n_mc}")
    z = rng.standard_normal((n_mc, belief.n_objects, 2))
    return float(expected_satisfaction(np.asarray(traj, float)[None], belief, z, task)[0])


def posterior_satisfaction(traj, predicted: ObjectBelief, task: ReachAvoidTask, n_mc: int, rng) -> float:
    """Expected satisfaction once the planned measurements are taken.

    Only the information matrix of ``predicted`` differs from the current
    belief, so this is the same estimator evaluated on the predicted belief.
    """
    return marginal_satisfaction(traj, predicted, task, n_mc, rng)
