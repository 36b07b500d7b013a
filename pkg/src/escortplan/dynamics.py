"""Planar kinematics shared by every agent.

All agents move with a fixed forward speed and a controllable turn rate::

    x_dot = v cos(theta),  y_dot = v sin(theta),  theta_dot = u

and are integrated with explicit Euler steps of length ``dt``.  Turn rates are
clamped to ``[-u_max, u_max]`` before use, so any real-valued control sequence
is admissible.

Trajectories are plain ``(T + 1, 3)`` arrays of ``(x, y, theta)`` rows.  The
batched :func:`rollout_batch` is what the planners use; :func:`step` is the
single-agent reference used when executing controls in the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta):
    """Map angles onto ``(-pi, pi]``. Works elementwise on arrays."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")
        object.__setattr__(self, "theta", float(wrap_angle(float(self.theta))))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, row) -> "RobotState":
        return cls(float(row[0]), float(row[1]), float(row[2]))


@dataclass(frozen=True)
class AgentParams:
    v: float
    u_max: float = math.pi / 2
    dt: float = 1.0

    def __post_init__(self):
        for name in ("v", "u_max", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"AgentParams.{name} must be > 0, got {getattr(self, name)}")

    def clamp(self, u):
        return np.clip(u, -self.u_max, self.u_max)


def step(state: RobotState, u: float, params: AgentParams) -> RobotState:
    """Advance one Euler step using the heading at the start of the step."""
    u = float(params.clamp(u))
    v, dt = params.v, params.dt
    return RobotState(
        state.x + v * math.cos(state.theta) * dt,
        state.y + v * math.sin(state.theta) * dt,
        state.theta + u * dt,
    )


def rollout(state0: RobotState, controls, params: AgentParams) -> np.ndarray:
    """Chain :func:`step` over ``controls``; returns a ``(T + 1, 3)`` array."""
    traj = [state0]
    for u in np.asarray(controls, dtype=float).reshape(-1):
        traj.append(step(traj[-1], u, params))
    return np.array([s.as_array() for s in traj])


def rollout_batch(state0, controls, params: AgentParams) -> np.ndarray:
    """Vectorised rollout of many control sequences from one start state.

    ``state0`` is a :class:`RobotState` or length-3 array; ``controls`` has
    shape ``(..., T)``.  Returns an array of shape ``(..., T + 1, 3)``.
    """
    s0 = state0.as_array() if isinstance(state0, RobotState) else np.asarray(state0, float)
    u = params.clamp(np.asarray(controls, dtype=float))
    lead = u.shape[:-1]
    T = u.shape[-1]
    # heading before step k is theta0 + dt * sum(u[:k]); wrapping is cosmetic for cos/sin
    headings = s0[2] + params.dt * np.concatenate(
        [np.zeros(lead + (1,)), np.cumsum(u, axis=-1)], axis=-1
    )
    out = np.empty(lead + (T + 1, 3))
    step_len = params.v * params.dt
    out[..., 0, 0] = s0[0]
    out[..., 0, 1] = s0[1]
    out[..., 1:, 0] = s0[0] + np.cumsum(step_len * np.cos(headings[..., :-1]), axis=-1)
    out[..., 1:, 1] = s0[1] + np.cumsum(step_len * np.sin(headings[..., :-1]), axis=-1)
    out[..., :, 2] = wrap_angle(headings)
    return out
