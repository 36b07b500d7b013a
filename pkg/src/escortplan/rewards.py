"""Rewards for principal agents (PAs) and escort agents (EAs).

The PA maximises the log of its expected task satisfaction under the current
belief.  Escorts choose among three auxiliary rewards, all of which act on
the *predicted* belief obtained by counting the measurements an escort plan
would collect:

``si``      expected gain in PA satisfaction probability
``se``      expected drop in the binary entropy of that probability
``mi-ucb``  information gained about object locations (task agnostic)

``blind`` has no escorts at all; it names the PA-only baseline.

Each reward exists in two forms.  The ``*_batch`` functions follow the
``reward_fn(own, others, ctx, rng)`` protocol of :func:`escortplan.deccem.dec_cem`
and score a whole candidate set at once with common random numbers.  The
scalar functions score one plan with ``rng = default_rng(ctx.seed)``.

Within one batched call the random draws are made in a fixed order: object
normals ``(n_mc, N, 2)`` first, then (for ``si``/``se``) ``n_traj`` PA control
samples per principal in ascending id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr, logsumexp

from .belief import (
    ObjectBelief,
    SensorParams,
    covariance_factor,
    isotropic_gain,
    measurement_counts,
    objects_from_normals,
)
from .deccem import ControlDistribution, sample_controls
from .dynamics import AgentParams, RobotState, rollout_batch
from .task import ReachAvoidTask, log_avoid, log_reach

PA = "PA"
EA = "EA"
VARIANTS = ("blind", "mi-ucb", "si", "se")


@dataclass(frozen=True)
class AgentSpec:
    role: str
    params: AgentParams

    def __post_init__(self):
        if self.role not in (PA, EA):
            raise ValueError(f"role must be {PA!r} or {EA!r}, got {self.role!r}")


@dataclass
class RewardContext:
    """Everything a robot knows when scoring its own candidate plans."""

    robot_id: int
    team: dict[int, AgentSpec]
    states: dict[int, RobotState]
    belief: ObjectBelief
    task: ReachAvoidTask
    sensor: SensorParams
    distributions: dict[int, ControlDistribution] = field(default_factory=dict)
    horizon: int = 10
    prior_var: float = 1.0
    n_traj: int = 10
    n_mc: int = 30
    log_floor: float = -1e6
    seed: int = 0
    redraw_pa_samples: bool = False

    def __post_init__(self):
        if self.n_traj < 1 or self.n_mc < 1:
            raise ValueError(f"n_traj and n_mc must be >= 1, got {self.n_traj}, {self.n_mc}")

    def u_max(self, robot_id: int) -> float:
        return self.team[robot_id].params.u_max

    def ids(self, role: str) -> list[int]:
        """Robots of ``role`` whose pose is known; others cannot be reasoned about."""
        return sorted(r for r, spec in self.team.items() if spec.role == role and r in self.states)

    def distribution(self, robot_id: int) -> ControlDistribution:
        """Latest known distribution of a robot, or the zero-mean prior if none arrived."""
        dist = self.distributions.get(robot_id)
        if dist is None:
            return ControlDistribution.prior(self.horizon, self.prior_var)
        return dist

    def peer_distributions(self) -> dict[int, ControlDistribution]:
        return {r: self.distribution(r) for r in sorted(self.team) if r != self.robot_id}

    def rollout(self, robot_id: int, controls) -> np.ndarray:
        return rollout_batch(self.states[robot_id], controls, self.team[robot_id].params)


def binary_entropy(p):
    """Entropy in nats of a Bernoulli(p); elementwise."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError(f"probability outside [0, 1]: {p}")
    h = entr(p) + entr(1.0 - p)
    return float(h) if h.ndim == 0 else h


def _object_normals(ctx: RewardContext, rng) -> np.ndarray:
    return rng.standard_normal((ctx.n_mc, ctx.belief.n_objects, 2))


def _principal_paths(ctx: RewardContext, n: int, rng) -> np.ndarray:
    """``(n, K, 3)`` joint PA paths; several PAs are stacked along time."""
    paths = []
    for pid in ctx.ids(PA):
        controls = sample_controls(ctx.distribution(pid), n, rng, ctx.u_max(pid))
        paths.append(ctx.rollout(pid, controls))
    return np.concatenate(paths, axis=1)


def _escort_positions(own, others, ctx: RewardContext) -> np.ndarray:
    """Future positions ``(C, M, 2)`` of every escort for each own candidate."""
    own = np.atleast_2d(own)
    parts = []
    for eid in ctx.ids(EA):
        controls = own if eid == ctx.robot_id else np.atleast_2d(others[eid])
        # the current pose was measured before planning; only future poses count
        parts.append(ctx.rollout(eid, controls)[..., 1:, :2])
    if not parts:
        return np.zeros((own.shape[0], 0, 2))
    return np.concatenate(parts, axis=1)


def predicted_extra_information(own, others, ctx: RewardContext) -> np.ndarray:
    """Scalar information ``(C, N)`` each candidate would add to each object."""
    positions = _escort_positions(own, others, ctx)
    return measurement_counts(ctx.belief, positions, ctx.sensor) * ctx.sensor.precision


def _pa_batch(paths, ctx: RewardContext, z) -> np.ndarray:
    samples = objects_from_normals(ctx.belief.means, ctx.belief.info, z)
    ls = log_reach(paths, ctx.task)[:, None] + log_avoid(paths, samples, ctx.task).sum(axis=-1)
    value = logsumexp(ls, axis=-1) - np.log(ls.shape[-1])
    return np.maximum(value, ctx.log_floor)


def pa_reward_batch(own, others, ctx: RewardContext, rng) -> np.ndarray:
    z = _object_normals(ctx, rng)
    return _pa_batch(ctx.rollout(ctx.robot_id, own), ctx, z)


def satisfaction_prior_posterior(pa_paths, extra, belief: ObjectBelief, task: ReachAvoidTask, z):
    """Prior ``(P,)`` and predicted-posterior ``(C, P)`` satisfaction estimates.

    Both are Monte Carlo means over the same normals ``z``.  The collision
    term factorises over objects, so only objects that gain information
    (``extra[c, n] > 0``) are re-evaluated for candidate ``c``; all others
    reuse the prior terms and contribute an exact zero difference.  A
    predicted object posterior depends only on ``(n, extra[c, n])``, so each
    distinct pair is evaluated once.
    """
    extra = np.atleast_2d(extra)
    prior_samples = objects_from_normals(belief.means, belief.info, z)
    per_object = log_avoid(pa_paths, prior_samples, task)  # (P, S, N)
    base = log_reach(pa_paths, task)[:, None] + per_object.sum(axis=-1)  # (P, S)
    delta = np.zeros((extra.shape[0],) + base.shape)
    c_idx, n_idx = np.nonzero(extra > 0)
    if len(c_idx):
        keys, inverse = np.unique(
            np.column_stack([n_idx, extra[c_idx, n_idx]]), axis=0, return_inverse=True
        )
        u_obj = keys[:, 0].astype(int)
        info = belief.info[u_obj] + keys[:, 1, None, None] * np.eye(2)
        L = covariance_factor(info)  # (U, 2, 2)
        samples = belief.means[u_obj, None, :] + np.einsum("uij,suj->usi", L, z[:, u_obj, :])
        post_terms = log_avoid(pa_paths, samples[:, :, None, :], task)[..., 0]  # (P, U, S)
        prior_terms = np.moveaxis(per_object[:, :, u_obj], 2, 1)  # (P, U, S)
        diff = np.moveaxis(post_terms - prior_terms, 1, 0).reshape(len(keys), -1)
        incidence = np.zeros((extra.shape[0], len(keys)))
        incidence[c_idx, inverse.reshape(-1)] = 1.0
        delta = (incidence @ diff).reshape(delta.shape)
    prior = np.exp(base).mean(axis=-1)
    posterior = np.exp(base + delta).mean(axis=-1)
    return prior, posterior


def _escort_terms(own, others, ctx: RewardContext, rng):
    z = _object_normals(ctx, rng)
    extra = predicted_extra_information(own, others, ctx)
    if not ctx.ids(PA):
        # no principal to escort: nothing can be gained
        return np.zeros(1), np.zeros((extra.shape[0], 1))
    if not ctx.redraw_pa_samples:
        paths = _principal_paths(ctx, ctx.n_traj, rng)
        return satisfaction_prior_posterior(paths, extra, ctx.belief, ctx.task, z)
    priors, posts = [], []
    for row in extra:
        paths = _principal_paths(ctx, ctx.n_traj, rng)
        prior, post = satisfaction_prior_posterior(paths, row[None], ctx.belief, ctx.task, z)
        priors.append(prior)
        posts.append(post[0])
    return np.array(priors), np.array(posts)


def si_reward_batch(own, others, ctx: RewardContext, rng) -> np.ndarray:
    prior, post = _escort_terms(own, others, ctx, rng)
    return (post - prior).mean(axis=-1)


def se_reward_batch(own, others, ctx: RewardContext, rng) -> np.ndarray:
    prior, post = _escort_terms(own, others, ctx, rng)
    prior, post = np.clip(prior, 0.0, 1.0), np.clip(post, 0.0, 1.0)
    return (binary_entropy(prior) - binary_entropy(post)).mean(axis=-1)


def mi_ucb_reward_batch(own, others, ctx: RewardContext, rng) -> np.ndarray:
    extra = predicted_extra_information(own, others, ctx)
    return isotropic_gain(ctx.belief.info, extra)


def zero_reward_batch(own, others, ctx: RewardContext, rng) -> np.ndarray:
    return np.zeros(np.atleast_2d(own).shape[0])


ESCORT_REWARDS = {
    "blind": zero_reward_batch,
    "mi-ucb": mi_ucb_reward_batch,
    "si": si_reward_batch,
    "se": se_reward_batch,
}


def reward_for(role: str, variant: str):
    """Batched reward used by a robot of ``role`` under an escort ``variant``."""
    if variant not in ESCORT_REWARDS:
        raise ValueError(f"unknown reward variant {variant!r}; expected one of {VARIANTS}")
    return pa_reward_batch if role == PA else ESCORT_REWARDS[variant]


def _split_escort_controls(ea_controls, ctx: RewardContext):
    if not isinstance(ea_controls, dict):
        ea_controls = {ctx.robot_id: ea_controls}
    own = np.asarray(ea_controls[ctx.robot_id], dtype=float)[None]
    others = {
        eid: np.asarray(u, dtype=float)[None] for eid, u in ea_controls.items() if eid != ctx.robot_id
    }
    missing = set(ctx.ids(EA)) - set(ea_controls)
    if missing:
        raise ValueError(f"no controls given for escorts {sorted(missing)}")
    return own, others


def pa_reward(pa_controls, ctx: RewardContext) -> float:
    controls = np.asarray(pa_controls, dtype=float)[None]
    return float(pa_reward_batch(controls, {}, ctx, np.random.default_rng(ctx.seed))[0])


def si_reward(ea_controls, ctx: RewardContext) -> float:
    """``ea_controls`` maps escort id to its plan (a bare sequence means ``ctx.robot_id``)."""
    own, others = _split_escort_controls(ea_controls, ctx)
    return float(si_reward_batch(own, others, ctx, np.random.default_rng(ctx.seed))[0])


def se_reward(ea_controls, ctx: RewardContext) -> float:
    own, others = _split_escort_controls(ea_controls, ctx)
    return float(se_reward_batch(own, others, ctx, np.random.default_rng(ctx.seed))[0])


def mi_ucb_reward(ea_controls, ctx: RewardContext) -> float:
    own, others = _split_escort_controls(ea_controls, ctx)
    return float(mi_ucb_reward_batch(own, others, ctx, np.random.default_rng(ctx.seed))[0])
