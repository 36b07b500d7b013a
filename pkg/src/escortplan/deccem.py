"""Decentralised cross-entropy optimisation of one robot's control distribution.

Each robot keeps a diagonal Gaussian over its own turn-rate sequence.  An
iteration samples candidate sequences from it, pairs every candidate with a
fresh joint sample of the other robots' controls (drawn from whatever
distributions they last communicated), scores the candidates with the robot's
reward, keeps the best ``n_elite`` and refits the Gaussian to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ControlDistribution:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        var = np.array(self.var, dtype=float).reshape(-1)
        if mean.shape != var.shape:
            raise ValueError(f"mean has {mean.size} steps but var has {var.size}")
        if np.any(var < 0):
            raise ValueError("negative variance")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @classmethod
    def prior(cls, horizon: int, var: float) -> "ControlDistribution":
        return cls(np.zeros(horizon), np.full(horizon, float(var)))

    @property
    def horizon(self) -> int:
        return self.mean.size

    def shifted(self, k: int, fill_var: float) -> "ControlDistribution":
        """Drop the first ``k`` steps and pad the tail with a zero-mean prior."""
        k = min(max(int(k), 0), self.horizon)
        mean = np.concatenate([self.mean[k:], np.zeros(k)])
        var = np.concatenate([self.var[k:], np.full(k, float(fill_var))])
        return ControlDistribution(mean, var)


@dataclass(frozen=True)
class CemConfig:
    n_samples: int = 64
    n_elite: int = 8
    n_inner_iters: int = 5
    var_floor: float = 1e-4
    var_terminate: float = 1e-3
    sigma0_sq: float = 1.0

    def __post_init__(self):
        if not 1 <= self.n_elite <= self.n_samples:
            raise ValueError(
                f"need 1 <= n_elite <= n_samples, got n_elite={self.n_elite}, n_samples={self.n_samples}"
            )
        if self.n_inner_iters < 0:
            raise ValueError(f"n_inner_iters must be >= 0, got {self.n_inner_iters}")
        if not self.var_floor > 0:
            raise ValueError(f"var_floor must be > 0, got {self.var_floor}")
        if self.var_terminate < self.var_floor:
            raise ValueError(
                f"var_terminate ({self.var_terminate}) must be >= var_floor ({self.var_floor})"
            )
        if not self.sigma0_sq > 0:
            raise ValueError(f"sigma0_sq must be > 0, got {self.sigma0_sq}")


def sample_controls(dist: ControlDistribution, n: int, rng, u_max: float = np.inf) -> np.ndarray:
    """``(n, T)`` independent per-step Gaussian draws, clamped to ``+-u_max``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    z = rng.standard_normal((n, dist.horizon))
    return np.clip(dist.mean + np.sqrt(dist.var) * z, -u_max, u_max)


def elite_select(samples, rewards, n_elite: int):
    """The ``n_elite`` highest-reward samples; ties go to the lower index."""
    rewards = np.asarray(rewards, dtype=float)
    if len(samples) != len(rewards):
        raise ValueError(f"{len(samples)} samples but {len(rewards)} rewards")
    if not 1 <= n_elite <= len(rewards):
        raise ValueError(f"cannot select {n_elite} elites from {len(rewards)} samples")
    # stable sort on negated reward keeps index order among ties
    idx = np.argsort(-rewards, kind="stable")[:n_elite]
    if isinstance(samples, np.ndarray):
        return samples[idx]
    return [samples[i] for i in idx]


def fit_gaussian(elite, cfg: CemConfig) -> ControlDistribution:
    elite = np.asarray(elite, dtype=float)
    if elite.ndim != 2 or len(elite) == 0:
        raise ValueError("elite set must be a non-empty (n, T) array")
    return ControlDistribution(elite.mean(axis=0), np.maximum(elite.var(axis=0), cfg.var_floor))


def dec_cem(own_dist: ControlDistribution, reward_fn, ctx, cfg: CemConfig, rng, trace=None) -> ControlDistribution:
    """Run up to ``cfg.n_inner_iters`` CEM iterations for ``ctx.robot_id``.

    ``reward_fn(own, others, ctx, rng)`` receives the ``(C, T)`` own candidates
    and a dict mapping each peer id to a ``(C, T)`` array holding one joint
    sample of the peers per candidate; it returns ``(C,)`` rewards.  ``ctx``
    supplies ``peer_distributions()`` and ``u_max(robot_id)``; ``None`` means a
    lone, unclamped robot.

    If ``trace`` is a list, the mean reward of each iteration's elite set is
    appended.
    """
    dist = own_dist
    if ctx is None:
        peers, own_u_max, peer_u_max = {}, np.inf, {}
    else:
        peers = ctx.peer_distributions()
        own_u_max = ctx.u_max(ctx.robot_id)
        peer_u_max = {pid: ctx.u_max(pid) for pid in peers}
    for _ in range(cfg.n_inner_iters):
        own = sample_controls(dist, cfg.n_samples, rng, own_u_max)
        others = {
            pid: sample_controls(pdist, cfg.n_samples, rng, peer_u_max[pid])
            for pid, pdist in sorted(peers.items())
        }
        rewards = np.asarray(reward_fn(own, others, ctx, rng), dtype=float)
        if rewards.shape != (cfg.n_samples,):
            raise ValueError(f"reward_fn returned shape {rewards.shape}, expected ({cfg.n_samples},)")
        elite = elite_select(own, rewards, cfg.n_elite)
        if trace is not None:
            trace.append(float(np.sort(rewards)[::-1][: cfg.n_elite].mean()))
        dist = fit_gaussian(elite, cfg)
        if dist.var.mean() < cfg.var_terminate:
            break
    return dist
