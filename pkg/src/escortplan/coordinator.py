"""Receding-horizon planning loop and inter-robot distribution exchange.

Every planning tick a robot folds the shared measurements into its belief,
resets its control distribution to the zero-mean prior, and then alternates
a few times between reading the latest peer distributions from its mailbox,
running :func:`~escortplan.deccem.dec_cem`, and broadcasting the result.  It
finally executes the first step of the plan.

Mailboxes keep only the newest message per peer, so lost or late messages
simply leave an older distribution (or the prior) in place; nothing ever
waits on communication.

Two schedulers drive a team through a tick: :class:`SyncScheduler` runs
lock-step rounds with message delivery between rounds, and
:class:`AsyncScheduler` is an event-driven simulation with per-message
latency in which robots read whatever has arrived when they start a round.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import ObjectBelief, SensorParams, update
from .deccem import CemConfig, ControlDistribution, dec_cem
from .dynamics import RobotState
from .rewards import PA, AgentSpec, RewardContext, reward_for
from .task import ReachAvoidTask

EXECUTION_MODES = ("mean", "sample")


@dataclass(frozen=True)
class DistributionMessage:
    sender: int
    distribution: ControlDistribution
    epoch: int
    tick: int = 0
    timestamp: float = 0.0

    def to_record(self) -> dict:
        return {
            "sender": int(self.sender),
            "epoch": int(self.epoch),
            "tick": int(self.tick),
            "timestamp": float(self.timestamp),
            "mean": [float(m) for m in self.distribution.mean],
            "var": [float(v) for v in self.distribution.var],
        }

    @classmethod
    def from_record(cls, record: dict) -> "DistributionMessage":
        return cls(
            sender=int(record["sender"]),
            distribution=ControlDistribution(record["mean"], record["var"]),
            epoch=int(record["epoch"]),
            tick=int(record.get("tick", 0)),
            timestamp=float(record.get("timestamp", 0.0)),
        )


class Mailbox:
    """Latest message per peer; an older epoch never replaces a newer one."""

    def __init__(self):
        self._latest: dict[int, DistributionMessage] = {}

    def deliver(self, msg: DistributionMessage) -> bool:
        held = self._latest.get(msg.sender)
        if held is not None and msg.epoch <= held.epoch:
            return False
        self._latest[msg.sender] = msg
        return True

    def latest(self) -> dict[int, DistributionMessage]:
        return dict(self._latest)

    def __len__(self):
        return len(self._latest)

    def __contains__(self, sender):
        return sender in self._latest


def exchange(mailboxes: dict, messages, drop_probability: float, rng) -> dict:
    """Deliver each message to every other robot's mailbox, each copy lost independently.

    Mailboxes are updated in place and also returned.
    """
    if not 0.0 <= drop_probability <= 1.0:
        raise ValueError(f"drop_probability must be in [0, 1], got {drop_probability}")
    for msg in messages:
        for rid in sorted(mailboxes):
            if rid == msg.sender:
                continue
            # always draw so the stream does not depend on the drop rate
            if rng.random() < drop_probability:
                continue
            mailboxes[rid].deliver(msg)
    return mailboxes


@dataclass(frozen=True)
class Mission:
    """Static knowledge shared by the whole team for one episode."""

    team: dict[int, AgentSpec]
    task: ReachAvoidTask
    sensor: SensorParams


@dataclass(frozen=True)
class PlannerConfig:
    cem: CemConfig = field(default_factory=CemConfig)
    horizon: int = 10
    n_rounds: int = 3
    execution: str = "mean"
    n_traj: int = 10
    n_mc: int = 30
    log_floor: float = -1e6
    redraw_pa_samples: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_rounds < 0:
            raise ValueError(f"n_rounds must be >= 0, got {self.n_rounds}")
        if self.execution not in EXECUTION_MODES:
            raise ValueError(f"execution must be one of {EXECUTION_MODES}, got {self.execution!r}")
        if self.n_traj < 1 or self.n_mc < 1:
            raise ValueError("n_traj and n_mc must be >= 1")


@dataclass(frozen=True)
class PlannerState:
    robot_id: int
    mission: Mission
    state: RobotState
    distribution: ControlDistribution
    belief: ObjectBelief
    variant: str
    poses: dict = field(default_factory=dict)
    peers: dict = field(default_factory=dict)
    tick: int = 0
    epoch: int = 0
    last_reward: float = float("nan")

    @property
    def role(self) -> str:
        return self.mission.team[self.robot_id].role

    @property
    def params(self):
        return self.mission.team[self.robot_id].params


def initial_planner(robot_id, mission: Mission, state: RobotState, belief: ObjectBelief, variant: str, cfg: PlannerConfig, poses=None) -> PlannerState:
    """Fresh planner; ``poses`` are the team's start states if known in advance."""
    reward_for(mission.team[robot_id].role, variant)  # validates the variant
    known = dict(poses or {})
    known[robot_id] = state
    return PlannerState(
        robot_id=robot_id,
        mission=mission,
        state=state,
        distribution=ControlDistribution.prior(cfg.horizon, cfg.cem.sigma0_sq),
        belief=belief,
        variant=variant,
        poses=known,
    )


def reward_context(planner: PlannerState, cfg: PlannerConfig) -> RewardContext:
    poses = dict(planner.poses)
    poses[planner.robot_id] = planner.state
    return RewardContext(
        robot_id=planner.robot_id,
        team=planner.mission.team,
        states=poses,
        belief=planner.belief,
        task=planner.mission.task,
        sensor=planner.mission.sensor,
        distributions=dict(planner.peers),
        horizon=cfg.horizon,
        prior_var=cfg.cem.sigma0_sq,
        n_traj=cfg.n_traj,
        n_mc=cfg.n_mc,
        log_floor=cfg.log_floor,
        redraw_pa_samples=cfg.redraw_pa_samples,
    )


def begin_tick(planner: PlannerState, measurements, cfg: PlannerConfig, poses=None) -> PlannerState:
    """Belief update and distribution reset that open every planning tick."""
    known = dict(planner.poses)
    if poses:
        known.update(poses)
    state = known.get(planner.robot_id, planner.state)
    return replace(
        planner,
        state=state,
        poses=known,
        belief=update(planner.belief, measurements, planner.mission.sensor),
        distribution=ControlDistribution.prior(cfg.horizon, cfg.cem.sigma0_sq),
    )


def align_to_tick(msg: DistributionMessage, tick: int, fill_var: float) -> ControlDistribution:
    """A peer's distribution re-indexed to start at ``tick``."""
    return msg.distribution.shifted(tick - msg.tick, fill_var)


def planning_round(planner: PlannerState, inbox: dict, cfg: PlannerConfig, rng, timestamp: float = 0.0):
    """One receive / optimise / broadcast round.

    Returns the updated planner and the message it broadcasts.
    """
    peers = {
        sender: align_to_tick(msg, planner.tick, cfg.cem.sigma0_sq)
        for sender, msg in sorted(inbox.items())
        if sender != planner.robot_id and sender in planner.mission.team
    }
    planner = replace(planner, peers=peers)
    reward_fn = reward_for(planner.role, planner.variant)
    dist = dec_cem(planner.distribution, reward_fn, reward_context(planner, cfg), cfg.cem, rng)
    planner = replace(planner, distribution=dist, epoch=planner.epoch + 1)
    msg = DistributionMessage(planner.robot_id, dist, planner.epoch, planner.tick, timestamp)
    return planner, msg


def finish_tick(planner: PlannerState, cfg: PlannerConfig, rng):
    """Pick the control to execute and advance the planner's horizon by one step."""
    dist = planner.distribution
    if cfg.execution == "sample":
        plan = dist.mean + np.sqrt(dist.var) * rng.standard_normal(dist.horizon)
    else:
        plan = dist.mean
    plan = planner.params.clamp(plan)
    ctx = reward_context(planner, cfg)
    reward_fn = reward_for(planner.role, planner.variant)
    others = {pid: d.mean[None] for pid, d in ctx.peer_distributions().items()}
    reward = float(reward_fn(plan[None], others, ctx, rng)[0])
    planner = replace(
        planner,
        distribution=dist.shifted(1, cfg.cem.sigma0_sq),
        tick=planner.tick + 1,
        last_reward=reward,
    )
    return float(plan[0]), planner


class Isolated:
    """Communication stub for a robot with no working link: hears nothing."""

    def receive(self, robot_id):
        return {}

    def broadcast(self, msg):
        pass


def plan_step(planner: PlannerState, measurements, cfg: PlannerConfig, rng, poses=None, comm=None):
    """Run one full planning tick for a single robot.

    ``comm`` provides ``receive(robot_id) -> {sender: message}`` and
    ``broadcast(message)``; without one the robot plans against the priors of
    its peers.  Returns ``(u, planner)``.
    """
    comm = comm or Isolated()
    planner = begin_tick(planner, measurements, cfg, poses)
    for _ in range(cfg.n_rounds):
        planner, msg = planning_round(planner, comm.receive(planner.robot_id), cfg, rng)
        comm.broadcast(msg)
    return finish_tick(planner, cfg, rng)


class SyncScheduler:
    """Lock-step rounds; messages broadcast in round k are visible in round k + 1."""

    mode = "sync"

    def __init__(self, robot_ids, drop_probability: float, rng):
        self.mailboxes = {rid: Mailbox() for rid in sorted(robot_ids)}
        self.drop_probability = drop_probability
        self.rng = rng
        self.trace: list[dict] = []

    def run_tick(self, planners: dict, measurements, poses, cfg: PlannerConfig, rngs: dict):
        """Plan one tick for every robot; returns ``{robot_id: (u, planner)}``."""
        planners = {
            rid: begin_tick(p, measurements, cfg, poses) for rid, p in sorted(planners.items())
        }
        for _ in range(cfg.n_rounds):
            outgoing = []
            for rid in sorted(planners):
                planners[rid], msg = planning_round(
                    planners[rid], self.mailboxes[rid].latest(), cfg, rngs[rid]
                )
                outgoing.append(msg)
            exchange(self.mailboxes, outgoing, self.drop_probability, self.rng)
        return {rid: finish_tick(p, cfg, rngs[rid]) for rid, p in sorted(planners.items())}


class AsyncScheduler:
    """Event-driven rounds with random start offsets, compute time and latency.

    A robot's round takes ``compute_time`` plus uniform jitter; each copy of a
    broadcast is dropped with ``drop_probability`` or arrives after an
    exponential latency.  Copies still in flight when every robot has finished
    its rounds are delivered before the next tick.  Every send, drop and
    delivery is appended to :attr:`trace`.
    """

    mode = "async"

    def __init__(self, robot_ids, drop_probability: float, rng, latency: float = 0.5, jitter: float = 0.5, compute_time: float = 1.0):
        if not 0.0 <= drop_probability <= 1.0:
            raise ValueError(f"drop_probability must be in [0, 1], got {drop_probability}")
        self.mailboxes = {rid: Mailbox() for rid in sorted(robot_ids)}
        self.drop_probability = drop_probability
        self.rng = rng
        self.latency = latency
        self.jitter = jitter
        self.compute_time = compute_time
        self.clock = 0.0
        self.trace: list[dict] = []

    def run_tick(self, planners: dict, measurements, poses, cfg: PlannerConfig, rngs: dict):
        planners = {
            rid: begin_tick(p, measurements, cfg, poses) for rid, p in sorted(planners.items())
        }
        events = []
        seq = 0
        for rid in sorted(planners):
            heapq.heappush(events, (self.clock + self.rng.uniform(0, self.jitter), seq, "round", (rid, 0)))
            seq += 1
        end = self.clock
        while events:
            now, _, kind, payload = heapq.heappop(events)
            end = max(end, now)
            if kind == "deliver":
                to, msg = payload
                fresh = self.mailboxes[to].deliver(msg)
                self.trace.append({"time": now, "event": "deliver" if fresh else "stale", "to": to, **msg.to_record()})
                continue
            rid, k = payload
            done = now + self.compute_time
            planners[rid], msg = planning_round(planners[rid], self.mailboxes[rid].latest(), cfg, rngs[rid], done)
            self.trace.append({"time": done, "event": "send", **msg.to_record()})
            for to in sorted(self.mailboxes):
                if to == rid:
                    continue
                lost = self.rng.random() < self.drop_probability
                delay = self.rng.exponential(self.latency) if self.latency > 0 else 0.0
                if lost:
                    self.trace.append({"time": done, "event": "drop", "to": to, **msg.to_record()})
                    continue
                heapq.heappush(events, (done + delay, seq, "deliver", (to, msg)))
                seq += 1
            if k + 1 < cfg.n_rounds:
                heapq.heappush(events, (done + self.rng.uniform(0, self.jitter), seq, "round", (rid, k + 1)))
                seq += 1
        self.clock = end
        return {rid: finish_tick(p, cfg, rngs[rid]) for rid, p in sorted(planners.items())}


SCHEDULERS = {"sync": SyncScheduler, "async": AsyncScheduler}
