"""Scenario generation, closed-loop episodes and batch failure-rate experiments.

Robot ids are fixed: ``0`` is the principal agent and ``1..n_escorts`` are
escorts.  An episode repeats, once per tick::

    escorts measure the true objects -> every robot plans -> every robot moves

and stops when the principal's swept segment touches a true object
(``collided``), it ends within ``arrival_radius`` of the goal (``reached``), or
``max_ticks`` elapse (``timeout``).

Episodes are seeded from a :class:`numpy.random.SeedSequence`.  Its first
child drives scenario generation only, so environment ``k`` of a batch has the
same objects, prior and start poses whichever reward variant is being run.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .belief import ObjectBelief, SensorParams, simulate_measurements
from .coordinator import SCHEDULERS, Mission, PlannerConfig, initial_planner
from .deccem import CemConfig
from .dynamics import AgentParams, RobotState, step
from .rewards import EA, PA, VARIANTS, AgentSpec
from .task import ReachAvoidTask

VERDICTS = ("reached", "collided", "timeout")
PA_ID = 0


@dataclass(frozen=True)
class ScenarioConfig:
    env_size: tuple[float, float] = (100.0, 100.0)
    n_objects: int = 20
    spawn_box: tuple[float, float, float, float] = (20.0, 80.0, 20.0, 80.0)
    start: tuple[float, float] = (10.0, 50.0)
    start_heading: float = 0.0
    prior_variance: float = 25.0
    # "gaussian": mean = truth + N(0, v I), clipped to env; "none": mean = truth
    corruption: str = "gaussian"
    # v above; defaults to prior_variance so the prior is honest about its error
    corruption_variance: float | None = None
    v_pa: float = 2.0
    v_ea: float = 4.0
    u_max: float = math.pi / 2
    dt: float = 1.0
    n_escorts: int = 2
    variant: str = "se"
    seed: int = 0

    def __post_init__(self):
        for name in ("env_size", "spawn_box", "start"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        w, h = self.env_size
        x0, x1, y0, y1 = self.spawn_box
        if not (w > 0 and h > 0):
            raise ValueError(f"env_size must be positive, got {self.env_size}")
        if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
            raise ValueError(f"spawn_box {self.spawn_box} must lie inside env_size {self.env_size}")
        if self.n_objects < 0:
            raise ValueError(f"n_objects must be >= 0, got {self.n_objects}")
        if self.prior_variance < 0:
            raise ValueError(f"prior_variance must be >= 0, got {self.prior_variance}")
        if self.corruption_variance is not None and self.corruption_variance < 0:
            raise ValueError(f"corruption_variance must be >= 0, got {self.corruption_variance}")
        if self.corruption not in ("gaussian", "none"):
            raise ValueError(f"corruption must be 'gaussian' or 'none', got {self.corruption!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n_escorts < 0:
            raise ValueError(f"n_escorts must be >= 0, got {self.n_escorts}")
        if (self.n_escorts == 0) != (self.variant == "blind"):
            raise ValueError(
                f"variant 'blind' requires n_escorts = 0 and every other variant n_escorts > 0 "
                f"(got variant={self.variant!r}, n_escorts={self.n_escorts})"
            )
        AgentParams(self.v_pa, self.u_max, self.dt)
        AgentParams(self.v_ea, self.u_max, self.dt)


@dataclass(frozen=True)
class SimConfig:
    collision_radius: float = 2.0
    arrival_radius: float = 5.0
    max_ticks: int = 120
    drop_probability: float = 0.0
    scheduler: str = "sync"
    latency: float = 0.5

    def __post_init__(self):
        if self.collision_radius < 0 or self.arrival_radius < 0:
            raise ValueError("collision_radius and arrival_radius must be >= 0")
        if self.max_ticks < 0:
            raise ValueError(f"max_ticks must be >= 0, got {self.max_ticks}")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError(f"drop_probability must be in [0, 1], got {self.drop_probability}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {tuple(SCHEDULERS)}, got {self.scheduler!r}")


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    task: ReachAvoidTask = field(default_factory=ReachAvoidTask)
    sensor: SensorParams = field(default_factory=SensorParams)
    cem: CemConfig = field(default_factory=CemConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.planner.cem != self.cem:
            object.__setattr__(self, "planner", replace(self.planner, cem=self.cem))

    def with_variant(self, variant: str, n_escorts: int) -> "Config":
        return replace(self, scenario=replace(self.scenario, variant=variant, n_escorts=n_escorts))

    def to_dict(self) -> dict:
        out = {}
        for name in ("scenario", "task", "sensor", "cem", "planner", "sim"):
            section = asdict(getattr(self, name))
            section.pop("cem", None)
            out[name] = section
        return json.loads(json.dumps(out))


def agent_params(cfg: Config) -> dict[int, AgentParams]:
    sc = cfg.scenario
    params = {PA_ID: AgentParams(sc.v_pa, sc.u_max, sc.dt)}
    for eid in range(1, sc.n_escorts + 1):
        params[eid] = AgentParams(sc.v_ea, sc.u_max, sc.dt)
    return params


def generate_scenario(cfg: Config, rng):
    """Ground truth, prior belief and start poses for one environment.

    The random draws depend only on the environment fields of the scenario
    (object count, spawn box, prior), never on the team or reward variant.
    """
    sc = cfg.scenario
    x0, x1, y0, y1 = sc.spawn_box
    truth = np.column_stack(
        [rng.uniform(x0, x1, sc.n_objects), rng.uniform(y0, y1, sc.n_objects)]
    ).reshape(-1, 2)
    noise = rng.standard_normal((sc.n_objects, 2)).reshape(-1, 2)
    if sc.corruption == "gaussian":
        v = sc.prior_variance if sc.corruption_variance is None else sc.corruption_variance
        means = truth + math.sqrt(v) * noise
        means = np.clip(means, [0.0, 0.0], sc.env_size)
    else:
        means = truth.copy()
    belief = ObjectBelief.isotropic(means, sc.prior_variance)
    states = {
        rid: RobotState(sc.start[0], sc.start[1], sc.start_heading)
        for rid in range(sc.n_escorts + 1)
    }
    return truth, belief, states


def segment_distance(a, b, points) -> np.ndarray:
    """Distance from each of ``points (N, 2)`` to the segment ``a -> b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    points = np.asarray(points, float).reshape(-1, 2)
    ab = b - a
    denom = float(ab @ ab)
    t = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def collision_check(pa_state, truth, collision_radius: float, previous=None) -> bool:
    """True if the PA came within ``collision_radius`` of any true object.

    With ``previous`` the whole segment swept since that pose is checked.
    """
    truth = np.asarray(truth, float).reshape(-1, 2)
    if len(truth) == 0:
        return False
    end = _xy(pa_state)
    start = end if previous is None else _xy(previous)
    return bool(np.any(segment_distance(start, end, truth) <= collision_radius))


def _xy(state) -> np.ndarray:
    if isinstance(state, RobotState):
        return state.position
    return np.asarray(state, float)[:2]


@dataclass
class EpisodeLog:
    header: dict
    ticks: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    verdict: str | None = None
    n_ticks: int = 0

    def set_verdict(self, verdict: str, n_ticks: int):
        if self.verdict is not None:
            raise RuntimeError(f"verdict already set to {self.verdict!r}")
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        self.verdict = verdict
        self.n_ticks = n_ticks

    def records(self):
        yield {"type": "header", **self.header}
        for rec in self.ticks:
            yield {"type": "tick", **rec}
        for rec in self.messages:
            yield {"type": "message", **rec}
        yield {"type": "verdict", "verdict": self.verdict, "ticks": self.n_ticks}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records())

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        log = None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                log = cls(header=rec)
            elif kind == "tick":
                log.ticks.append(rec)
            elif kind == "message":
                log.messages.append(rec)
            elif kind == "verdict":
                log.verdict = rec["verdict"]
                log.n_ticks = rec["ticks"]
        if log is None:
            raise ValueError("log has no header record")
        return log


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def _state_list(state: RobotState) -> list:
    return [state.x, state.y, state.theta]


def run_episode(cfg: Config, seed=None) -> EpisodeLog:
    """Simulate one closed-loop episode; ``seed`` defaults to ``cfg.scenario.seed``."""
    ss = _seed_sequence(cfg.scenario.seed if seed is None else seed)
    scen_ss, meas_ss, comm_ss, plan_ss = ss.spawn(4)
    truth, belief, states = generate_scenario(cfg, np.random.default_rng(scen_ss))
    meas_rng = np.random.default_rng(meas_ss)
    params = agent_params(cfg)
    team = {rid: AgentSpec(PA if rid == PA_ID else EA, params[rid]) for rid in params}
    mission = Mission(team, cfg.task, cfg.sensor)
    rngs = {rid: np.random.default_rng(s) for rid, s in zip(sorted(team), plan_ss.spawn(len(team)))}
    planners = {
        rid: initial_planner(rid, mission, states[rid], belief, cfg.scenario.variant, cfg.planner)
        for rid in sorted(team)
    }
    sim = cfg.sim
    sched_cls = SCHEDULERS[sim.scheduler]
    kwargs = {"latency": sim.latency} if sim.scheduler == "async" else {}
    scheduler = sched_cls(sorted(team), sim.drop_probability, np.random.default_rng(comm_ss), **kwargs)

    log = EpisodeLog(
        header={
            "config": cfg.to_dict(),
            "seed": [int(e) for e in np.atleast_1d(ss.entropy)] + [int(k) for k in ss.spawn_key],
            "truth": truth.tolist(),
            "initial_states": {str(r): _state_list(s) for r, s in states.items()},
            "agents": {str(r): asdict(p) for r, p in params.items()},
        }
    )
    goal = np.asarray(cfg.task.goal)
    if np.linalg.norm(states[PA_ID].position - goal) <= sim.arrival_radius:
        log.set_verdict("reached", 0)
        return log
    if collision_check(states[PA_ID], truth, sim.collision_radius):
        log.set_verdict("collided", 0)
        return log

    tick = 0
    while True:
        if tick >= sim.max_ticks:
            log.set_verdict("timeout", tick)
            break
        measurements = []
        for eid in sorted(team):
            if team[eid].role == EA:
                measurements += simulate_measurements(truth, states[eid], cfg.sensor, meas_rng, tick)
        results = scheduler.run_tick(planners, measurements, states, cfg.planner, rngs)
        controls = {rid: u for rid, (u, _) in results.items()}
        planners = {rid: p for rid, (_, p) in results.items()}
        new_states = {rid: step(states[rid], controls[rid], params[rid]) for rid in sorted(team)}
        pa_belief = planners[PA_ID].belief
        log.ticks.append(
            {
                "tick": tick,
                "controls": {str(r): u for r, u in controls.items()},
                "states": {str(r): _state_list(s) for r, s in new_states.items()},
                "belief_mean": pa_belief.means.tolist(),
                "belief_var": pa_belief.marginal_variances().tolist(),
                "rewards": {str(r): p.last_reward for r, p in planners.items()},
                "measurements": [m.to_record() for m in measurements],
            }
        )
        collided = collision_check(new_states[PA_ID], truth, sim.collision_radius, states[PA_ID])
        states = new_states
        tick += 1
        if collided:
            log.set_verdict("collided", tick)
            break
        if np.linalg.norm(states[PA_ID].position - goal) <= sim.arrival_radius:
            log.set_verdict("reached", tick)
            break
    log.messages = list(scheduler.trace)
    return log


def replay(log: EpisodeLog) -> dict[int, np.ndarray]:
    """Re-execute the logged controls open loop; returns ``{robot_id: (ticks + 1, 3)}``."""
    params = {int(r): AgentParams(**p) for r, p in log.header["agents"].items()}
    current = {int(r): RobotState.from_array(s) for r, s in log.header["initial_states"].items()}
    paths = {r: [s.as_array()] for r, s in current.items()}
    for rec in log.ticks:
        for r in sorted(current):
            current[r] = step(current[r], rec["controls"][str(r)], params[r])
            paths[r].append(current[r].as_array())
    return {r: np.array(p) for r, p in paths.items()}


def logged_paths(log: EpisodeLog) -> dict[int, np.ndarray]:
    """The trajectories as recorded in the log, in the layout of :func:`replay`."""
    out = {}
    for r, s in log.header["initial_states"].items():
        out[int(r)] = np.array([s] + [rec["states"][r] for rec in log.ticks], dtype=float)
    return out


def episode_seed(base_seed: int, env_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(env_index)])


def _run_job(job):
    cfg, seed_entropy, keep_log = job
    log = run_episode(cfg, np.random.SeedSequence(seed_entropy))
    return log.verdict, log.n_ticks, log.to_jsonl() if keep_log else None


def batch_jobs(cfg: Config, variants, n_envs: int, escort_settings, base_seed: int):
    """Unique episodes of a batch as ``(variant, n_escorts, env_index, config)``.

    The blind baseline has no escorts, so it runs once per environment.
    """
    jobs = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        settings = [0] if variant == "blind" else list(escort_settings)
        for n in settings:
            for k in range(n_envs):
                jobs.append((variant, n, k, cfg.with_variant(variant, n)))
    return jobs


def batch_evaluate(cfg: Config, variants, n_envs: int, escort_settings, seed: int = 0, workers: int = 1, on_episode=None) -> list[dict]:
    """Failure-rate table over paired environments.

    One row per ``(variant, n_escorts)`` cell.  The blind episodes are shared
    by every escort setting, so blind rows repeat the same numbers.
    ``on_episode(variant, n_escorts, env_index, verdict, ticks, log_text)`` is
    called in job order as results arrive.
    """
    variants = list(variants)
    escort_settings = list(escort_settings)
    if not variants:
        raise ValueError("need at least one variant")
    jobs = batch_jobs(cfg, variants, n_envs, escort_settings, seed)
    payload = [
        (c, episode_seed(seed, k).entropy, on_episode is not None) for _, _, k, c in jobs
    ]
    outcomes: dict[tuple[str, int], list] = {}

    def collect(results):
        # results arrive in job order, so callbacks can stream to disk
        for (variant, n, k, _), (verdict, ticks, text) in zip(jobs, results):
            outcomes.setdefault((variant, n), []).append((verdict, ticks))
            if on_episode is not None:
                on_episode(variant, n, k, verdict, ticks, text)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            collect(pool.map(_run_job, payload))
    else:
        collect(_run_job(p) for p in payload)

    rows = []
    for variant in variants:
        for n in escort_settings if escort_settings else [0]:
            runs = outcomes[(variant, 0 if variant == "blind" else n)]
            verdicts = [v for v, _ in runs]
            reached = [t for v, t in runs if v == "reached"]
            rows.append(
                {
                    "variant": variant,
                    "n_escorts": n,
                    "n_episodes": len(runs),
                    "failure_rate": verdicts.count("collided") / len(runs) if runs else float("nan"),
                    "timeout_rate": verdicts.count("timeout") / len(runs) if runs else float("nan"),
                    "mean_ticks_to_goal": float(np.mean(reached)) if reached else float("nan"),
                }
            )
    return rows


CSV_COLUMNS = ("variant", "n_escorts", "n_episodes", "failure_rate", "timeout_rate", "mean_ticks_to_goal")
