import json
from dataclasses import replace

import numpy as np
import pytest

from escortplan.coordinator import PlannerConfig
from escortplan.deccem import CemConfig
from escortplan.dynamics import RobotState
from escortplan.simulator import (
    CSV_COLUMNS,
    Config,
    EpisodeLog,
    ScenarioConfig,
    SimConfig,
    batch_evaluate,
    collision_check,
    episode_seed,
    generate_scenario,
    logged_paths,
    replay,
    run_episode,
    segment_distance,
)

FAST_CEM = CemConfig(n_samples=16, n_elite=4, n_inner_iters=2)


def fast_config(variant="blind", n_escorts=0, **scenario):
    scen = ScenarioConfig(variant=variant, n_escorts=n_escorts, **scenario)
    return Config(scenario=scen, cem=FAST_CEM,
                  planner=PlannerConfig(cem=FAST_CEM, horizon=6, n_rounds=1, n_traj=2, n_mc=6))


# --- scenarios --------------------------------------------------------------

def test_objects_inside_spawn_box_and_robots_at_start():
    cfg = Config()
    truth, belief, states = generate_scenario(cfg, np.random.default_rng(0))
    assert truth.shape == (20, 2)
    assert np.all((truth >= 20) & (truth <= 80))
    assert np.all((belief.means >= 0) & (belief.means <= 100))
    assert belief.info[0] == pytest.approx(np.eye(2) / 25.0)
    assert len(states) == 3 and all(s.position.tolist() == [10.0, 50.0] for s in states.values())


def test_zero_prior_variance_gives_exact_means():
    cfg = Config(scenario=ScenarioConfig(prior_variance=0.0))
    truth, belief, _ = generate_scenario(cfg, np.random.default_rng(3))
    assert np.array_equal(truth, belief.means)


def test_corruption_variance_matches_prior():
    cfg = Config(scenario=ScenarioConfig(spawn_box=(40, 60, 40, 60)))
    errs = np.concatenate([
        (lambda t, b, _: b.means - t)(*generate_scenario(cfg, np.random.default_rng(s))) for s in range(1000)
    ])
    assert np.all(np.abs(errs.var(axis=0) / 25.0 - 1.0) < 0.1)


def test_environment_identical_across_variants():
    seed = episode_seed(0, 4)
    a = generate_scenario(Config().with_variant("se", 3), np.random.default_rng(seed.spawn(4)[0]))
    seed = episode_seed(0, 4)
    b = generate_scenario(Config().with_variant("blind", 0), np.random.default_rng(seed.spawn(4)[0]))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].means, b[1].means)
    assert a[2][0] == b[2][0]


def test_blind_requires_no_escorts():
    with pytest.raises(ValueError):
        ScenarioConfig(variant="blind", n_escorts=2)
    with pytest.raises(ValueError):
        ScenarioConfig(variant="se", n_escorts=0)
    with pytest.raises(ValueError):
        ScenarioConfig(spawn_box=(20, 120, 20, 80))


# --- collisions -------------------------------------------------------------

def test_collision_examples():
    assert collision_check(RobotState(5, 5), [[5.0, 5.0]], 2.0)
    assert not collision_check(RobotState(5, 5), np.zeros((0, 2)), 2.0)
    assert not collision_check(RobotState(5, 5), [[8.0, 5.0]], 2.0)
    # the end points miss but the swept segment passes through the object
    assert collision_check(RobotState(10, 0), [[5.0, 0.5]], 1.0, previous=RobotState(0, 0))
    assert not collision_check(RobotState(10, 0), [[5.0, 0.5]], 1.0)


def test_segment_distance():
    d = segment_distance([0, 0], [10, 0], [[5, 3], [-4, 3], [13, -4]])
    assert d == pytest.approx([3.0, 5.0, 5.0])
    assert segment_distance([1, 1], [1, 1], [[4, 5]]) == pytest.approx([5.0])


# --- episodes ---------------------------------------------------------------

def test_empty_world_reached():
    log = run_episode(fast_config(n_objects=0), 0)
    assert log.verdict == "reached"
    assert 30 <= log.n_ticks <= 60


def test_start_at_goal_reached_at_tick_zero():
    cfg = fast_config(start=(90.0, 50.0))
    log = run_episode(cfg, 0)
    assert (log.verdict, log.n_ticks, log.ticks) == ("reached", 0, [])


def test_timeout_verdict():
    cfg = replace(fast_config(n_objects=0), sim=SimConfig(max_ticks=3))
    log = run_episode(cfg, 0)
    assert (log.verdict, log.n_ticks, len(log.ticks)) == ("timeout", 3, 3)


@pytest.mark.slow
def test_confidently_wrong_prior_on_blocked_path_mostly_collides():
    # one object on the straight start-goal line; the belief is tight but misplaced
    cfg = fast_config(n_objects=1, spawn_box=(50, 50, 50, 50), prior_variance=1.0, corruption_variance=400.0)
    cfg = replace(cfg, sim=SimConfig(max_ticks=60))
    verdicts = [run_episode(cfg, s).verdict for s in range(50)]
    assert verdicts.count("collided") > 25


def test_episode_deterministic_and_replayable():
    cfg = fast_config("mi-ucb", 2, n_objects=8)
    cfg = replace(cfg, sim=SimConfig(max_ticks=12))
    a, b = run_episode(cfg, 5), run_episode(cfg, 5)
    assert a.to_jsonl() == b.to_jsonl()
    paths = replay(a)
    recorded = logged_paths(a)
    assert sorted(paths) == [0, 1, 2]
    for r in paths:
        assert np.array_equal(paths[r], recorded[r])


def test_log_roundtrip_and_schema():
    cfg = replace(fast_config("si", 1, n_objects=5), sim=SimConfig(max_ticks=4))
    log = run_episode(cfg, 1)
    text = log.to_jsonl()
    kinds = [json.loads(line)["type"] for line in text.splitlines()]
    assert kinds[0] == "header" and kinds[-1] == "verdict" and kinds.count("tick") == len(log.ticks)
    tick = json.loads(text.splitlines()[1])
    for key in ("controls", "states", "belief_mean", "belief_var", "rewards", "measurements"):
        assert key in tick
    assert EpisodeLog.from_jsonl(text).to_jsonl() == text


def test_verdict_set_once():
    log = EpisodeLog(header={})
    log.set_verdict("collided", 3)
    with pytest.raises(RuntimeError):
        log.set_verdict("reached", 4)
    with pytest.raises(ValueError):
        EpisodeLog(header={}).set_verdict("lost", 1)


def test_async_episode_logs_messages():
    cfg = fast_config("mi-ucb", 1, n_objects=4)
    cfg = replace(cfg, sim=SimConfig(max_ticks=3, scheduler="async", drop_probability=0.5))
    log = run_episode(cfg, 2)
    assert log.messages and {m["event"] for m in log.messages} <= {"send", "deliver", "drop", "stale"}
    assert run_episode(cfg, 2).to_jsonl() == log.to_jsonl()


# --- batches ----------------------------------------------------------------

def test_batch_rows_and_blind_sharing():
    cfg = replace(fast_config(n_objects=0), sim=SimConfig(max_ticks=60))
    seen = []
    rows = batch_evaluate(cfg, ["blind", "mi-ucb"], 2, [1, 2], seed=3,
                          on_episode=lambda *a: seen.append(a[:3]))
    assert [(r["variant"], r["n_escorts"]) for r in rows] == [("blind", 1), ("blind", 2), ("mi-ucb", 1), ("mi-ucb", 2)]
    assert all(set(r) == set(CSV_COLUMNS) for r in rows)
    assert all(r["failure_rate"] == 0.0 for r in rows)
    assert rows[0] == {**rows[1], "n_escorts": 1}
    # blind runs once per environment, escorts once per (setting, environment)
    assert seen == [("blind", 0, 0), ("blind", 0, 1), ("mi-ucb", 1, 0), ("mi-ucb", 1, 1), ("mi-ucb", 2, 0), ("mi-ucb", 2, 1)]


def test_batch_rejects_unknown_variant():
    with pytest.raises(ValueError):
        batch_evaluate(Config(), ["greedy"], 1, [1])
