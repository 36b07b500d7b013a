"""Score two candidate escort plans with each escort reward.

The object's mean sits just beside the principal's route.  One plan sweeps
past it; the other turns away before getting within sensing range and so
earns exactly nothing.  Confirming the object is off the route raises the
principal's odds, so the sweep earns positive SI and SE.

    python demos/escort_rewards.py
"""

import math

import numpy as np

from escortplan.belief import ObjectBelief, SensorParams
from escortplan.deccem import ControlDistribution
from escortplan.dynamics import AgentParams, RobotState
from escortplan.rewards import EA, PA, AgentSpec, RewardContext, mi_ucb_reward, se_reward, si_reward
from escortplan.task import ReachAvoidTask

horizon = 8
team = {
    0: AgentSpec(PA, AgentParams(v=2.0, u_max=math.pi / 2)),
    1: AgentSpec(EA, AgentParams(v=4.0, u_max=math.pi / 2)),
}
states = {0: RobotState(10.0, 50.0, 0.0), 1: RobotState(10.0, 50.0, 0.0)}
belief = ObjectBelief.isotropic([[28.0, 59.0], [60.0, 80.0]], 25.0)
ctx = RewardContext(
    robot_id=1,
    team=team,
    states=states,
    belief=belief,
    # a nearby goal keeps the satisfaction probability in a readable range
    task=ReachAvoidTask(goal=(36.0, 50.0), reach_every_step=False),
    sensor=SensorParams(range=10.0, noise_var=1.0),
    distributions={0: ControlDistribution(np.zeros(horizon), np.full(horizon, 0.05))},
    horizon=horizon,
    n_traj=20,
    n_mc=400,
)

plans = {
    "sweep the route": np.zeros(horizon),
    "head away": np.r_[-math.pi / 2, -math.pi / 2, np.zeros(horizon - 2)],
}
print(f"{'plan':18s} {'SI':>10s} {'SE':>10s} {'MI-UCB':>10s}")
for name, u in plans.items():
    print(f"{name:18s} {si_reward(u, ctx):10.4f} {se_reward(u, ctx):10.4f} {mi_ucb_reward(u, ctx):10.4f}")
