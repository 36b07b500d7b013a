"""Fuse a few range-limited fixes into an object belief and watch the
information gain that an escort would be credited with.

    python demos/belief_and_gain.py
"""

import numpy as np

from escortplan.belief import (
    ObjectBelief,
    SensorParams,
    information_gain,
    predict_information,
    simulate_measurements,
    update,
)
from escortplan.dynamics import RobotState

rng = np.random.default_rng(0)
sensor = SensorParams(range=10.0, noise_var=1.0)
truth = np.array([[30.0, 40.0], [60.0, 55.0]])
belief = ObjectBelief.isotropic(truth + rng.normal(scale=5.0, size=truth.shape), 25.0)
print("prior means\n", belief.means.round(2))

# an escort drives past the first object only
for x in (20.0, 25.0, 30.0, 35.0):
    pose = RobotState(x, 42.0)
    fixes = simulate_measurements(truth, pose, sensor, rng)
    belief = update(belief, fixes, sensor)
    print(f"at x={x:4.0f}: {len(fixes)} fix(es), var of object 0 = {belief.marginal_variances()[0, 0]:.3f}")

print("posterior means\n", belief.means.round(2))

# planning-time view: counts of future poses in range of each mean
plan = np.array([[55.0, 50.0, 0.0], [58.0, 52.0, 0.0], [61.0, 54.0, 0.0]])
predicted = predict_information(belief, [plan], sensor)
print(f"planned pass by object 1 is worth {information_gain(belief, predicted):.3f} nats")
