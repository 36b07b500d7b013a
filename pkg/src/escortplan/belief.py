"""Gaussian beliefs over object locations in information form.

Each object carries an independent 2-D Gaussian stored as a mean and a 2x2
information (inverse covariance) matrix.  Because the range sensor observes
objects independently, the joint belief is exactly block diagonal, so the
objects are kept as a stack of ``(N, 2)`` means and ``(N, 2, 2)`` information
blocks.

A measurement inside sensing range contributes ``I / sigma^2`` of
information; anything else contributes nothing.  Updates are therefore plain
sums, which is what makes planning-time prediction cheap: a predicted belief
only needs to count how often an escort will be in range of each object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import RobotState


@dataclass(frozen=True)
class SensorParams:
    range: float = 10.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"sensor range must be > 0, got {self.range}")
        if not self.noise_var > 0:
            raise ValueError(f"sensor noise_var must be > 0, got {self.noise_var}")

    @property
    def precision(self) -> float:
        return 1.0 / self.noise_var


@dataclass(frozen=True)
class Measurement:
    object_id: int
    value: np.ndarray
    sensor_pose: RobotState
    time: int = 0

    def __post_init__(self):
        value = np.asarray(self.value, dtype=float).reshape(2)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"non-finite measurement {value}")
        object.__setattr__(self, "value", value)

    def to_record(self) -> dict:
        return {
            "object_id": int(self.object_id),
            "value": [float(v) for v in self.value],
            "sensor_pose": [float(v) for v in self.sensor_pose.as_array()],
            "time": int(self.time),
        }


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ObjectBelief:
    """Independent per-object Gaussians ``N(means[i], inv(info[i]))``."""

    means: np.ndarray
    info: np.ndarray = field(repr=False)

    def __post_init__(self):
        means = _frozen(self.means).reshape(-1, 2)
        info = _frozen(self.info).reshape(-1, 2, 2)
        if means.shape[0] != info.shape[0]:
            raise ValueError(f"{means.shape[0]} means but {info.shape[0]} information blocks")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "info", info)

    @classmethod
    def isotropic(cls, means, variance) -> "ObjectBelief":
        means = np.asarray(means, dtype=float).reshape(-1, 2)
        info = np.zeros((len(means), 2, 2))
        with np.errstate(divide="ignore"):
            # zero variance is a point mass: infinite information, no NaN off the diagonal
            info[:, 0, 0] = info[:, 1, 1] = 1.0 / np.float64(variance)
        return cls(means, info)

    @property
    def n_objects(self) -> int:
        return self.means.shape[0]

    def covariances(self) -> np.ndarray:
        return np.linalg.inv(self.info) if self.n_objects else np.zeros((0, 2, 2))

    def marginal_variances(self) -> np.ndarray:
        """Per-object ``(var_x, var_y)``, shape ``(N, 2)``."""
        return np.diagonal(self.covariances(), axis1=1, axis2=2).copy()


def in_range(points, targets, sensing_range: float) -> np.ndarray:
    """Boolean ``(..., K, N)``: point ``k`` strictly within range of target ``n``."""
    points = np.asarray(points, dtype=float)[..., :2]
    d2 = np.sum((points[..., :, None, :] - np.asarray(targets)[..., None, :, :]) ** 2, axis=-1)
    return d2 < sensing_range**2


def simulate_measurements(
    truth, sensor_state: RobotState, sensor: SensorParams, rng, time: int = 0
) -> list[Measurement]:
    """Noisy position fixes of every true object strictly inside sensing range."""
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    hits = np.flatnonzero(in_range(sensor_state.position[None], truth, sensor.range)[0])
    noise = rng.normal(scale=np.sqrt(sensor.noise_var), size=(len(hits), 2))
    return [
        Measurement(int(i), truth[i] + e, sensor_state, time) for i, e in zip(hits, noise)
    ]


def update(belief: ObjectBelief, measurements, sensor: SensorParams) -> ObjectBelief:
    """Information-form Kalman update with a batch of simultaneous measurements.

    A measurement whose value lies outside sensing range of the pose it was
    taken from is treated as spurious and contributes no information.
    """
    measurements = list(measurements)
    if not measurements:
        return belief
    n = belief.n_objects
    gain = np.zeros(n)
    weighted = np.zeros((n, 2))
    for m in measurements:
        if not 0 <= m.object_id < n:
            raise ValueError(f"measurement of unknown object {m.object_id} (have {n})")
        if np.sum((m.value - m.sensor_pose.position) ** 2) >= sensor.range**2:
            continue
        gain[m.object_id] += sensor.precision
        weighted[m.object_id] += sensor.precision * m.value
    touched = gain > 0
    if not touched.any():
        return belief
    info = belief.info.copy()
    means = belief.means.copy()
    info[touched] += gain[touched, None, None] * np.eye(2)
    rhs = np.einsum("nij,nj->ni", belief.info[touched], belief.means[touched]) + weighted[touched]
    means[touched] = np.linalg.solve(info[touched], rhs[..., None])[..., 0]
    return ObjectBelief(means, info)


def measurement_counts(belief: ObjectBelief, positions, sensor: SensorParams) -> np.ndarray:
    """Number of poses in ``positions (..., K, 2|3)`` within range of each object mean.

    Returns an integer array ``(..., N)``.  Object means stand in for the
    unknown true locations.
    """
    return in_range(positions, belief.means, sensor.range).sum(axis=-2)


def predict_information(belief: ObjectBelief, escort_trajectories, sensor: SensorParams) -> ObjectBelief:
    """Belief after the measurements the escorts would take along their paths.

    Information grows by ``I / sigma^2`` for every (pose, escort) in range of
    an object's mean; the means are left unchanged.
    """
    counts = np.zeros(belief.n_objects)
    for traj in escort_trajectories:
        traj = np.asarray(traj, dtype=float)
        if traj.size:
            counts += measurement_counts(belief, traj.reshape(-1, traj.shape[-1]), sensor)
    return ObjectBelief(belief.means, with_added_information(belief.info, counts * sensor.precision))


def with_added_information(info, extra) -> np.ndarray:
    """``info + extra * I`` broadcast over leading axes of ``extra``."""
    return info + np.asarray(extra, dtype=float)[..., None, None] * np.eye(2)


def sample_objects(belief: ObjectBelief, n: int, rng) -> np.ndarray:
    """``n`` joint draws of all object locations, shape ``(n, N, 2)``."""
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    z = rng.standard_normal((n, belief.n_objects, 2))
    return objects_from_normals(belief.means, belief.info, z)


def covariance_factor(info) -> np.ndarray:
    """Lower Cholesky factor of ``inv(info)`` for a stack of 2x2 blocks.

    Infinite information gives a zero factor (a point mass at the mean).
    """
    info = np.asarray(info, dtype=float)
    a, b, d = info[..., 0, 0], info[..., 1, 0], info[..., 1, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        det = a * d - b * b
        # covariance entries
        cxx, cxy, cyy = d / det, -b / det, a / det
        l11 = np.sqrt(cxx)
        l21 = cxy / l11
        l22 = np.sqrt(cyy - l21 * l21)
    L = np.zeros(info.shape)
    L[..., 0, 0] = l11
    L[..., 1, 0] = l21
    L[..., 1, 1] = l22
    return np.nan_to_num(L, nan=0.0, posinf=0.0, neginf=0.0)


def objects_from_normals(means, info, z) -> np.ndarray:
    """Map standard normals ``z (S, N, 2)`` to object samples.

    Sharing ``z`` between a prior and a predicted belief gives common random
    numbers for the two evaluations.  ``info`` may carry extra leading axes,
    in which case the result is ``info.shape[:-3] + (S, N, 2)``.
    """
    L = covariance_factor(info)
    return means + np.einsum("...nij,snj->...sni", L, z)


def log_det(info) -> np.ndarray:
    """log-determinant of each SPD block; raises ``ValueError`` otherwise."""
    info = np.asarray(info, dtype=float)
    if not np.allclose(info, np.swapaxes(info, -1, -2)):
        raise ValueError("information matrix is not symmetric")
    if np.any(np.linalg.eigvalsh(info) <= 0):
        raise ValueError("information matrix is not positive definite")
    sign, logdet = np.linalg.slogdet(info)
    if not np.all(np.isfinite(logdet)):
        raise ValueError("information matrix is not positive definite")
    return logdet


def information_gain(prior: ObjectBelief, predicted: ObjectBelief) -> float:
    """Shannon information gained about object locations, in nats."""
    return 0.5 * float(np.sum(log_det(predicted.info) - log_det(prior.info)))


def isotropic_gain(info, extra) -> np.ndarray:
    """Vectorised information gain for adding ``extra * I`` to each block.

    ``info`` is ``(N, 2, 2)``, ``extra`` is ``(..., N)``; returns ``(...)``.
    Uses ``det(A + cI) = det A + c tr A + c^2`` so no factorisation is needed.
    """
    info = np.asarray(info, dtype=float)
    det = info[:, 0, 0] * info[:, 1, 1] - info[:, 0, 1] * info[:, 1, 0]
    tr = info[:, 0, 0] + info[:, 1, 1]
    extra = np.asarray(extra, dtype=float)
    return 0.5 * np.sum(np.log1p(extra * tr / det + extra**2 / det), axis=-1)
