"""Observation-path containers shared by the policy and simulation layers.

A trajectory is what an alarm rule is allowed to see: the ordered jump times
of the merged observation process with a channel label per jump, over a finite
horizon.  The generating disorder scenario rides along for the evaluator's
bookkeeping but is never exposed to policies.  Batches hold many trajectories
in padded arrays so policies can be evaluated vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Scenario", "Trajectory", "TrajectoryBatch"]


@dataclass(frozen=True)
class Scenario:
    """Disorder times of the two channels (an atom at zero, else exponential)."""

    theta1: float
    theta2: float

    @property
    def theta(self) -> float:
        return min(self.theta1, self.theta2)


@dataclass
class Trajectory:
    """Jump times and channel labels observed over ``[0, horizon]``."""

    times: np.ndarray
    labels: np.ndarray
    horizon: float
    scenario: Scenario | None = None

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.times.shape != self.labels.shape:
            raise ValueError("times and labels must have matching shapes")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if self.times[0] <= 0 or self.times[-1] > self.horizon:
                raise ValueError("jump times must lie in (0, horizon]")
            if not np.all(np.isin(self.labels, (1, 2))):
                raise ValueError("labels must be 1 or 2")

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)


@dataclass
class TrajectoryBatch:
    """Padded arrays of many trajectories (pad value: +inf times, 0 labels)."""

    times: np.ndarray
    labels: np.ndarray
    horizon: float
    theta1: np.ndarray | None = None
    theta2: np.ndarray | None = None

    @property
    def n_traj(self) -> int:
        return self.times.shape[0]

    @property
    def max_jumps(self) -> int:
        return self.times.shape[1]

    @classmethod
    def from_trajectories(cls, trajectories) -> "TrajectoryBatch":
        trajectories = list(trajectories)
        if not trajectories:
            raise ValueError("empty trajectory list")
        horizon = trajectories[0].horizon
        if any(t.horizon != horizon for t in trajectories):
            raise ValueError("all trajectories in a batch must share the horizon")
        m = max(t.n_jumps for t in trajectories)
        times = np.full((len(trajectories), max(m, 1)), np.inf)
        labels = np.zeros((len(trajectories), max(m, 1)), dtype=np.int8)
        th1 = np.full(len(trajectories), np.nan)
        th2 = np.full(len(trajectories), np.nan)
        for i, t in enumerate(trajectories):
            times[i, : t.n_jumps] = t.times
            labels[i, : t.n_jumps] = t.labels
            if t.scenario is not None:
                th1[i], th2[i] = t.scenario.theta1, t.scenario.theta2
        has_theta = not np.isnan(th1).any()
        return cls(times, labels, horizon,
                   th1 if has_theta else None, th2 if has_theta else None)

    def row(self, i: int) -> Trajectory:
        k = int(np.sum(np.isfinite(self.times[i])))
        sc = None
        if self.theta1 is not None and self.theta2 is not None:
            sc = Scenario(float(self.theta1[i]), float(self.theta2[i]))
        return Trajectory(self.times[i, :k].copy(), self.labels[i, :k].copy(),
                          self.horizon, sc)
