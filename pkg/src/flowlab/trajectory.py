"""Time-stamped state sequences shared by the heat and JKO flows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FlowTrajectory:
    """Densities (or other state vectors) over Y nodes at increasing times.

    diagnostics maps a name (entropy, cheeger, mass, ...) to a per-time array.
    """

    times: np.ndarray
    states: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("one state per time stamp required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time stamps must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def state_at(self, t, atol=1e-12):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise KeyError(f"no state at t = {t}")
        return self.states[k]
