"""Time-stamped state samples and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trajectory:
    """States sampled at strictly increasing times.

    ``blowup_time`` is set when the solution leaves every bounded set in
    finite time; ``diverged`` marks numerical runs stopped by the norm guard.
    """

    times: np.ndarray
    states: np.ndarray
    blowup_time: float | None = None
    diverged: bool = False
    status: str = "ok"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(len(times), -1)
        if len(times) != len(states):
            raise ValueError("times and states differ in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.times)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def write_csv(self, fh, precision: int = 17) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.n)])
        for t, x in zip(self.times, self.states):
            writer.writerow([_fmt(t, precision)] + [_fmt(v, precision) for v in x])
        if self.blowup_time is not None:
            fh.write(f"# blowup_time={_fmt(self.blowup_time, precision)}\n")

    def to_csv(self, precision: int = 17) -> str:
        buf = io.StringIO()
        self.write_csv(buf, precision)
        return buf.getvalue()


def _fmt(value, precision):
    return format(float(value), f".{precision}g")


def read_csv(text: str) -> Trajectory:
    """Parse the CSV written by :meth:`Trajectory.write_csv`."""
    blowup = None
    rows = []
    for line in text.splitlines():
        if line.startswith("# blowup_time="):
            blowup = float(line.split("=", 1)[1])
        elif line and not line.startswith("#"):
            rows.append(line)
    body = list(csv.reader(rows))[1:]
    data = np.array(body, dtype=float).reshape(len(body), -1)
    n = data.shape[1] - 1 if data.size else 0
    return Trajectory(data[:, 0], data[:, 1:].reshape(len(body), n), blowup_time=blowup)
