"""Per-step metrics table and its CSV form.

Column contract (version 1): ``t,seed,mode,reward,control_error,a0_norm,
ac_norm,p_0..p_{m-1}``.  Floats are written with ``repr`` so a value read
back is bit-identical to the one written.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .io import atomic_write_text

METRICS_VERSION = 1
BASE_COLUMNS = ("t", "seed", "mode", "reward", "control_error", "a0_norm", "ac_norm")


def metrics_columns(action_dim: int) -> list[str]:
    return list(BASE_COLUMNS) + [f"p_{i}" for i in range(action_dim)]


@dataclass(eq=False)
class MetricsLog:
    t: np.ndarray
    seed: np.ndarray
    mode: np.ndarray
    reward: np.ndarray
    control_error: np.ndarray
    a0_norm: np.ndarray
    ac_norm: np.ndarray
    p: np.ndarray  # (rows, action_dim)

    def __post_init__(self):
        n = len(self.t)
        for name in ("seed", "mode", "reward", "control_error", "a0_norm", "ac_norm", "p"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, not {n}")
        if n and np.any(self.control_error < 0):
            raise ValueError("control_error must be >= 0")

    def __len__(self):
        return len(self.t)

    @property
    def action_dim(self) -> int:
        return self.p.shape[1]

    @classmethod
    def empty(cls, action_dim: int) -> "MetricsLog":
        z = np.zeros(0)
        return cls(np.zeros(0, int), np.zeros(0, int), np.zeros(0, dtype=object), z, z, z, z,
                   np.zeros((0, action_dim)))

    @classmethod
    def from_trace(cls, trace, seed: int, mode: str) -> "MetricsLog":
        n = len(trace)
        return cls(np.arange(n), np.full(n, seed), np.full(n, mode, dtype=object),
                   trace.reward.copy(), trace.control_error.copy(),
                   np.linalg.norm(trace.a0, axis=1), np.linalg.norm(trace.ac, axis=1),
                   trace.p.copy())

    @classmethod
    def concat(cls, logs) -> "MetricsLog":
        logs = list(logs)
        if not logs:
            raise ValueError("nothing to concatenate")
        return cls(*(np.concatenate([getattr(lg, f) for lg in logs])
                     for f in ("t", "seed", "mode", "reward", "control_error", "a0_norm",
                               "ac_norm", "p")))

    def select(self, seed: int | None = None, mode: str | None = None) -> "MetricsLog":
        keep = np.ones(len(self), bool)
        if seed is not None:
            keep &= self.seed == seed
        if mode is not None:
            keep &= self.mode == mode
        return MetricsLog(self.t[keep], self.seed[keep], self.mode[keep], self.reward[keep],
                          self.control_error[keep], self.a0_norm[keep], self.ac_norm[keep],
                          self.p[keep])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(metrics_columns(self.action_dim))
        r = repr
        for i in range(len(self)):
            w.writerow([int(self.t[i]), int(self.seed[i]), self.mode[i], r(float(self.reward[i])),
                        r(float(self.control_error[i])), r(float(self.a0_norm[i])),
                        r(float(self.ac_norm[i]))] + [r(float(v)) for v in self.p[i]])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        header = rows[0]
        m = len(header) - len(BASE_COLUMNS)
        if m < 0 or header != metrics_columns(m):
            raise ValueError(f"{path}: unexpected header {header}")
        body = rows[1:]
        if not body:
            return cls.empty(m)
        cols = list(zip(*body))
        f = lambda c: np.array(c, dtype=float)  # noqa: E731
        return cls(np.array(cols[0], dtype=int), np.array(cols[1], dtype=int),
                   np.array(cols[2], dtype=object), f(cols[3]), f(cols[4]), f(cols[5]),
                   f(cols[6]), np.array(cols[7:], dtype=float).T.reshape(len(body), m))
