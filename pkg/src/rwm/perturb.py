"""Actuator-gain perturbation schedules ``p(t)``.

A schedule is a pure function of ``(kind, params, seed, t)``.  The drift kind
involves a recursive filter, so realised values are computed in blocks and
cached; the cache never changes what ``perturbation_at`` returns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

KINDS = ("none", "step_cycle", "alternating", "drift")
_DRIFT_BLOCK = 4096


@dataclass(frozen=True)
class StepCycleParams:
    magnitude_range: tuple[float, float] = (-0.5, 0.5)
    on_steps: int = 2000
    off_steps: int = 2000
    resample_each_cycle: bool = True

    def __post_init__(self):
        if self.on_steps <= 0 or self.off_steps <= 0:
            raise ValueError("on_steps and off_steps must be positive")
        lo, hi = self.magnitude_range
        if lo > hi:
            raise ValueError("magnitude_range must be (lo, hi) with lo <= hi")


@dataclass(frozen=True)
class AlternatingParams:
    """ON segments apply ``+magnitude`` and ``-magnitude`` in turn."""

    magnitude: tuple[float, ...] = (0.4, 0.4)
    on_steps: int = 2000
    off_steps: int = 2000

    def __post_init__(self):
        if self.on_steps <= 0 or self.off_steps <= 0:
            raise ValueError("on_steps and off_steps must be positive")


@dataclass(frozen=True)
class DriftParams:
    """``p_j(t) = amplitude * sin(2 pi t / period + phase_j) + x_j(t)``.

    ``x`` is first-order low-pass filtered Gaussian noise,
    ``x <- (1 - beta) x + beta xi``, clipped to ``+-noise_envelope``.  The
    innovations ``xi`` are truncated at 4 standard deviations so the
    per-step change of ``p`` is bounded.  Phases are spread evenly over the
    actuators so they do not all cross zero together.
    """

    amplitude: float = 0.4
    period: int = 16000
    noise_std: float = 0.5
    filter_coef: float = 0.01
    noise_envelope: float | None = None

    def __post_init__(self):
        if self.period <= 0 or not 0 < self.filter_coef <= 1:
            raise ValueError("period must be positive and filter_coef in (0, 1]")
        if self.amplitude < 0 or self.noise_std < 0:
            raise ValueError("amplitude and noise_std must be >= 0")

    @property
    def envelope(self) -> float:
        if self.noise_envelope is not None:
            return float(self.noise_envelope)
        b = self.filter_coef
        return 3.0 * self.noise_std * math.sqrt(b / (2.0 - b))


@dataclass(eq=False)
class PerturbationSchedule:
    kind: str
    action_dim: int
    params: object = None
    seed: int = 0
    _drift_cache: list = field(default_factory=list, repr=False)
    _drift_state: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.params is None:
            self.params = {
                "none": None,
                "step_cycle": StepCycleParams(),
                "alternating": AlternatingParams(magnitude=(0.4,) * self.action_dim),
                "drift": DriftParams(),
            }[self.kind]
        if self.kind == "alternating" and len(self.params.magnitude) != self.action_dim:
            raise ValueError("alternating magnitude must have action_dim entries")

    # segment structure (step_cycle / alternating)
    @property
    def cycle_length(self) -> int | None:
        if self.kind in ("step_cycle", "alternating"):
            return self.params.on_steps + self.params.off_steps
        return None

    def is_on(self, t: int) -> bool:
        if self.kind in ("step_cycle", "alternating"):
            return t % self.cycle_length < self.params.on_steps
        return self.kind == "drift"

    def cycle_index(self, t: int) -> int:
        n = self.cycle_length
        return t // n if n else 0

    def _drift_block(self, k: int) -> np.ndarray:
        while len(self._drift_cache) <= k:
            j = len(self._drift_cache)
            prm: DriftParams = self.params
            rng = np.random.default_rng([self.seed, j])
            xi = np.clip(rng.standard_normal((_DRIFT_BLOCK, self.action_dim)), -4.0, 4.0)
            xi *= prm.noise_std
            b = prm.filter_coef
            zi = (1.0 - b) * (np.zeros(self.action_dim) if self._drift_state is None
                              else self._drift_state)
            x, _ = lfilter([b], [1.0, -(1.0 - b)], xi, axis=0, zi=zi[None, :])
            self._drift_state = x[-1].copy()
            self._drift_cache.append(x)
        return self._drift_cache[k]

    def series(self, t0: int, t1: int) -> np.ndarray:
        """``p(t)`` for ``t0 <= t < t1`` as a ``(t1 - t0, action_dim)`` array."""
        ts = np.arange(t0, t1)
        if self.kind == "none":
            return np.zeros((ts.size, self.action_dim))
        if self.kind == "drift":
            prm: DriftParams = self.params
            phases = np.pi * np.arange(self.action_dim) / self.action_dim
            sine = prm.amplitude * np.sin(2.0 * np.pi * ts[:, None] / prm.period + phases)
            if ts.size == 0:
                return np.zeros((0, self.action_dim))
            first, last = t0 // _DRIFT_BLOCK, (t1 - 1) // _DRIFT_BLOCK
            noise = np.concatenate([self._drift_block(k) for k in range(first, last + 1)])
            noise = noise[t0 - first * _DRIFT_BLOCK: t1 - first * _DRIFT_BLOCK]
            env = prm.envelope
            return sine + np.clip(noise, -env, env)
        out = np.zeros((ts.size, self.action_dim))
        if ts.size:
            on = ts % self.cycle_length < self.params.on_steps
            cyc = ts // self.cycle_length
            for k in np.unique(cyc[on]):
                sel = on & (cyc == k)
                out[sel] = perturbation_at(self, int(ts[sel][0]))
        return out


def perturbation_at(sched: PerturbationSchedule, t: int) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    m = sched.action_dim
    if sched.kind == "none":
        return np.zeros(m)
    if sched.kind == "drift":
        return sched.series(t, t + 1)[0]
    if not sched.is_on(t):
        return np.zeros(m)
    k = sched.cycle_index(t)
    if sched.kind == "step_cycle":
        prm: StepCycleParams = sched.params
        draw = k if prm.resample_each_cycle else 0
        rng = np.random.default_rng([sched.seed, draw])
        lo, hi = prm.magnitude_range
        return rng.uniform(lo, hi, size=m)
    sign = 1.0 if k % 2 == 0 else -1.0
    return sign * np.asarray(sched.params.magnitude, dtype=float)


def bound_P(sched: PerturbationSchedule) -> float:
    """Bound on the Euclidean norm of ``p(t)`` over all ``t``."""
    m = sched.action_dim
    if sched.kind == "none":
        return 0.0
    if sched.kind == "step_cycle":
        lo, hi = sched.params.magnitude_range
        return math.sqrt(m) * max(abs(lo), abs(hi))
    if sched.kind == "alternating":
        return float(np.linalg.norm(sched.params.magnitude))
    prm: DriftParams = sched.params
    return math.sqrt(m) * (prm.amplitude + prm.envelope)


def drift_step_bound(sched: PerturbationSchedule) -> float:
    """Per-component bound on ``|p(t+1) - p(t)|`` for the drift kind."""
    prm: DriftParams = sched.params
    sine = 2.0 * np.pi * prm.amplitude / prm.period
    return sine + 8.0 * prm.filter_coef * prm.noise_std
