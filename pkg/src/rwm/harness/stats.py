"""Per-cycle normalization against the No-Adaptation run and bootstrap CIs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REFERENCE_MODE = "no_adaptation"


def bootstrap_median_ci(samples, n_resamples: int = 1000, level: float = 0.95,
                        seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the median."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot bootstrap an empty sample")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    meds = np.empty(n_resamples)
    chunk = max(1, 2_000_000 // x.size)
    for s in range(0, n_resamples, chunk):
        k = min(chunk, n_resamples - s)
        meds[s:s + k] = np.median(x[rng.integers(0, x.size, size=(k, x.size))], axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(meds, [tail, 100.0 - tail])
    return float(lo), float(hi)


def segment_means(values, on_steps: int, off_steps: int, reducer=np.mean):
    """Reduce a cyclic series to per-cycle ``(on, off)`` arrays.

    Only complete cycles are used.
    """
    v = np.asarray(values, dtype=float)
    n = on_steps + off_steps
    cycles = v.size // n
    if cycles == 0:
        raise ValueError("series shorter than one cycle")
    blocks = v[:cycles * n].reshape(cycles, n)
    return reducer(blocks[:, :on_steps], axis=1), reducer(blocks[:, on_steps:], axis=1)


@dataclass(eq=False)
class CycleStats:
    """Segment statistics for one metric, indexed ``[mode][seed, cycle]``."""

    metric: str
    modes: tuple
    seeds: tuple
    on_mean: dict
    off_mean: dict
    on_median: dict
    off_median: dict
    on_norm: dict
    off_norm: dict
    degenerate: np.ndarray

    def pooled(self, mode: str, segment: str = "on", normalized: bool = True) -> np.ndarray:
        table = {("on", True): self.on_norm, ("off", True): self.off_norm,
                 ("on", False): self.on_mean, ("off", False): self.off_mean}[segment, normalized]
        return np.asarray(table[mode]).ravel()

    def summary(self, n_resamples: int = 1000, level: float = 0.95, seed: int = 0) -> dict:
        """Median and bootstrap CI of the normalized segment means, pooled over
        cycles and seeds, per mode and segment."""
        out = {}
        for mode in self.modes:
            out[mode] = {}
            for seg in ("on", "off"):
                x = self.pooled(mode, seg)
                lo, hi = bootstrap_median_ci(x, n_resamples, level, seed)
                out[mode][seg] = {"median": float(np.median(x)), "ci_low": lo, "ci_high": hi,
                                  "n": int(x.size)}
        return out

    def to_dict(self, n_resamples: int = 1000, level: float = 0.95, seed: int = 0) -> dict:
        per = lambda table: {m: np.asarray(table[m]).tolist() for m in self.modes}  # noqa: E731
        return {
            "metric": self.metric,
            "modes": list(self.modes),
            "seeds": list(self.seeds),
            "reference_mode": REFERENCE_MODE,
            "on_mean": per(self.on_mean),
            "off_mean": per(self.off_mean),
            "on_median": per(self.on_median),
            "off_median": per(self.off_median),
            "on_normalized": per(self.on_norm),
            "off_normalized": per(self.off_norm),
            "degenerate": self.degenerate.tolist(),
            "summary": self.summary(n_resamples, level, seed),
            "bootstrap": {"n_resamples": n_resamples, "level": level, "seed": seed},
        }


def normalize_cycles(series: dict, on_steps: int, off_steps: int, metric: str = "metric",
                     seeds=None) -> CycleStats:
    """Normalize every mode's segment means by the reference run's range.

    ``series[mode]`` is a ``(seeds, steps)`` array; row ``i`` of every mode
    must come from the same seed and schedule.  Within each cycle,
    ``m`` and ``M`` are the min and max of the No-Adaptation ON and OFF
    segment means and every value maps to ``(v - m) / (M - m)``.  Cycles
    with ``M == m`` map to 0 and are flagged in ``degenerate``.
    """
    if REFERENCE_MODE not in series:
        raise ValueError(f"normalization needs a {REFERENCE_MODE} run")
    arrays = {m: np.atleast_2d(np.asarray(v, dtype=float)) for m, v in series.items()}
    shape = arrays[REFERENCE_MODE].shape
    for m, a in arrays.items():
        if a.shape != shape:
            raise ValueError(f"mode {m} has shape {a.shape}, reference has {shape}")
    n_seeds = shape[0]
    seeds = tuple(range(n_seeds)) if seeds is None else tuple(seeds)
    if len(seeds) != n_seeds:
        raise ValueError("one seed label per row is required")
    on_mean, off_mean, on_med, off_med = {}, {}, {}, {}
    for m, a in arrays.items():
        pairs = [segment_means(row, on_steps, off_steps) for row in a]
        on_mean[m] = np.array([p[0] for p in pairs])
        off_mean[m] = np.array([p[1] for p in pairs])
        meds = [segment_means(row, on_steps, off_steps, np.median) for row in a]
        on_med[m] = np.array([p[0] for p in meds])
        off_med[m] = np.array([p[1] for p in meds])
    lo = np.minimum(on_mean[REFERENCE_MODE], off_mean[REFERENCE_MODE])
    hi = np.maximum(on_mean[REFERENCE_MODE], off_mean[REFERENCE_MODE])
    span = hi - lo
    degenerate = span == 0.0
    safe = np.where(degenerate, 1.0, span)

    def norm(v):
        return np.where(degenerate, 0.0, (v - lo) / safe)

    return CycleStats(metric, tuple(arrays), seeds, on_mean, off_mean, on_med, off_med,
                      {m: norm(v) for m, v in on_mean.items()},
                      {m: norm(v) for m, v in off_mean.items()}, degenerate)


def windowed_means(values, window: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    n = v.size // window
    return v[:n * window].reshape(n, window).mean(axis=1)
