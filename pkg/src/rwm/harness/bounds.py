"""Recompute the bounds report of an existing run directory."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..worldmodel import ReplayBuffer, load_model
from .config import load_config
from .io import atomic_write_json
from .runner import compute_bounds


def bounds_from_run_dir(run_dir, write: bool = True) -> dict:
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.yaml")
    runs = []
    for seed in cfg.seeds:
        d = run_dir / "checkpoints" / f"seed_{seed}"
        if not d.is_dir():
            raise FileNotFoundError(f"missing checkpoint directory {d}")
        model = load_model(d / "forward_model.json")
        buf = ReplayBuffer.from_csv(d / "buffer.csv") if (d / "buffer.csv").exists() else None
        for trace_file in sorted(d.glob("trace_*.npz")):
            mode = trace_file.stem[len("trace_"):]
            with np.load(trace_file) as tr:
                runs.append(compute_bounds(cfg, seed, mode, model, buf, tr["z"], tr["a0"],
                                           tr["error"]))
    if not runs:
        raise FileNotFoundError(f"no traces found under {run_dir / 'checkpoints'}")
    report = {"version": 1, "runs": runs}
    if write:
        atomic_write_json(run_dir / "bounds.json", report)
    return report
