"""Aftereffects: the trajectory bias right after a sustained perturbation ends.

For every ON-to-OFF transition the first ``window`` OFF steps are compared
with a replay of the base policy from the same start without perturbation.
The deviation is projected onto the deviation the previous perturbation
itself causes (the base policy replayed under ``p_prev``).  A negative
projection is an overshoot opposite to the perturbation's push.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import envs
from .config import ConfigError, ExperimentConfig
from .io import atomic_write_json
from .runner import run_experiment


def simulate_base(policy, goal, start, p, steps: int) -> np.ndarray:
    """Positions of the base policy alone under a constant perturbation ``p``."""
    state = envs.pointmass_reset(goal, start)
    out = np.empty((steps, 2))
    for k in range(steps):
        a = envs.apply_perturbation(policy(state.vector()), p)
        state = envs.pointmass_step(state, a).next_state
        out[k] = state.position
    return out


def transition_deviations(run, cfg: ExperimentConfig, window: int = 50) -> np.ndarray:
    """Signed projection for every ON-to-OFF transition of one run."""
    pc = cfg.perturbation
    tr = run.trace
    cycle = pc.on_steps + pc.off_steps
    out = []
    for t_off in range(pc.on_steps, len(tr) - window + 1, cycle):
        if tr.episode_step[t_off] != 0:
            raise ConfigError("ON/OFF boundaries must coincide with episode resets")
        p_prev = tr.p[t_off - 1]
        z = tr.z[t_off]
        start, goal = z[0:2], z[4:6]
        policy = run.phase1.policy
        nominal = simulate_base(policy, goal, start, np.zeros(2), window)
        pushed = simulate_base(policy, goal, start, p_prev, window) - nominal
        dev = tr.z_next[t_off:t_off + window, 0:2] - nominal
        scale = np.sum(np.linalg.norm(pushed, axis=1))
        out.append(float(np.sum(dev * pushed) / scale) if scale > 0 else 0.0)
    return np.array(out)


def aftereffect_experiment(cfg: ExperimentConfig, modes=("no_adaptation", "rwm"),
                           window: int = 50, dead_zone: float = 1e-6,
                           out_dir=None) -> dict:
    """Run the modes and report the sign of the post-removal deviation."""
    pc = cfg.perturbation
    if cfg.env.kind != "pointmass":
        raise ConfigError("the aftereffect experiment needs the point-mass env")
    if pc.kind not in ("alternating", "step_cycle"):
        raise ConfigError("the aftereffect experiment needs a cyclic perturbation")
    ep = cfg.env.episode_length
    if not ep or pc.on_steps % ep or pc.off_steps % ep:
        raise ConfigError("on_steps and off_steps must be multiples of env.episode_length")
    if pc.off_steps < window:
        raise ConfigError("off_steps must cover the measurement window")
    result = run_experiment(cfg, modes, write=False)
    report = {"window": window, "dead_zone": dead_zone, "modes": {}}
    for mode in modes:
        proj = np.concatenate([transition_deviations(result.run(s, mode), cfg, window)
                               for s in cfg.seeds])
        signs = np.where(np.abs(proj) < dead_zone, 0.0, np.sign(proj))
        report["modes"][mode] = {
            "transitions": int(proj.size),
            "fraction_opposite": float(np.mean(signs < 0)) if proj.size else float("nan"),
            "mean_sign": float(np.mean(signs)) if proj.size else float("nan"),
            "mean_projection": float(np.mean(proj)) if proj.size else float("nan"),
            "projections": proj.tolist(),
        }
    if out_dir is not None:
        atomic_write_json(Path(out_dir) / "aftereffect.json", report)
    return report
