"""Writing run directories: metrics, cycle statistics, bounds, checkpoints, plots.

Layout of a run directory::

    config.yaml           resolved configuration
    metrics.csv           one row per environment step, every (seed, mode)
    reflex_updates.csv    per-step update diagnostics of rwm runs
    cycles.json           per-cycle segment statistics (cyclic schedules)
    bounds.json           estimated constants and bound checks per run
    checkpoints/seed_<s>/ forward_model.json, base_policy.json, reflex_rwm.json,
                          buffer.csv, trace_<mode>.npz
    plots/                timeseries.svg, cycles.svg
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..diffnet import save_network
from ..worldmodel import save_model
from .config import dump_config
from .io import atomic_write_json, atomic_write_text
from .metrics import MetricsLog
from .stats import REFERENCE_MODE, normalize_cycles, segment_means

CYCLE_METRICS = ("reward", "control_error")


def cycle_report(cfg, series: dict, modes) -> dict | None:
    """``cycles.json`` content, or None when the schedule has no cycles."""
    pc = cfg.perturbation
    if pc.kind not in ("step_cycle", "alternating"):
        return None
    out = {"on_steps": pc.on_steps, "off_steps": pc.off_steps, "seeds": list(cfg.seeds),
           "modes": list(modes), "metrics": {}}
    for metric in CYCLE_METRICS:
        data = series[metric]
        if REFERENCE_MODE in data:
            out["metrics"][metric] = normalize_cycles(data, pc.on_steps, pc.off_steps, metric,
                                                      cfg.seeds).to_dict()
        else:
            per = {}
            for m, arr in data.items():
                pairs = [segment_means(row, pc.on_steps, pc.off_steps) for row in arr]
                per[m] = {"on_mean": [p[0].tolist() for p in pairs],
                          "off_mean": [p[1].tolist() for p in pairs]}
            out["metrics"][metric] = {"metric": metric, "normalized": None, "raw": per}
    return out


def updates_csv_text(runs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "seed", "mode", "control_error", "grad_norm", "ac_norm", "inversion"])
    for r in runs:
        if r.mode != "rwm":
            continue
        tr = r.trace
        acn = np.linalg.norm(tr.ac, axis=1)
        for t in range(len(tr)):
            w.writerow([t, r.seed, r.mode, repr(float(tr.control_error[t])),
                        repr(float(tr.grad_norm[t])), repr(float(acn[t])),
                        repr(float(tr.inversion[t]))])
    return buf.getvalue()


def write_checkpoints(result, out: Path) -> None:
    done = set()
    for r in result.runs:
        d = out / "checkpoints" / f"seed_{r.seed}"
        d.mkdir(parents=True, exist_ok=True)
        if r.seed not in done:
            done.add(r.seed)
            save_model(r.phase1.model, d / "forward_model.json")
            if r.phase1.policy.network is not None:
                save_network(r.phase1.policy.network, d / "base_policy.json")
            if r.phase1.buffer is not None:
                r.phase1.buffer.to_csv(d / "buffer.csv")
        if r.controller is not None:
            save_network(r.controller.network, d / f"reflex_{r.mode}.json")
        tr = r.trace
        np.savez_compressed(d / f"trace_{r.mode}.npz", z=tr.z, a0=tr.a0, ac=tr.ac,
                            error=tr.error, p=tr.p)


def emit_outputs(result, out_dir, plots: bool = True) -> Path:
    from .runner import run_bounds

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    atomic_write_text(out / "config.yaml", dump_config(cfg))
    result.metrics().to_csv(out / "metrics.csv")
    if "rwm" in result.modes:
        atomic_write_text(out / "reflex_updates.csv", updates_csv_text(result.runs))
    cycles = cycle_report(cfg, {m: result.series(m) for m in CYCLE_METRICS}, result.modes)
    if cycles is not None:
        atomic_write_json(out / "cycles.json", cycles)
    atomic_write_json(out / "bounds.json", {"version": 1, "runs": run_bounds(result)})
    write_checkpoints(result, out)
    if plots:
        plot_run(out, result.metrics(), cfg, cycles)
    return out


# -- plots -----------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("svg")
    matplotlib.rcParams["svg.hashsalt"] = "rwm"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    atomic_write_text(path, buf.getvalue())


def plot_timeseries(metrics: MetricsLog, cfg, path: Path, window: int = 200) -> None:
    """Episode-averaged reward and control error for the first seed, with ON
    segments shaded."""
    plt = _pyplot()
    seed = int(metrics.seed[0]) if len(metrics) else 0
    fig, axes = plt.subplots(2, 1, figsize=(9, 5.5), sharex=True)
    modes = list(dict.fromkeys(metrics.mode.tolist()))
    for mode in modes:
        sub = metrics.select(seed, mode)
        n = len(sub) // window
        if n == 0:
            continue
        x = (np.arange(n) + 0.5) * window
        for ax, col in zip(axes, ("reward", "control_error")):
            y = getattr(sub, col)[:n * window].reshape(n, window).mean(axis=1)
            ax.plot(x, y, label=mode, lw=1.2)
    pc = cfg.perturbation
    if pc.kind in ("step_cycle", "alternating") and len(metrics):
        T = int(metrics.t.max()) + 1
        for start in range(0, T, pc.on_steps + pc.off_steps):
            for ax in axes:
                ax.axvspan(start, min(start + pc.on_steps, T), color="0.9", lw=0)
    axes[0].set_ylabel("reward (episode mean)")
    axes[1].set_ylabel("control error")
    axes[1].set_yscale("log")
    axes[1].set_xlabel("step")
    axes[0].legend(loc="lower right", fontsize=8)
    axes[0].set_title(f"{cfg.name}: seed {seed}, shaded = perturbation ON")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_cycles(cycles: dict, path: Path) -> None:
    """Per-cycle normalized ON-segment medians across seeds with CI bands."""
    from .stats import bootstrap_median_ci

    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, metric in zip(axes, CYCLE_METRICS):
        rec = cycles["metrics"].get(metric, {})
        table = rec.get("on_normalized")
        if table is None:
            ax.set_title(f"{metric}: no reference run")
            continue
        for mode, rows in table.items():
            arr = np.asarray(rows, float)  # (seeds, cycles)
            med = np.median(arr, axis=0)
            ci = np.array([bootstrap_median_ci(arr[:, c], 1000, 0.95, 0)
                           for c in range(arr.shape[1])])
            x = np.arange(1, arr.shape[1] + 1)
            ax.plot(x, med, marker="o", ms=3, label=mode)
            ax.fill_between(x, ci[:, 0], ci[:, 1], alpha=0.25)
        ax.set_xlabel("cycle")
        ax.set_ylabel("normalized ON-segment mean")
        ax.set_title(metric)
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_run(out: Path, metrics: MetricsLog, cfg, cycles: dict | None) -> None:
    plot_timeseries(metrics, cfg, out / "plots" / "timeseries.svg")
    if cycles is not None:
        plot_cycles(cycles, out / "plots" / "cycles.svg")


def plot_run_dir(run_dir) -> list[Path]:
    """Re-render the plots of an existing run directory."""
    from .config import load_config

    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.yaml")
    metrics = MetricsLog.from_csv(run_dir / "metrics.csv")
    cyc_path = run_dir / "cycles.json"
    cycles = json.loads(cyc_path.read_text()) if cyc_path.exists() else None
    plot_run(run_dir, metrics, cfg, cycles)
    return sorted((run_dir / "plots").glob("*.svg"))
