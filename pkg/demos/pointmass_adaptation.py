"""Walk through one point-mass adaptation run.

Trains the forward model on nominal data, then runs the same step-cycle
schedule with and without the reflex controller and prints the mean
control error of every ON and OFF segment.

    python3 demos/pointmass_adaptation.py
"""
import numpy as np

from rwm.harness.config import config_from_dict
from rwm.harness.runner import run_experiment
from rwm.harness.stats import segment_means


def main():
    cfg = config_from_dict({
        "name": "demo",
        "seeds": [0],
        "cycles": 4,
        "world_model": {"transitions": 6000, "epochs": 40},
        "perturbation": {"kind": "step_cycle", "on_steps": 1000, "off_steps": 1000},
    })
    result = run_experiment(cfg, ("no_adaptation", "rwm"), write=False)
    ph = result.runs[0].phase1
    print(f"forward model validation MSE: {ph.history[-1]['val_mse']:.2e}")

    pc = cfg.perturbation
    rows = {}
    for mode in result.modes:
        run = result.run(0, mode)
        rows[mode] = segment_means(run.trace.control_error, pc.on_steps, pc.off_steps)
    p = result.run(0, "rwm").trace.p[::pc.on_steps + pc.off_steps]
    print(f"{'cycle':>5}  {'p':>16}  {'ON none':>9}  {'ON rwm':>9}  {'OFF none':>9}  {'OFF rwm':>9}")
    for k in range(cfg.cycles):
        none_on, none_off = rows["no_adaptation"][0][k], rows["no_adaptation"][1][k]
        rwm_on, rwm_off = rows["rwm"][0][k], rows["rwm"][1][k]
        print(f"{k:>5}  {np.array2string(p[k], precision=2):>16}  {none_on:9.2e}  "
              f"{rwm_on:9.2e}  {none_off:9.2e}  {rwm_off:9.2e}")


if __name__ == "__main__":
    main()
