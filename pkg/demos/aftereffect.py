"""Aftereffect after a sustained perturbation is removed.

Runs the shipped alternating-perturbation config and prints, per mode, how
often the first steps after removal overshoot against the old push.

    python3 demos/aftereffect.py
"""
from pathlib import Path

from rwm.harness.aftereffect import aftereffect_experiment
from rwm.harness.config import load_config

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "aftereffect.yaml"


def main():
    rep = aftereffect_experiment(load_config(CONFIG))
    for mode, r in rep["modes"].items():
        print(f"{mode:<14} opposite in {r['fraction_opposite']:.0%} of {r['transitions']} "
              f"removals, mean projection {r['mean_projection']:+.3f}")


if __name__ == "__main__":
    main()
