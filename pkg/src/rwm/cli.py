"""Command line entry point ``rwm``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .loop import MODES


def _summary(result) -> str:
    import numpy as np

    lines = []
    for r in result.runs:
        tr = r.trace
        lines.append(f"seed {r.seed:>3} {r.mode:<16} mean reward {np.mean(tr.reward):.5f}  "
                     f"mean control error {np.mean(tr.control_error):.3e}  "
                     f"reflex updates {r.reflex_updates}")
    return "\n".join(lines)


def _modes(text: str) -> tuple:
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {', '.join(MODES)}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwm", description="Reflexive world model experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("run", help="run the configured mode for every seed")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides config and RWM_OUTPUT_DIR)")
    s = sub.add_parser("compare", help="run several modes on shared phase-1 models")
    s.add_argument("config")
    s.add_argument("--modes", type=_modes, default=("no_adaptation", "rwm"))
    s.add_argument("--out")
    s = sub.add_parser("bounds", help="recompute bounds.json for a run directory")
    s.add_argument("run_dir")
    s = sub.add_parser("aftereffect", help="measure post-removal trajectory bias")
    s.add_argument("config")
    s.add_argument("--modes", type=_modes, default=("no_adaptation", "rwm"))
    s.add_argument("--window", type=int, default=50)
    s.add_argument("--out")
    s = sub.add_parser("plot", help="re-render the SVG plots of a run directory")
    s.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .harness.config import load_config

    try:
        if args.command in ("run", "compare"):
            from .harness.runner import run_experiment

            cfg = load_config(args.config)
            out = args.out or cfg.resolved_output_dir()
            modes = (cfg.mode,) if args.command == "run" else args.modes
            result = run_experiment(cfg, modes, write=True, out_dir=out)
            print(_summary(result))
            print(f"outputs written to {out}")
        elif args.command == "bounds":
            from .harness.bounds import bounds_from_run_dir

            print(json.dumps(bounds_from_run_dir(args.run_dir), indent=2, sort_keys=True))
        elif args.command == "aftereffect":
            from .harness.aftereffect import aftereffect_experiment

            cfg = load_config(args.config)
            out = args.out or cfg.resolved_output_dir()
            rep = aftereffect_experiment(cfg, args.modes, args.window, out_dir=out)
            for mode, r in rep["modes"].items():
                print(f"{mode:<16} transitions {r['transitions']:>3}  "
                      f"opposite {r['fraction_opposite']:.2f}  mean sign {r['mean_sign']:+.2f}")
            print(f"report written to {out}/aftereffect.json")
        elif args.command == "plot":
            from .harness.outputs import plot_run_dir

            for path in plot_run_dir(args.run_dir):
                print(path)
    except (OSError, ValueError, FloatingPointError, KeyError) as exc:
        print(f"rwm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
