"""Produce the full-scale runs read by the end-to-end acceptance criteria.

For every seed: train-clean, collect, mine-failures, train-blast, evaluate.
After all seeds, seed 0 additionally runs the ablation sweep, the report and both detectors.
Stages whose provenance file already exists are skipped, so the script can be
resumed after an interruption.

    python3 scripts/run_acceptance.py [--config configs/pursuit_vdn.json] [--out artifacts/acceptance]
"""

import argparse
import sys
import time
from pathlib import Path

from blastlab.cli import main

STAGE_DIRS = {"train-clean": "clean", "collect": "collect", "mine-failures": "mine", "train-blast": "blast",
              "evaluate": "evaluate", "sweep": "sweep", "report": "report"}
PER_SEED = ["train-clean", "collect", "mine-failures", "train-blast", "evaluate"]
SEED0_EXTRA = ["sweep", "report", "detect-ac", "detect-ss"]


def run_stage(cmd, config, out, seed):
    marker = out / STAGE_DIRS.get(cmd, "defense") / "provenance.json"
    if cmd in STAGE_DIRS and marker.exists():
        print(f"seed {seed} {cmd}: done already", flush=True)
        return
    if cmd.startswith("detect") and (out / "defense" / f"{cmd[-2:]}.json").exists():
        print(f"seed {seed} {cmd}: done already", flush=True)
        return
    t0 = time.time()
    code = main([cmd, "--config", str(config), "--out", str(out), "--seed", str(seed), "-v"])
    print(f"seed {seed} {cmd}: exit {code} in {time.time() - t0:.0f}s", flush=True)
    if code != 0:
        sys.exit(code)


def cli(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/pursuit_vdn.json")
    p.add_argument("--out", default="artifacts/acceptance")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = p.parse_args(argv)
    # every seed's main run first, then the seed-0 extras
    for seed in args.seeds:
        for cmd in PER_SEED:
            run_stage(cmd, args.config, Path(args.out) / f"seed{seed}", seed)
    if 0 in args.seeds:
        for cmd in SEED0_EXTRA:
            run_stage(cmd, args.config, Path(args.out) / "seed0", 0)


if __name__ == "__main__":
    cli()
