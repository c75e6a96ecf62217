"""Command-line entry point: ``blastlab <subcommand> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from blastlab.config import OUTPUT_ROOT_ENV, load_config
from blastlab.errors import BlastLabError
from blastlab.pipeline import STAGES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blastlab", description="Backdoor attack laboratory for cooperative MARL.")
    p.add_argument("command", choices=sorted(STAGES), help="pipeline stage to run")
    p.add_argument("--config", "-c", help="JSON experiment config (defaults apply for missing fields)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set hack.lam=0.25 (repeatable)")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.epilog = f"Relative output directories are resolved under ${OUTPUT_ROOT_ENV} when set."
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.out is not None:
            overrides.append(f"output_dir={json.dumps(args.out)}")
        cfg = load_config(args.config, overrides, args.seed)
        root = cfg.output_dir()
        doc = STAGES[args.command](cfg, root)
    except BlastLabError as exc:
        print(f"blastlab {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps({"command": args.command, "output": str(root),
                      "config_hash": doc.get("provenance", doc).get("config_hash", cfg.hash())},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
