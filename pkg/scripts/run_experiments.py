#!/usr/bin/env python3
"""Reproduce the full experiment family: plan, validation, uplink and
downlink sweeps. Results land in ./results (or --out).

Equivalent to running the CLI subcommands one after another; mostly useful
as a one-shot driver and as executable documentation.
"""

import argparse
import sys
from pathlib import Path

from psdalign.cli import main as cli_main


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="YAML config (default: built-in scenario)")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--trials", type=int, default=None, help="override trial count via a temp config")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = ["--config", args.config] if args.config else []
    if args.trials is not None:
        import yaml

        from psdalign.config import config_to_mapping, load_config
        from psdalign.simkit import ExperimentConfig

        cfg = load_config(args.config) if args.config else ExperimentConfig()
        doc = config_to_mapping(cfg)
        doc["run"]["trials"] = args.trials
        tmp = out / "config-override.yaml"
        tmp.write_text(yaml.safe_dump(doc, sort_keys=False))
        base = ["--config", str(tmp)]

    for command in ("validate", "plan", "sweep-mse", "sweep-dl"):
        print(f"== psdalign {command}")
        code = cli_main([command, *base, "--out", str(out / command.replace("-", "_"))])
        if code != 0:
            print(f"{command} failed with exit code {code}", file=sys.stderr)
            return code
    print(f"all outputs under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(run())
