"""Run every shipped preset and print a status table.

Usage: python scripts/run_presets.py [--out runs] [--only NAME ...]

The borderline sphere audit is expected to fail (exit code 2); any other
non-zero status makes this script exit with 1.
"""

import argparse
import sys
from pathlib import Path

from edgeflow.cli import run_scenario
from edgeflow.config import load_preset, parse_config, preset_names

EXPECTED = {"audit_sphere_r1": 2}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--only", nargs="*", choices=preset_names())
    args = ap.parse_args()
    bad = 0
    for name in args.only or preset_names():
        cfg = parse_config(load_preset(name))
        cfg.output_dir = args.out / name
        man = run_scenario(cfg)
        want = EXPECTED.get(name, 0)
        flag = "ok" if man.exit_code == want else "UNEXPECTED"
        bad += man.exit_code != want
        print(f"{name:30s} exit {man.exit_code} (expected {want}) {flag:10s} {man.wall_time_s:6.1f} s")
        if man.failure_reason and man.exit_code != want:
            print(f"    {man.failure_reason}")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
