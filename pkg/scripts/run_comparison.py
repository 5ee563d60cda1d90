#!/usr/bin/env python3
"""Run the bundled scenario in every control mode and tabulate the results.

Writes records_<mode>.csv and metrics_<mode>.json for each mode into the
output directory, then prints the side-by-side comparison table.  The
overvoltage companion scenario can be swapped in with --scenario.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gridbatch import data_path
from gridbatch.cli import main as cli_main
from gridbatch.scenario import MODES


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--scenario", default=str(data_path("scenario_reference.json")), help="scenario JSON"
    )
    parser.add_argument("--seed", type=int, default=None, help="override scenario seed")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument(
        "--modes", nargs="+", default=["no_control", "tap_only", "gpu_only"], choices=MODES
    )
    args = parser.parse_args()

    metric_files = []
    for mode in args.modes:
        print(f"== {mode}", flush=True)
        run_args = ["run", "--scenario", args.scenario, "--mode", mode, "--out", args.out]
        if args.seed is not None:
            run_args += ["--seed", str(args.seed)]
        code = cli_main(run_args)
        if code != 0:
            return code
        metric_files.append(str(Path(args.out) / f"metrics_{mode}.json"))

    print()
    return cli_main(["report", *metric_files])


if __name__ == "__main__":
    sys.exit(main())
