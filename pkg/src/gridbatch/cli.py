"""Command-line front end: trace fitting, one-shot power flow, scenario runs, reports.

Subcommands:
    fit        calibrate per-model curves from benchmark traces
    powerflow  solve the feeder once for a given data-center draw
    run        run a closed-loop scenario and write records + metrics
    report     print an aligned comparison table from metrics files

Exit codes: 0 success, 1 bad input (parse, schema, config, fit failure,
unreadable file), 2 power-flow non-convergence.  Log verbosity comes from
the GRIDBATCH_LOG environment variable (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bundle import fit_bundle, save_bundle
from .errors import ConfigError, GridBatchError, NoConvergence, ParseError, SchemaError
from .feeder import load_feeder, solve_power_flow
from .scenario import (
    MODES,
    load_scenario,
    run_scenario,
    write_metrics,
    write_records_csv,
)
from .traces import load_traces

__all__ = ["main"]

ENV_LOG = "GRIDBATCH_LOG"

_METRIC_COLUMNS = ("violation_time", "worst_vmin", "worst_vmax", "integral_violation")

logger = logging.getLogger(__name__)


def _configure_logging() -> None:
    name = os.environ.get(ENV_LOG, "warning").strip().upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _cmd_fit(args: argparse.Namespace) -> int:
    traces = load_traces(args.traces)
    bundle = fit_bundle(traces, seed=0)
    save_bundle(bundle, args.out)
    logger.info("wrote bundle with %d models to %s", len(bundle), args.out)
    print(f"{'model':<16} {'metric':<12} rmse")
    for name in sorted(bundle):
        for metric in ("power", "latency", "throughput"):
            print(f"{name:<16} {metric:<12} {bundle[name].rmse[metric]:.6e}")
    return 0


def _cmd_powerflow(args: argparse.Namespace) -> int:
    model = load_feeder(args.feeder)
    parts = args.dc_power.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--dc-power needs three comma-separated watts, got {args.dc_power!r}")
    try:
        dc_power = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"--dc-power: {exc}") from None
    state = solve_power_flow(model, dc_power, pf=args.pf)
    m = model.n_buses
    print(f"tap {state.tap_position}")
    print(f"{'bus':<8} {'v_a':>10} {'v_b':>10} {'v_c':>10}")
    for i, bus in enumerate(model.buses):
        va, vb, vc = (state.v[ph * m + i] for ph in range(3))
        print(f"{bus.id:<8} {va:>10.6f} {vb:>10.6f} {vc:>10.6f}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario, mode=args.mode, seed=args.seed)
    records, metrics = run_scenario(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = tuple(d.name for d in cfg.deployments)
    records_path = out_dir / f"records_{cfg.mode}.csv"
    metrics_path = out_dir / f"metrics_{cfg.mode}.json"
    write_records_csv(records_path, records, cfg.feeder, names)
    write_metrics(metrics_path, metrics, mode=cfg.mode, seed=cfg.seed)
    logger.info("wrote %s and %s", records_path, metrics_path)
    for key, value in metrics.to_dict().items():
        print(f"{key} {value:.6f}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for path in args.files:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        try:
            values = [float(payload[k]) for k in _METRIC_COLUMNS]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad or missing metric field: {exc}") from None
        rows.append([str(payload.get("mode", Path(path).stem)), *values])
    width = max(len("case"), *(len(r[0]) for r in rows))
    header = f"{'case':<{width}}"
    for col in _METRIC_COLUMNS:
        header += f" {col:>18}"
    print(header)
    for row in rows:
        line = f"{row[0]:<{width}}"
        for value in row[1:]:
            line += f" {value:>18.6f}"
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridbatch",
        description="Co-simulation of GPU inference clusters on a distribution feeder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit per-model curves from benchmark traces")
    p_fit.add_argument("--traces", required=True, help="trace CSV path")
    p_fit.add_argument("--out", required=True, help="output bundle JSON path")
    p_fit.set_defaults(func=_cmd_fit)

    p_pf = sub.add_parser("powerflow", help="one-shot feeder solve, voltages in pu")
    p_pf.add_argument("--feeder", required=True, help="feeder JSON path")
    p_pf.add_argument(
        "--dc-power", required=True, help="data-center draw per phase, watts: WA,WB,WC"
    )
    p_pf.add_argument("--pf", type=float, default=0.95, help="power factor (default 0.95)")
    p_pf.set_defaults(func=_cmd_powerflow)

    p_run = sub.add_parser("run", help="run a scenario and write records CSV + metrics JSON")
    p_run.add_argument("--scenario", required=True, help="scenario JSON path")
    p_run.add_argument("--mode", choices=MODES, default=None, help="override scenario mode")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="tabulate metrics files side by side")
    p_rep.add_argument("files", nargs="+", help="metrics JSON paths")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoConvergence as exc:
        print(f"error: power flow did not converge: {exc}", file=sys.stderr)
        return 2
    except GridBatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
