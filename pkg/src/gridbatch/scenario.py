"""Closed-loop co-simulation of the GPU cluster, feeder and controller.

The plant (cluster + power flow) ticks at ``plant_dt``; the batch
controller acts every ``control_dt`` using the measurements of the last
plant tick; the tap regulator acts tick-by-tick in the modes that enable
it.  Each run emits one record per plant tick plus violation metrics
integrated over the horizon.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import data_path
from .bundle import load_bundle
from .cluster import (
    ClusterState,
    ModelDeployment,
    ReplicaRamp,
    TrainingOn,
    WorkloadEvent,
    advance_state,
    apply_event,
    make_cluster_state,
    step_cluster,
    training_power_at,
)
from .controller import (
    ControllerConfig,
    box_bounds,
    discretize,
    dual_update,
    gradient_terms,
    make_controller_state,
    primal_update,
    regime_label,
)
from .errors import ConfigError, EmptyStream, NoConvergence, ParseError, SchemaError, ValidationError
from .feeder import (
    FeederModel,
    GridState,
    _stack_magnitudes,
    estimate_sensitivity,
    load_feeder,
    solve_power_flow_complex,
    step_regulator,
)
from .perf_models import logistic_eval, normalize_to_unit_max
from .traces import ALLOWED_BATCH_SIZES

__all__ = [
    "MODES",
    "ScenarioConfig",
    "SimulationRecord",
    "ViolationMetrics",
    "load_scenario",
    "monitored_index",
    "run_scenario",
    "compute_metrics",
    "csv_header",
    "write_records_csv",
    "write_metrics",
]

MODES = ("no_control", "tap_only", "gpu_only", "gpu_plus_tap")


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully materialized closed-loop experiment description."""

    feeder: FeederModel
    deployments: tuple[ModelDeployment, ...]
    initial_batches: tuple[int, ...]
    events: tuple[WorkloadEvent, ...]
    base_load_per_phase: tuple[float, float, float]
    pf: float = 0.95
    horizon: float = 3600.0
    plant_dt: float = 0.1
    control_dt: float = 1.0
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    mode: str = "no_control"
    seed: int = 0
    sens_delta: Optional[float] = None
    sens_refresh_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon <= 0 or self.plant_dt <= 0:
            raise ConfigError("horizon and plant_dt must be positive")
        ratio = self.control_dt / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("control_dt must be an integer multiple of plant_dt")
        if len(self.initial_batches) != len(self.deployments):
            raise ConfigError("one initial batch per deployment required")
        for b, dep in zip(self.initial_batches, self.deployments):
            if b not in ALLOWED_BATCH_SIZES or not dep.batch_min <= b <= dep.batch_max:
                raise ConfigError(f"{dep.name}: initial batch {b} outside its range")
        if min(self.base_load_per_phase) < 0:
            raise ConfigError("base load must be >= 0 per phase")


@dataclass(frozen=True, eq=False)
class SimulationRecord:
    """One plant tick: voltages, power, actuation and controller summary."""

    t: float
    v: np.ndarray
    p_phase: tuple[float, float, float]
    batch: tuple[int, ...]
    mean_itl: tuple[float, ...]
    throughput: float
    tap: int
    lambda_under_max: float
    lambda_over_max: float
    mu_max: float
    regime: str


@dataclass(frozen=True)
class ViolationMetrics:
    """Voltage-band bookkeeping over a full run."""

    violation_time: float
    worst_vmin: float
    worst_vmax: float
    integral_violation: float

    def to_dict(self) -> dict:
        return {
            "violation_time": self.violation_time,
            "worst_vmin": self.worst_vmin,
            "worst_vmax": self.worst_vmax,
            "integral_violation": self.integral_violation,
        }


def _resolve(raw: str, base_dir: Path) -> Path:
    """A scenario-referenced file: absolute, scenario-relative or bundled."""
    p = Path(raw)
    if p.is_absolute() and p.exists():
        return p
    for cand in (base_dir / raw, data_path(raw)):
        if cand.exists():
            return cand
    raise ConfigError(f"cannot resolve referenced file {raw!r}")


def monitored_index(feeder: FeederModel, entry: Union[int, str]) -> int:
    """Index into the stacked voltage vector; accepts "bus_phase" strings.

    The stacked layout is all buses phase a, then b, then c, so
    "671_c" on a 13-bus feeder maps to 2*13 + index_of(671).
    """
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return int(entry)
    try:
        bus, ph = str(entry).rsplit("_", 1)
        bus_idx = [b.id for b in feeder.buses].index(bus)
        return "abc".index(ph.lower()) * len(feeder.buses) + bus_idx
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad monitored entry {entry!r}: {exc}") from exc


def _parse_event(entry: dict, lineno: str) -> WorkloadEvent:
    kind = entry.get("type")
    try:
        if kind == "training_on":
            return TrainingOn(
                power_per_phase=tuple(float(v) for v in entry["power_per_phase"]),
                t_start=float(entry["t_start"]),
                t_end=float(entry["t_end"]),
            )
        if kind == "replica_ramp":
            return ReplicaRamp(
                model=str(entry["model"]),
                from_count=int(entry["from_count"]),
                to_count=int(entry["to_count"]),
                t_start=float(entry["t_start"]),
                t_end=float(entry["t_end"]),
            )
    except KeyError as exc:
        raise SchemaError(f"{lineno}: event missing key {exc}") from exc
    raise SchemaError(f"{lineno}: unknown event type {kind!r}")


def load_scenario(
    path: Union[str, Path],
    mode: Optional[str] = None,
    seed: Optional[int] = None,
) -> ScenarioConfig:
    """Read a scenario JSON file; ``mode``/``seed`` override its values.

    Deployments reference fitted models by name in the parameter bundle;
    file references resolve against the scenario's directory first, then
    the packaged data directory.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for key in ("feeder_file", "bundle_file", "deployments"):
        if key not in payload:
            raise SchemaError(f"{path}: missing required key {key!r}")

    base_dir = path.parent
    feeder = load_feeder(_resolve(payload["feeder_file"], base_dir))
    bundle = load_bundle(_resolve(payload["bundle_file"], base_dir))

    deployments = []
    initial_batches = []
    for i, entry in enumerate(payload["deployments"]):
        where = f"{path}: deployments[{i}]"
        model_key = entry.get("model")
        if model_key not in bundle:
            raise ConfigError(f"{where}: model {model_key!r} not in bundle")
        fitted = bundle[model_key]
        try:
            deployments.append(
                ModelDeployment(
                    name=str(entry.get("name", model_key)),
                    replicas=int(entry["replicas"]),
                    gpus_per_replica=int(entry.get("gpus_per_replica", 1)),
                    latency_threshold=float(entry["latency_threshold"]),
                    phase_alloc=tuple(float(v) for v in entry["phase_alloc"]),
                    perf=fitted.perf,
                    itl_mixtures=fitted.itl_mixtures,
                    batch_min=int(entry.get("batch_min", 8)),
                    batch_max=int(entry.get("batch_max", 512)),
                )
            )
            initial_batches.append(int(entry.get("initial_batch", entry.get("batch_max", 512))))
        except KeyError as exc:
            raise SchemaError(f"{where}: missing key {exc}") from exc
    if len({d.name for d in deployments}) != len(deployments):
        raise ConfigError(f"{path}: deployment names must be unique")

    events = tuple(
        _parse_event(entry, f"{path}: events[{i}]")
        for i, entry in enumerate(payload.get("events", []))
    )
    ctl = dict(payload.get("controller", {}))
    if ctl.get("monitored") is not None:
        ctl["monitored"] = tuple(
            monitored_index(feeder, m) for m in ctl["monitored"]
        )
    controller = ControllerConfig(**ctl)
    return ScenarioConfig(
        feeder=feeder,
        deployments=tuple(deployments),
        initial_batches=tuple(initial_batches),
        events=events,
        base_load_per_phase=tuple(
            float(v) for v in payload.get("base_load_per_phase", (0.0, 0.0, 0.0))
        ),
        pf=float(payload.get("pf", 0.95)),
        horizon=float(payload.get("horizon", 3600.0)),
        plant_dt=float(payload.get("plant_dt", 0.1)),
        control_dt=float(payload.get("control_dt", 1.0)),
        controller=controller,
        mode=mode if mode is not None else payload.get("mode", "no_control"),
        seed=seed if seed is not None else int(payload.get("seed", 0)),
        sens_delta=(
            float(payload["sens_delta"]) if payload.get("sens_delta") is not None else None
        ),
        sens_refresh_fraction=float(payload.get("sens_refresh_fraction", 0.1)),
    )


def _fleet_phase_power(
    state: ClusterState, batch: dict[str, int], t: float
) -> tuple[float, float, float]:
    """Deterministic per-phase power at flat replica levels (no ITL draw)."""
    p = np.asarray(state.base_load_per_phase, dtype=float) + np.asarray(
        training_power_at(state.events, t), dtype=float
    )
    for dep in state.deployments:
        level = logistic_eval(dep.perf.power, math.log2(float(batch[dep.name])))
        p += np.asarray(dep.phase_alloc) * state.active_replicas.get(dep.name, 0) * level
    return (float(p[0]), float(p[1]), float(p[2]))


def run_scenario(cfg: ScenarioConfig) -> tuple[list[SimulationRecord], ViolationMetrics]:
    """Execute the closed loop and integrate the violation metrics.

    Records are emitted at every plant tick from t=0 through t=horizon
    inclusive.  Solver failures propagate with the simulation timestamp
    prepended.
    """
    model = cfg.feeder
    gpu_on = cfg.mode in ("gpu_only", "gpu_plus_tap")
    tap_on = cfg.mode in ("tap_only", "gpu_plus_tap")
    rng = np.random.default_rng(cfg.seed)
    cluster = make_cluster_state(cfg.deployments, cfg.base_load_per_phase, rng)
    for ev in cfg.events:
        cluster = apply_event(cluster, ev)

    names = [d.name for d in cfg.deployments]
    batch = dict(zip(names, cfg.initial_batches))
    tan_phi = math.tan(math.acos(cfg.pf))
    tap = model.regulator.initial_tap if model.regulator is not None else 0
    last_tap_time = -math.inf

    controller_state = None
    sens_anchor_power = 0.0
    sens_anchor_tap = tap
    if gpu_on:
        p0 = _fleet_phase_power(cluster, batch, 0.0)
        sens = estimate_sensitivity(model, p0, cfg.pf, delta=cfg.sens_delta, tap=tap)
        x0 = np.log2(np.asarray(cfg.initial_batches, dtype=float))
        controller_state = make_controller_state(x0, sens)
        sens_anchor_power = sum(p0)
    thresholds = np.array([d.latency_threshold for d in cfg.deployments])
    bounds = box_bounds(cfg.deployments)

    n_sub = round(cfg.control_dt / cfg.plant_dt)
    n_ticks = round(cfg.horizon / cfg.plant_dt)
    records: list[SimulationRecord] = []
    v_warm: Optional[np.ndarray] = None
    regime = ""

    for k in range(n_ticks + 1):
        t = k * cfg.plant_dt
        cluster = advance_state(cluster, t)

        if gpu_on and k > 0 and k % n_sub == 0:
            last = records[-1]
            controller_state = dual_update(
                controller_state,
                last.v,
                np.asarray(last.mean_itl),
                thresholds,
                cfg.controller,
            )
            # Controller view: live replica counts as objective weights,
            # throughput curves rescaled to unit max so models compare on
            # relative capacity.
            ctl_deps = tuple(
                replace(
                    d,
                    replicas=cluster.active_replicas.get(d.name, 0),
                    perf=replace(
                        d.perf, throughput=normalize_to_unit_max(d.perf.throughput)
                    ),
                )
                for d in cfg.deployments
            )
            terms = gradient_terms(controller_state, ctl_deps, cfg.controller)
            regime = regime_label(terms)
            controller_state = primal_update(
                controller_state, terms.total, bounds, cfg.controller
            )
            batch = dict(zip(names, (int(b) for b in discretize(controller_state.x))))

        out = step_cluster(cluster, batch, cfg.plant_dt, rng, normalize_throughput=False)
        dc_p = out.p_phase
        dc_q = tuple(p * tan_phi for p in dc_p)
        try:
            v_complex, _, _ = solve_power_flow_complex(model, dc_p, dc_q, tap=tap, v_init=v_warm)
        except NoConvergence as exc:
            raise NoConvergence(f"t={t:.1f}s: {exc}") from exc
        v_warm = v_complex
        v_stack = _stack_magnitudes(model, v_complex)

        if tap_on and model.regulator is not None:
            tap, last_tap_time = step_regulator(
                model, GridState(v=v_stack, tap_position=tap), t, last_tap_time
            )

        if gpu_on:
            total_power = sum(dc_p)
            moved = abs(total_power - sens_anchor_power) > cfg.sens_refresh_fraction * max(
                sens_anchor_power, 1.0
            )
            if moved or tap != sens_anchor_tap:
                sens = estimate_sensitivity(
                    model, dc_p, cfg.pf, delta=cfg.sens_delta, tap=tap
                )
                controller_state = replace(controller_state, sens=sens)
                sens_anchor_power = total_power
                sens_anchor_tap = tap

        records.append(
            SimulationRecord(
                t=t,
                v=v_stack,
                p_phase=dc_p,
                batch=tuple(batch[n] for n in names),
                mean_itl=tuple(out.mean_itl[n] for n in names),
                throughput=out.total_throughput,
                tap=tap,
                lambda_under_max=(
                    float(controller_state.lambda_under.max()) if gpu_on else 0.0
                ),
                lambda_over_max=(
                    float(controller_state.lambda_over.max()) if gpu_on else 0.0
                ),
                mu_max=float(controller_state.mu.max()) if gpu_on else 0.0,
                regime=regime,
            )
        )

    metrics = compute_metrics(
        records, v_lower=0.95, v_upper=1.05, monitored=cfg.controller.monitored
    )
    return records, metrics


def compute_metrics(
    records: Sequence[SimulationRecord],
    v_lower: float = 0.95,
    v_upper: float = 1.05,
    monitored: Optional[tuple[int, ...]] = None,
) -> ViolationMetrics:
    """Trapezoidal violation statistics over a record stream.

    ``violation_time`` integrates the 0/1 "any monitored bus-phase out of
    band" indicator; ``integral_violation`` integrates the summed out-of-
    band deviation.  The extrema cover all bus-phases regardless of the
    monitoring set.
    """
    if len(records) == 0:
        raise EmptyStream("no records to integrate")
    t = np.array([r.t for r in records])
    if np.any(np.diff(t) < 0):
        raise ValidationError("record times must be nondecreasing")
    v = np.stack([r.v for r in records])
    worst_vmin = float(v.min())
    worst_vmax = float(v.max())
    if monitored is not None:
        v = v[:, list(monitored)]
    under = np.maximum(0.0, v_lower - v)
    over = np.maximum(0.0, v - v_upper)
    if len(records) == 1:
        return ViolationMetrics(0.0, worst_vmin, worst_vmax, 0.0)
    violated = ((under > 0) | (over > 0)).any(axis=1).astype(float)
    return ViolationMetrics(
        violation_time=float(np.trapezoid(violated, t)),
        worst_vmin=worst_vmin,
        worst_vmax=worst_vmax,
        integral_violation=float(np.trapezoid((under + over).sum(axis=1), t)),
    )


def csv_header(feeder: FeederModel, model_names: Sequence[str]) -> list[str]:
    """Column names for the records CSV.

    Layout: t; one v_<bus>_<phase> column per stacked bus-phase entry
    (all buses phase a, then b, then c); p_a..p_c; one batch_<model> and
    itl_<model> column per deployment; throughput; tap; the three dual
    maxima; regime label.
    """
    cols = ["t"]
    for ph in "abc":
        cols += [f"v_{b.id}_{ph}" for b in feeder.buses]
    cols += ["p_a", "p_b", "p_c"]
    cols += [f"batch_{n}" for n in model_names]
    cols += [f"itl_{n}" for n in model_names]
    cols += ["throughput", "tap", "lambda_under_max", "lambda_over_max", "mu_max", "regime"]
    return cols


def write_records_csv(
    path: Union[str, Path],
    records: Sequence[SimulationRecord],
    feeder: FeederModel,
    model_names: Sequence[str],
) -> None:
    """Write the record stream with repr-exact floats (byte reproducible)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(feeder, model_names))
        for r in records:
            row = [repr(float(r.t))]
            row += [repr(float(x)) for x in r.v]
            row += [repr(float(x)) for x in r.p_phase]
            row += [str(int(b)) for b in r.batch]
            row += [repr(float(x)) for x in r.mean_itl]
            row += [
                repr(float(r.throughput)),
                str(int(r.tap)),
                repr(float(r.lambda_under_max)),
                repr(float(r.lambda_over_max)),
                repr(float(r.mu_max)),
                r.regime,
            ]
            writer.writerow(row)


def write_metrics(
    path: Union[str, Path], metrics: ViolationMetrics, **extra: object
) -> None:
    """Metrics summary JSON; extra keys (mode, seed, ...) are merged in."""
    payload = {**extra, **metrics.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
