"""Data-center plant simulation.

Given per-model batch sizes, produces per-phase aggregate active power
and per-model mean inter-token latency at each tick.  Replica power is
the fitted logistic level modulated by a mean-1 trace-shape factor with
a per-replica random start-time shift; workload events add a training
power pulse and ramp replica counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import BatchOutOfRange, InvalidWindow, UnknownModel, ValidationError
from .perf_models import ItlMixture, PerfModel, _draw_itl, logistic_eval, normalize_to_unit_max
from .traces import ALLOWED_BATCH_SIZES, MeasurementTrace, summarize_trace

__all__ = [
    "ModelDeployment",
    "ClusterState",
    "ClusterOutput",
    "TrainingOn",
    "ReplicaRamp",
    "WorkloadEvent",
    "shape_from_trace",
    "make_cluster_state",
    "apply_event",
    "advance_state",
    "training_power_at",
    "active_replicas_at",
    "step_cluster",
]

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class ModelDeployment:
    """One served model: replica fleet, phase allocation and fitted curves.

    ``shape_times``/``shape_values`` describe the mean-1 power fluctuation
    of a single replica over one trace period; empty tuples mean a flat
    factor of 1.  ``phase_alloc`` splits the model's aggregate power across
    the three feeder phases.
    """

    name: str
    replicas: int
    gpus_per_replica: int
    latency_threshold: float
    phase_alloc: Vec3
    perf: PerfModel
    itl_mixtures: Mapping[int, ItlMixture]
    batch_min: int = 8
    batch_max: int = 512
    shape_times: tuple[float, ...] = ()
    shape_values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.replicas < 0 or self.gpus_per_replica < 1:
            raise ValidationError(f"{self.name}: bad replica/gpu counts")
        if abs(sum(self.phase_alloc) - 1.0) > 1e-12 or min(self.phase_alloc) < 0:
            raise ValidationError(f"{self.name}: phase_alloc must be >= 0 and sum to 1")
        if self.batch_min > self.batch_max:
            raise ValidationError(f"{self.name}: batch_min > batch_max")
        for b in (self.batch_min, self.batch_max):
            if b not in ALLOWED_BATCH_SIZES:
                raise ValidationError(f"{self.name}: batch bound {b} not in {ALLOWED_BATCH_SIZES}")
        if len(self.shape_times) != len(self.shape_values):
            raise ValidationError(f"{self.name}: shape arrays differ in length")


@dataclass(frozen=True)
class TrainingOn:
    """Rectangular training-power pulse on [t_start, t_end) per phase."""

    power_per_phase: Vec3
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise InvalidWindow(f"TrainingOn window [{self.t_start}, {self.t_end})")
        if min(self.power_per_phase) < 0:
            raise ValidationError("training power must be >= 0 per phase")


@dataclass(frozen=True)
class ReplicaRamp:
    """Linear replica-count ramp for one model over [t_start, t_end]."""

    model: str
    from_count: int
    to_count: int
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise InvalidWindow(f"ReplicaRamp window [{self.t_start}, {self.t_end}]")
        if self.from_count < 0 or self.to_count < 0:
            raise ValidationError("replica counts must be >= 0")


WorkloadEvent = Union[TrainingOn, ReplicaRamp]


@dataclass(frozen=True)
class ClusterState:
    """Plant state at time t; transitions are pure (new state per step)."""

    t: float
    deployments: tuple[ModelDeployment, ...]
    active_replicas: Mapping[str, int]
    training_power_per_phase: Vec3
    base_load_per_phase: Vec3
    replica_shift: Mapping[tuple[str, int], float]
    events: tuple[WorkloadEvent, ...] = ()

    def __post_init__(self) -> None:
        if min(self.training_power_per_phase) < 0 or min(self.base_load_per_phase) < 0:
            raise ValidationError("power components must be >= 0")
        if self.t == 0.0:
            for d in self.deployments:
                if self.active_replicas.get(d.name, 0) > d.replicas:
                    raise ValidationError(
                        f"{d.name}: active {self.active_replicas.get(d.name)} > replicas {d.replicas}"
                    )


@dataclass(frozen=True)
class ClusterOutput:
    """Per-phase power (W), per-model mean ITL (s), total throughput."""

    p_phase: Vec3
    mean_itl: Mapping[str, float]
    total_throughput: float


def shape_from_trace(trace: MeasurementTrace) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Mean-1 shape factor from a power trace (trace / trapezoidal mean)."""
    mean_power, _, _ = summarize_trace(trace)
    t0 = trace.power_series[0][0]
    times = tuple(t - t0 for t, _ in trace.power_series)
    values = tuple(p / mean_power for _, p in trace.power_series)
    return times, values


def make_cluster_state(
    deployments: Sequence[ModelDeployment],
    base_load_per_phase: Vec3,
    rng: np.random.Generator,
) -> ClusterState:
    """Initial state: all replicas active, shifts uniform over the trace.

    Shifts are drawn once here and stay fixed for the whole scenario.
    """
    shifts: dict[tuple[str, int], float] = {}
    for d in deployments:
        span = d.shape_times[-1] if d.shape_times else 1.0
        draws = rng.uniform(0.0, span, size=d.replicas)
        for i in range(d.replicas):
            shifts[(d.name, i)] = float(draws[i])
    return ClusterState(
        t=0.0,
        deployments=tuple(deployments),
        active_replicas={d.name: d.replicas for d in deployments},
        training_power_per_phase=(0.0, 0.0, 0.0),
        base_load_per_phase=base_load_per_phase,
        replica_shift=shifts,
        events=(),
    )


def training_power_at(events: Sequence[WorkloadEvent], t: float) -> Vec3:
    """Sum of all training pulses active at t (half-open windows)."""
    total = [0.0, 0.0, 0.0]
    for ev in events:
        if isinstance(ev, TrainingOn) and ev.t_start <= t < ev.t_end:
            for ph in range(3):
                total[ph] += ev.power_per_phase[ph]
    return (total[0], total[1], total[2])


def active_replicas_at(
    events: Sequence[WorkloadEvent], model: str, t: float, initial: int
) -> int:
    """Replica count at t: ramps interpolate linearly (rounded half-up)."""
    count = initial
    for ev in events:
        if not (isinstance(ev, ReplicaRamp) and ev.model == model):
            continue
        if t >= ev.t_end:
            count = ev.to_count
        elif t >= ev.t_start:
            frac = (t - ev.t_start) / (ev.t_end - ev.t_start)
            count = math.floor(ev.from_count + (ev.to_count - ev.from_count) * frac + 0.5)
        # before t_start the previous count stands
    return count


def advance_state(state: ClusterState, t: float) -> ClusterState:
    """State at time t: recompute event-driven fields, keep shifts."""
    active = {
        d.name: active_replicas_at(state.events, d.name, t, d.replicas)
        for d in state.deployments
    }
    return replace(
        state,
        t=t,
        active_replicas=active,
        training_power_per_phase=training_power_at(state.events, t),
    )


def apply_event(state: ClusterState, event: WorkloadEvent) -> ClusterState:
    """Register a workload event; fields at the current t are refreshed."""
    if isinstance(event, ReplicaRamp):
        if event.model not in {d.name for d in state.deployments}:
            raise UnknownModel(f"ReplicaRamp for unknown model {event.model!r}")
    out = replace(state, events=state.events + (event,))
    return advance_state(out, state.t)


def _check_batch(d: ModelDeployment, b: int) -> None:
    if b not in ALLOWED_BATCH_SIZES or not (d.batch_min <= b <= d.batch_max):
        raise BatchOutOfRange(
            f"{d.name}: batch {b} outside [{d.batch_min}, {d.batch_max}] or not in "
            f"{ALLOWED_BATCH_SIZES}"
        )


def step_cluster(
    state: ClusterState,
    batch: Mapping[str, int],
    dt: float,
    rng: np.random.Generator,
    normalize_throughput: bool = True,
) -> ClusterOutput:
    """Plant output over one tick at the given per-model batch sizes.

    Per-replica power is the fitted logistic level times the replica's
    shape factor at (t + shift) mod trace length; phase totals add base
    load and any training pulse.  Mean ITL per model averages one mixture
    draw per active replica.  With ``normalize_throughput`` (the default)
    per-replica throughput counts toward a maximum of one, matching the
    controller's objective; pass False for raw tokens/s.

    Raises:
        UnknownModel: batch map keys do not match the deployments.
        BatchOutOfRange: a batch outside the model's bounds or not a
            permitted power of two.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    names = {d.name for d in state.deployments}
    unknown = set(batch) - names
    if unknown:
        raise UnknownModel(f"batch map names unknown models: {sorted(unknown)}")
    missing = names - set(batch)
    if missing:
        raise UnknownModel(f"batch map missing models: {sorted(missing)}")

    p_phase = list(state.base_load_per_phase)
    for ph in range(3):
        p_phase[ph] += state.training_power_per_phase[ph]
    mean_itl: dict[str, float] = {}
    total_throughput = 0.0

    for d in state.deployments:
        b = batch[d.name]
        _check_batch(d, b)
        x = math.log2(b)
        n_active = state.active_replicas.get(d.name, 0)
        level = logistic_eval(d.perf.power, x)
        if n_active > 0:
            if d.shape_times:
                span = d.shape_times[-1]
                shifts = np.array([state.replica_shift[(d.name, i)] for i in range(n_active)])
                tt = np.mod(state.t + shifts, span)
                factors = np.interp(tt, d.shape_times, d.shape_values)
                model_power = level * float(factors.sum())
            else:
                model_power = level * n_active
            mean_itl[d.name] = float(_draw_itl(d.itl_mixtures[b], n_active, rng).mean())
        else:
            model_power = 0.0
            mean_itl[d.name] = 0.0
        for ph in range(3):
            p_phase[ph] += d.phase_alloc[ph] * model_power
        thr_params = (
            normalize_to_unit_max(d.perf.throughput) if normalize_throughput else d.perf.throughput
        )
        total_throughput += n_active * logistic_eval(thr_params, x)

    return ClusterOutput(
        p_phase=(p_phase[0], p_phase[1], p_phase[2]),
        mean_itl=mean_itl,
        total_throughput=total_throughput,
    )
