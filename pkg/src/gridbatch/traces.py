"""Normalized measurement-trace ingestion.

Benchmark measurements (replica power over time, per-request inter-token
latencies, steady-state throughput) are exchanged as a flat CSV with
columns ``model, batch_size, record_type, t_or_index, value``.  One
:class:`MeasurementTrace` holds everything recorded for a single
(model, batch_size) pair.  Traces are immutable once loaded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyTrace, ParseError, SchemaError, ValidationError

__all__ = [
    "ALLOWED_BATCH_SIZES",
    "MeasurementTrace",
    "load_traces",
    "save_traces",
    "summarize_trace",
]

ALLOWED_BATCH_SIZES = (8, 16, 32, 64, 128, 256, 512)

_COLUMNS = ("model", "batch_size", "record_type", "t_or_index", "value")
_RECORD_TYPES = ("power", "itl", "throughput")


@dataclass(frozen=True)
class MeasurementTrace:
    """All measurements for one (model, batch_size) benchmark run."""

    model_name: str
    batch_size: int
    power_series: tuple[tuple[float, float], ...]
    itl_samples: tuple[float, ...]
    mean_throughput: float

    def __post_init__(self) -> None:
        if self.batch_size not in ALLOWED_BATCH_SIZES:
            raise ValidationError(
                f"batch_size {self.batch_size} not in allowed set {ALLOWED_BATCH_SIZES}"
            )
        for i in range(1, len(self.power_series)):
            if self.power_series[i][0] <= self.power_series[i - 1][0]:
                raise ValidationError(
                    f"power_series timestamps must be strictly increasing "
                    f"(index {i}, model {self.model_name}, batch {self.batch_size})"
                )
        for t, p in self.power_series:
            if p < 0:
                raise ValidationError(f"negative power {p} at t={t}")
        for s in self.itl_samples:
            if s <= 0:
                raise ValidationError(f"itl sample must be > 0, got {s}")
        if self.mean_throughput < 0:
            raise ValidationError(f"negative throughput {self.mean_throughput}")


def load_traces(path: str | Path) -> list[MeasurementTrace]:
    """Parse the normalized trace CSV into one trace per (model, batch).

    Raises:
        SchemaError: header does not match the documented columns.
        ParseError: a row fails to parse (message carries the line number).
        ValidationError: parsed values violate trace invariants.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {_COLUMNS}")
        if tuple(h.strip() for h in header) != _COLUMNS:
            raise SchemaError(f"{path}: header {header} != expected {list(_COLUMNS)}")

        groups: dict[tuple[str, int], dict[str, list]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_COLUMNS):
                raise ParseError(f"{path}:{lineno}: expected {len(_COLUMNS)} fields, got {len(row)}")
            model, batch_s, rtype, t_s, v_s = (c.strip() for c in row)
            try:
                batch = int(batch_s)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: batch_size {batch_s!r} is not an integer")
            if rtype not in _RECORD_TYPES:
                raise ParseError(f"{path}:{lineno}: record_type {rtype!r} not in {_RECORD_TYPES}")
            try:
                t = float(t_s)
                v = float(v_s)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric t_or_index/value {t_s!r},{v_s!r}")
            g = groups.setdefault((model, batch), {"power": [], "itl": [], "throughput": []})
            g[rtype].append((t, v, lineno))

    traces = []
    for (model, batch), g in groups.items():
        if len(g["throughput"]) != 1:
            raise ValidationError(
                f"{path}: ({model}, batch {batch}) needs exactly one throughput row, "
                f"got {len(g['throughput'])}"
            )
        itl = [v for _, v, _ in sorted(g["itl"], key=lambda r: r[0])]
        traces.append(
            MeasurementTrace(
                model_name=model,
                batch_size=batch,
                power_series=tuple((t, v) for t, v, _ in g["power"]),
                itl_samples=tuple(itl),
                mean_throughput=g["throughput"][0][1],
            )
        )
    return traces


def _fmt(x: float) -> str:
    # repr round-trips doubles exactly, keeping save/load an identity.
    return repr(float(x))


def save_traces(traces: Iterable[MeasurementTrace], path: str | Path) -> None:
    """Write traces back to the normalized CSV schema (load round-trips)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for tr in traces:
            for t, p in tr.power_series:
                writer.writerow([tr.model_name, tr.batch_size, "power", _fmt(t), _fmt(p)])
            for i, s in enumerate(tr.itl_samples):
                writer.writerow([tr.model_name, tr.batch_size, "itl", i, _fmt(s)])
            writer.writerow(
                [tr.model_name, tr.batch_size, "throughput", 0, _fmt(tr.mean_throughput)]
            )


def summarize_trace(trace: MeasurementTrace) -> tuple[float, float, float]:
    """Reduce one trace to (mean power W, mean ITL s, throughput tokens/s).

    Power is averaged with trapezoidal time weighting so irregular
    sampling does not bias the mean; ITL is a plain arithmetic mean.

    Raises:
        EmptyTrace: no power samples or no ITL samples.
    """
    if not trace.power_series or not trace.itl_samples:
        raise EmptyTrace(
            f"({trace.model_name}, batch {trace.batch_size}) has an empty series"
        )
    ts = [t for t, _ in trace.power_series]
    ps = [p for _, p in trace.power_series]
    if len(ts) == 1:
        mean_power = ps[0]
    else:
        area = sum(
            (ts[i + 1] - ts[i]) * (ps[i] + ps[i + 1]) / 2.0 for i in range(len(ts) - 1)
        )
        mean_power = area / (ts[-1] - ts[0])
    mean_itl = sum(trace.itl_samples) / len(trace.itl_samples)
    return mean_power, mean_itl, trace.mean_throughput


def traces_by_model(traces: Sequence[MeasurementTrace]) -> dict[str, list[MeasurementTrace]]:
    """Group traces per model, each model's list sorted by batch size."""
    out: dict[str, list[MeasurementTrace]] = {}
    for tr in traces:
        out.setdefault(tr.model_name, []).append(tr)
    for lst in out.values():
        lst.sort(key=lambda tr: tr.batch_size)
    return out
