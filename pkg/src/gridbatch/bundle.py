"""Fitted-parameter bundles: the calibration artifact of the pipeline.

A bundle maps model name to its three fitted logistic curves (power,
mean ITL, throughput), the per-batch ITL mixtures, and the fit RMSEs.
Bundles are produced by :func:`fit_bundle` from ingested traces and are
the single input the simulator needs about any model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DegenerateData
from .perf_models import (
    ItlMixture,
    LogisticParams,
    PerfModel,
    fit_itl_mixture,
    fit_logistic,
)
from .traces import MeasurementTrace, summarize_trace, traces_by_model

__all__ = ["FittedModel", "fit_bundle", "save_bundle", "load_bundle"]


@dataclass(frozen=True)
class FittedModel:
    """Calibrated curves and ITL mixtures for one served model."""

    perf: PerfModel
    itl_mixtures: dict[int, ItlMixture]
    rmse: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "power": self.perf.power.to_dict(),
            "latency": self.perf.latency.to_dict(),
            "throughput": self.perf.throughput.to_dict(),
            "itl_mixtures": {str(b): m.to_dict() for b, m in sorted(self.itl_mixtures.items())},
            "rmse": dict(self.rmse),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        perf = PerfModel(
            power=LogisticParams.from_dict(d["power"]),
            latency=LogisticParams.from_dict(d["latency"]),
            throughput=LogisticParams.from_dict(d["throughput"]),
        )
        mixtures = {int(b): ItlMixture.from_dict(m) for b, m in d["itl_mixtures"].items()}
        return cls(perf=perf, itl_mixtures=mixtures, rmse=dict(d.get("rmse", {})))


def fit_bundle(traces: Sequence[MeasurementTrace], seed: int = 0) -> dict[str, FittedModel]:
    """Fit every model's curves and mixtures from its traces.

    Each model needs traces at >= 4 distinct batch sizes (the logistic
    fit's identifiability floor); fewer raises DegenerateData.
    """
    out: dict[str, FittedModel] = {}
    for name, model_traces in sorted(traces_by_model(traces).items()):
        if len({tr.batch_size for tr in model_traces}) < 4:
            raise DegenerateData(
                f"model {name}: need traces at >= 4 distinct batch sizes, "
                f"got {sorted({tr.batch_size for tr in model_traces})}"
            )
        pts = {"power": [], "latency": [], "throughput": []}
        mixtures: dict[int, ItlMixture] = {}
        for tr in model_traces:
            x = _log2(tr.batch_size)
            mean_power, mean_itl, throughput = summarize_trace(tr)
            pts["power"].append((x, mean_power))
            pts["latency"].append((x, mean_itl))
            pts["throughput"].append((x, throughput))
            mixtures[tr.batch_size] = fit_itl_mixture(tr.itl_samples, seed=seed)
        fits = {metric: fit_logistic(p) for metric, p in pts.items()}
        out[name] = FittedModel(
            perf=PerfModel(
                power=fits["power"].params,
                latency=fits["latency"].params,
                throughput=fits["throughput"].params,
            ),
            itl_mixtures=mixtures,
            rmse={metric: f.rmse for metric, f in fits.items()},
        )
    return out


def _log2(b: int) -> float:
    import math

    return math.log2(b)


def save_bundle(bundle: dict[str, FittedModel], path: str | Path) -> None:
    payload = {"models": {name: fm.to_dict() for name, fm in sorted(bundle.items())}}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_bundle(path: str | Path) -> dict[str, FittedModel]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {name: FittedModel.from_dict(d) for name, d in payload["models"].items()}
