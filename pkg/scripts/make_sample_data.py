#!/usr/bin/env python3
"""Regenerate the bundled synthetic benchmark dataset.

Writes, under src/gridbatch/data/:
  sample_traces.csv    normalized traces for 3 models x 7 batch sizes
  manifest.json        dataset inventory + generating parameters
  fallback_bundle.json hand-tuned parameters for 5 models (no fitting)
  bundle.json          fitted bundle produced from sample_traces.csv

Deterministic: a fixed seed reproduces every file byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gridbatch.bundle import FittedModel, fit_bundle, save_bundle
from gridbatch.perf_models import ItlMixture, LogisticParams, PerfModel, logistic_eval
from gridbatch.traces import ALLOWED_BATCH_SIZES, MeasurementTrace, load_traces, save_traces

# Per-replica "true" curves the synthetic traces are generated from.
# max, k, x0, offset; power in W, latency in s, throughput in tokens/s.
TRACE_MODELS: dict[str, PerfModel] = {
    "llama31_8b": PerfModel(
        power=LogisticParams(620.0, 0.8, 7.0, 85.0),
        latency=LogisticParams(0.09, 1.1, 7.5, 0.012),
        throughput=LogisticParams(5200.0, 0.8, 6.5, 50.0),
    ),
    "llama31_70b": PerfModel(
        power=LogisticParams(2300.0, 0.75, 7.2, 420.0),
        latency=LogisticParams(0.16, 1.0, 7.0, 0.025),
        throughput=LogisticParams(2600.0, 0.85, 6.8, 25.0),
    ),
    "qwen3_30b": PerfModel(
        power=LogisticParams(1150.0, 0.85, 6.8, 180.0),
        latency=LogisticParams(0.11, 1.05, 7.2, 0.015),
        throughput=LogisticParams(3900.0, 0.8, 6.6, 40.0),
    ),
}

# Larger deployments covered only by the hand-tuned fallback bundle.
EXTRA_FALLBACK_MODELS: dict[str, PerfModel] = {
    "llama31_405b": PerfModel(
        power=LogisticParams(4600.0, 0.7, 7.4, 900.0),
        latency=LogisticParams(0.22, 0.95, 7.0, 0.04),
        throughput=LogisticParams(1500.0, 0.8, 7.0, 15.0),
    ),
    "qwen3_235b": PerfModel(
        power=LogisticParams(4350.0, 0.72, 7.3, 850.0),
        latency=LogisticParams(0.26, 0.9, 7.1, 0.05),
        throughput=LogisticParams(1800.0, 0.78, 6.9, 20.0),
    ),
}

# ITL mixture shape shared by all synthetic models: a fast mode and a
# slow mode 0.9 nats apart; mu1 is chosen so the mixture mean equals the
# latency curve at each batch size.
MIX_WEIGHT = 0.7
MIX_SIGMA1 = 0.25
MIX_SIGMA2 = 0.2
MIX_GAP = 0.9

POWER_T_END = 120.0
POWER_DT = 1.0
ITL_SAMPLES_PER_TRACE = 600


def mixture_for_mean(target_mean: float) -> ItlMixture:
    """Two-component lognormal with the shared shape and the given mean."""
    c = MIX_WEIGHT * math.exp(MIX_SIGMA1**2 / 2) + (1 - MIX_WEIGHT) * math.exp(
        MIX_GAP + MIX_SIGMA2**2 / 2
    )
    mu1 = math.log(target_mean / c)
    return ItlMixture(
        weight=MIX_WEIGHT, mu1=mu1, sigma1=MIX_SIGMA1, mu2=mu1 + MIX_GAP, sigma2=MIX_SIGMA2
    )


def shape_factor(t: np.ndarray, phase: float) -> np.ndarray:
    """Mean-1 fluctuation; both sinusoids complete whole cycles in 120 s."""
    return 1.0 + 0.08 * np.sin(2 * np.pi * t / 15.0 + phase) + 0.04 * np.sin(
        2 * np.pi * t / 7.5 + 1.3 + 2 * phase
    )


def build_traces(seed: int) -> list[MeasurementTrace]:
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, POWER_T_END + POWER_DT / 2, POWER_DT)
    traces = []
    for name, perf in TRACE_MODELS.items():
        for batch in ALLOWED_BATCH_SIZES:
            x = math.log2(batch)
            phase = float(rng.uniform(0.0, 2 * np.pi))
            power = logistic_eval(perf.power, x) * shape_factor(t, phase)
            mix = mixture_for_mean(logistic_eval(perf.latency, x))
            u = rng.random(ITL_SAMPLES_PER_TRACE)
            z = rng.standard_normal(ITL_SAMPLES_PER_TRACE)
            mu = np.where(u < mix.weight, mix.mu1, mix.mu2)
            sigma = np.where(u < mix.weight, mix.sigma1, mix.sigma2)
            itl = np.exp(mu + sigma * z)
            traces.append(
                MeasurementTrace(
                    model_name=name,
                    batch_size=batch,
                    power_series=tuple(zip(t.tolist(), power.tolist())),
                    itl_samples=tuple(itl.tolist()),
                    mean_throughput=logistic_eval(perf.throughput, x),
                )
            )
    return traces


def perf_to_dict(perf: PerfModel) -> dict:
    return {
        "power": perf.power.to_dict(),
        "latency": perf.latency.to_dict(),
        "throughput": perf.throughput.to_dict(),
    }


def build_fallback_bundle() -> dict[str, FittedModel]:
    bundle = {}
    for name, perf in {**TRACE_MODELS, **EXTRA_FALLBACK_MODELS}.items():
        mixtures = {
            b: mixture_for_mean(logistic_eval(perf.latency, math.log2(b)))
            for b in ALLOWED_BATCH_SIZES
        }
        bundle[name] = FittedModel(perf=perf, itl_mixtures=mixtures, rmse={})
    return bundle


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument(
        "--out-dir",
        type=Path,
        default=Path(__file__).resolve().parents[1] / "src" / "gridbatch" / "data",
    )
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    traces = build_traces(args.seed)
    save_traces(traces, args.out_dir / "sample_traces.csv")

    manifest = {
        "seed": args.seed,
        "models": sorted(TRACE_MODELS),
        "batch_sizes": list(ALLOWED_BATCH_SIZES),
        "trace_count": len(traces),
        "power_samples_per_trace": int(POWER_T_END / POWER_DT) + 1,
        "itl_samples_per_trace": ITL_SAMPLES_PER_TRACE,
        "true_params": {name: perf_to_dict(perf) for name, perf in sorted(TRACE_MODELS.items())},
        "mixture_shape": {
            "weight": MIX_WEIGHT,
            "sigma1": MIX_SIGMA1,
            "sigma2": MIX_SIGMA2,
            "log_gap": MIX_GAP,
        },
    }
    (args.out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    save_bundle(build_fallback_bundle(), args.out_dir / "fallback_bundle.json")

    fitted = fit_bundle(load_traces(args.out_dir / "sample_traces.csv"), seed=0)
    save_bundle(fitted, args.out_dir / "bundle.json")

    for name, fm in fitted.items():
        print(f"{name}: rmse power={fm.rmse['power']:.3g} "
              f"latency={fm.rmse['latency']:.3g} throughput={fm.rmse['throughput']:.3g}")
    print(f"wrote {len(traces)} traces to {args.out_dir}")


if __name__ == "__main__":
    main()
