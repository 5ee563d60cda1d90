"""Logistic performance models and the inter-token-latency mixture model.

Power, mean inter-token latency, and token throughput of one serving
replica are all modeled as four-parameter logistic curves in
``x = log2(batch_size)``.  Everything here is pure; the only randomness
is the seeded ITL sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateData, NoConvergence

__all__ = [
    "LogisticParams",
    "PerfModel",
    "ItlMixture",
    "LogisticFit",
    "logistic_eval",
    "logistic_derivative",
    "fit_logistic",
    "fit_itl_mixture",
    "sample_itl",
    "mixture_mean",
    "normalize_to_unit_max",
]


@dataclass(frozen=True)
class LogisticParams:
    """Four-parameter logistic ``y = max * sigmoid(k * (x - x0)) + offset``.

    ``x`` is log2(batch_size).  ``max`` and ``offset`` carry the metric's
    units (W, s, or tokens/s); ``k`` and ``x0`` are dimensionless and in
    log2-batch units respectively.
    """

    max: float
    k: float
    x0: float
    offset: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and self.max > 0):
            raise ValueError(f"require k > 0 and max > 0, got k={self.k}, max={self.max}")
        if self.offset < 0:
            raise ValueError(f"offset must be >= 0, got {self.offset}")

    def to_dict(self) -> dict[str, float]:
        return {"max": self.max, "k": self.k, "x0": self.x0, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LogisticParams":
        return cls(max=float(d["max"]), k=float(d["k"]), x0=float(d["x0"]), offset=float(d["offset"]))


@dataclass(frozen=True)
class PerfModel:
    """Per-replica power (W), mean ITL (s) and throughput (tokens/s) curves."""

    power: LogisticParams
    latency: LogisticParams
    throughput: LogisticParams


@dataclass(frozen=True)
class ItlMixture:
    """Two-component lognormal mixture of inter-token latencies.

    ``weight`` is the probability of component 1; ``mu``/``sigma`` are the
    log-space parameters of each component.
    """

    weight: float
    mu1: float
    sigma1: float
    mu2: float
    sigma2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be > 0")

    def to_dict(self) -> dict[str, float]:
        return {
            "weight": self.weight,
            "mu1": self.mu1,
            "sigma1": self.sigma1,
            "mu2": self.mu2,
            "sigma2": self.sigma2,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ItlMixture":
        return cls(
            weight=float(d["weight"]),
            mu1=float(d["mu1"]),
            sigma1=float(d["sigma1"]),
            mu2=float(d["mu2"]),
            sigma2=float(d["sigma2"]),
        )


@dataclass(frozen=True)
class LogisticFit:
    """A fitted logistic curve together with its residual RMSE."""

    params: LogisticParams
    rmse: float


def _sigmoid(a: float | np.ndarray) -> float | np.ndarray:
    """Branch-wise stable sigmoid; never overflows for large |a|."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    if out.ndim == 0:
        return float(out)
    return out


def logistic_eval(params: LogisticParams, x: float) -> float:
    """Evaluate the logistic curve at continuous x = log2(batch)."""
    return float(params.max * _sigmoid(params.k * (x - params.x0)) + params.offset)


def logistic_derivative(params: LogisticParams, x: float) -> float:
    """d/dx of :func:`logistic_eval`; strictly positive, peaks at max*k/4.

    Computed as ``max * k * s * (1 - s)`` with a branch-wise sigmoid so it
    stays finite for |k*(x - x0)| up to several hundred.
    """
    s = _sigmoid(params.k * (x - params.x0))
    return float(params.max * params.k * s * (1.0 - s))


def _logistic_residual_jac(
    theta: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals model(x) - y and the Jacobian wrt (max, k, x0, offset)."""
    mx, k, x0, off = theta
    s = _sigmoid(k * (x - x0))
    r = mx * s + off - y
    ds = s * (1.0 - s)
    jac = np.column_stack((s, mx * ds * (x - x0), -mx * k * ds, np.ones_like(x)))
    return r, jac


def _clip_theta(theta: np.ndarray) -> np.ndarray:
    theta = theta.copy()
    theta[0] = max(theta[0], 1e-12)  # max > 0
    theta[1] = max(theta[1], 1e-8)  # k > 0
    theta[3] = max(theta[3], 0.0)  # offset >= 0
    return theta


def _levenberg_marquardt(
    theta0: np.ndarray, x: np.ndarray, y: np.ndarray, max_iter: int = 200
) -> tuple[np.ndarray, float]:
    """Damped Gauss-Newton on the logistic SSE from one starting point."""
    theta = _clip_theta(theta0.astype(float))
    r, jac = _logistic_residual_jac(theta, x, y)
    sse = float(r @ r)
    lam = 1e-3
    for _ in range(max_iter):
        g = jac.T @ r
        jtj = jac.T @ jac
        improved = False
        for _ in range(30):
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                delta = np.linalg.solve(a, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = _clip_theta(theta + delta)
            r_new, jac_new = _logistic_residual_jac(cand, x, y)
            sse_new = float(r_new @ r_new)
            if np.isfinite(sse_new) and sse_new < sse:
                theta, r, jac = cand, r_new, jac_new
                gain = sse - sse_new
                sse = sse_new
                lam = max(lam / 3.0, 1e-12)
                improved = True
                break
            lam *= 4.0
        if not improved:
            break
        if gain < 1e-15 * (1.0 + sse):
            break
    return theta, math.sqrt(sse / len(x))


def fit_logistic(points: Sequence[tuple[float, float]]) -> LogisticFit:
    """Least-squares fit of a four-parameter logistic to (x, y) points.

    Uses damped Gauss-Newton from a heuristic initialization
    (offset = min y, max = y range, x0 = x at the median y) with a
    multistart over k in {0.5, 1, 2}.

    Raises:
        DegenerateData: fewer than 4 distinct x values, or all y equal.
        NoConvergence: no start produced a finite fit within budget.
    """
    pts = [(float(px), float(py)) for px, py in points]
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if len(set(x.tolist())) < 4:
        raise DegenerateData(f"need >= 4 distinct x values, got {len(set(x.tolist()))}")
    y_range = float(y.max() - y.min())
    if y_range == 0.0:
        raise DegenerateData("y values are all equal; no curve to fit")

    order = np.argsort(y)
    x0_init = float(x[order[len(order) // 2]])
    theta0 = np.array([y_range, 1.0, x0_init, float(y.min())])

    candidates: list[tuple[np.ndarray, float]] = []
    for k_start in (0.5, 1.0, 2.0):
        start = theta0.copy()
        start[1] = k_start
        candidates.append(_levenberg_marquardt(start, x, y))

    finite = [c for c in candidates if np.isfinite(c[1])]
    if not finite:
        raise NoConvergence("all multistart fits diverged")
    best_rmse = min(c[1] for c in finite)
    theta, rmse = min(finite, key=lambda c: c[1])
    if rmse > 10.0 * best_rmse + 1e-300 and rmse > 1e-12:
        raise NoConvergence(f"best fit RMSE {rmse:g} exceeds 10x multistart best {best_rmse:g}")
    params = LogisticParams(max=float(theta[0]), k=float(theta[1]), x0=float(theta[2]), offset=float(theta[3]))
    return LogisticFit(params=params, rmse=float(rmse))


def _gaussian_logpdf(z: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return -0.5 * ((z - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)


_SIGMA_FLOOR = 1e-6


def fit_itl_mixture(samples: Sequence[float], seed: int = 0) -> ItlMixture:
    """EM fit of a two-component lognormal mixture (Gaussian in log space).

    Runs 5 seeded k-means-style initializations, keeps the best
    log-likelihood, and orders the components so mu1 <= mu2.  Constant
    samples yield a single-component mixture (weight 1, sigma clamped to
    1e-6) rather than an error.

    Raises:
        DegenerateData: fewer than 50 samples or any sample <= 0.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size < 50:
        raise DegenerateData(f"need >= 50 samples, got {arr.size}")
    if np.any(arr <= 0):
        raise DegenerateData("all samples must be > 0")
    z = np.log(arr)
    if float(z.max() - z.min()) < 1e-12:
        m = float(z[0])
        return ItlMixture(weight=1.0, mu1=m, sigma1=_SIGMA_FLOOR, mu2=m, sigma2=_SIGMA_FLOOR)

    rng = np.random.default_rng(seed)
    best: tuple[float, tuple[float, float, float, float, float]] | None = None
    for _ in range(5):
        # k-means-style init: two random centers, assign, then moments.
        centers = rng.choice(z, size=2, replace=False)
        for _ in range(10):
            d0 = np.abs(z - centers[0])
            d1 = np.abs(z - centers[1])
            assign = d1 < d0
            if assign.all() or (~assign).all():
                break
            new = np.array([z[~assign].mean(), z[assign].mean()])
            if np.allclose(new, centers):
                break
            centers = new
        d0 = np.abs(z - centers[0])
        d1 = np.abs(z - centers[1])
        assign = d1 < d0
        if assign.all() or (~assign).all():
            w = 0.5
            mu = np.array([z.mean() - z.std() * 0.5, z.mean() + z.std() * 0.5])
            sig = np.array([max(z.std(), _SIGMA_FLOOR)] * 2)
        else:
            w = float((~assign).mean())
            mu = np.array([z[~assign].mean(), z[assign].mean()])
            sig = np.array(
                [
                    max(float(z[~assign].std()), _SIGMA_FLOOR),
                    max(float(z[assign].std()), _SIGMA_FLOOR),
                ]
            )

        loglik = -np.inf
        for _ in range(200):
            lp1 = math.log(max(w, 1e-300)) + _gaussian_logpdf(z, mu[0], sig[0])
            lp2 = math.log(max(1.0 - w, 1e-300)) + _gaussian_logpdf(z, mu[1], sig[1])
            m = np.maximum(lp1, lp2)
            lse = m + np.log(np.exp(lp1 - m) + np.exp(lp2 - m))
            new_loglik = float(lse.sum())
            gamma1 = np.exp(lp1 - lse)
            n1 = float(gamma1.sum())
            n2 = float(z.size - n1)
            if n1 < 1e-10 or n2 < 1e-10:
                break
            w = n1 / z.size
            mu = np.array([float(gamma1 @ z) / n1, float((1.0 - gamma1) @ z) / n2])
            sig = np.array(
                [
                    max(math.sqrt(max(float(gamma1 @ (z - mu[0]) ** 2) / n1, 0.0)), _SIGMA_FLOOR),
                    max(math.sqrt(max(float((1.0 - gamma1) @ (z - mu[1]) ** 2) / n2, 0.0)), _SIGMA_FLOOR),
                ]
            )
            if abs(new_loglik - loglik) < 1e-8 * (1.0 + abs(new_loglik)):
                loglik = new_loglik
                break
            loglik = new_loglik
        if best is None or loglik > best[0]:
            best = (loglik, (w, float(mu[0]), float(sig[0]), float(mu[1]), float(sig[1])))

    assert best is not None
    w, mu1, s1, mu2, s2 = best[1]
    if mu1 > mu2:
        w, mu1, s1, mu2, s2 = 1.0 - w, mu2, s2, mu1, s1
    return ItlMixture(weight=w, mu1=mu1, sigma1=s1, mu2=mu2, sigma2=s2)


def sample_itl(mix: ItlMixture, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. ITL samples; reproducible under the same seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return _draw_itl(mix, n, rng)


def _draw_itl(mix: ItlMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sampler core reused by the cluster simulator's seed-stream."""
    u = rng.random(n)
    z = rng.standard_normal(n)
    first = u < mix.weight
    mu = np.where(first, mix.mu1, mix.mu2)
    sigma = np.where(first, mix.sigma1, mix.sigma2)
    return np.exp(mu + sigma * z)


def mixture_mean(mix: ItlMixture) -> float:
    """Analytic mean of the lognormal mixture."""
    return mix.weight * math.exp(mix.mu1 + mix.sigma1**2 / 2.0) + (1.0 - mix.weight) * math.exp(
        mix.mu2 + mix.sigma2**2 / 2.0
    )


def normalize_to_unit_max(params: LogisticParams) -> LogisticParams:
    """Rescale a curve so its supremum (offset + max) equals one.

    Used to aggregate per-replica throughput fairly across models.
    """
    total = params.max + params.offset
    return LogisticParams(max=params.max / total, k=params.k, x0=params.x0, offset=params.offset / total)
