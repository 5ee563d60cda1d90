"""Online feedback optimization of per-model inference batch sizes.

Primal-dual controller acting in log2-batch space: projected dual ascent
on voltage-band and latency constraints, projected gradient descent on
the Lagrangian of the throughput objective, then discrete actuation to
the nearest power-of-two batch.  Voltage enters the gradient through the
sensitivity matrix H (dv/dp <= 0), so an active lower-limit dual pushes
batches down (shedding power) and an active upper-limit dual pushes them
up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .cluster import ModelDeployment
from .errors import DimensionMismatch, ValidationError
from .feeder import SensitivityMatrices
from .perf_models import logistic_derivative

__all__ = [
    "ControllerConfig",
    "ControllerState",
    "GradientTerms",
    "make_controller_state",
    "dual_update",
    "gradient_terms",
    "lagrangian_gradient",
    "primal_update",
    "box_bounds",
    "discretize",
    "regime_label",
    "control_step",
]


@dataclass(frozen=True)
class ControllerConfig:
    """Step sizes, voltage band and monitoring set for the control loop.

    ``monitored`` selects which entries of the stacked bus-phase voltage
    vector carry dual variables; ``None`` monitors all of them.  Entries
    outside the set never accumulate dual pressure and therefore never
    influence the gradient.
    """

    rho_x: float = 0.1
    rho_v: float = 1.0
    rho_l: float = 1.0
    gamma: float = 0.1
    v_lower: float = 0.95
    v_upper: float = 1.05
    interval: float = 1.0
    monitored: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.rho_x <= 0 or self.rho_v <= 0 or self.rho_l <= 0:
            raise ValidationError("step sizes must be positive")
        if self.gamma < 0:
            raise ValidationError("gamma must be nonnegative")
        if not self.v_lower < self.v_upper:
            raise ValidationError("v_lower must be below v_upper")
        if self.interval <= 0:
            raise ValidationError("interval must be positive")


@dataclass(frozen=True, eq=False)
class ControllerState:
    """Relaxed decisions, dual variables and the sensitivity snapshot.

    ``x`` is the continuous log2-batch vector; ``x_anchor`` is the value
    ``x`` held at the start of the previous control step and anchors the
    quadratic smoothing term.  Arrays are treated as immutable; updates
    return new states.
    """

    x: np.ndarray
    x_anchor: np.ndarray
    lambda_under: np.ndarray
    lambda_over: np.ndarray
    mu: np.ndarray
    sens: SensitivityMatrices


@dataclass(frozen=True, eq=False)
class GradientTerms:
    """Per-model decomposition of the Lagrangian gradient.

    ``total = smoothing + throughput + voltage + latency``; the three
    named constraint/objective terms also drive regime labelling.
    """

    smoothing: np.ndarray
    throughput: np.ndarray
    voltage: np.ndarray
    latency: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.smoothing + self.throughput + self.voltage + self.latency


def make_controller_state(
    x0: Sequence[float], sens: SensitivityMatrices
) -> ControllerState:
    """Fresh state at continuous decisions ``x0`` with all duals at zero."""
    x = np.asarray(x0, dtype=float).copy()
    n_vm = sens.R.shape[0]
    return ControllerState(
        x=x,
        x_anchor=x.copy(),
        lambda_under=np.zeros(n_vm),
        lambda_over=np.zeros(n_vm),
        mu=np.zeros(x.shape[0]),
        sens=sens,
    )


def _monitor_mask(cfg: ControllerConfig, n_vm: int) -> np.ndarray:
    mask = np.zeros(n_vm, dtype=bool)
    if cfg.monitored is None:
        mask[:] = True
        return mask
    for idx in cfg.monitored:
        if not 0 <= idx < n_vm:
            raise DimensionMismatch(f"monitored index {idx} outside 0..{n_vm - 1}")
        mask[idx] = True
    return mask


def dual_update(
    state: ControllerState,
    v_hat: np.ndarray,
    itl_hat: np.ndarray,
    thresholds: np.ndarray,
    cfg: ControllerConfig,
) -> ControllerState:
    """Projected ascent on the voltage-band and latency dual variables.

    lambda_under += rho_v * (v_lower - v_hat), lambda_over += rho_v *
    (v_hat - v_upper), mu_i += rho_l * (itl_hat_i - threshold_i), each
    clipped at zero.  Only monitored voltage entries move.
    """
    v_hat = np.asarray(v_hat, dtype=float)
    itl_hat = np.asarray(itl_hat, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    n_vm = state.lambda_under.shape[0]
    if v_hat.shape != (n_vm,):
        raise DimensionMismatch(f"v_hat has shape {v_hat.shape}, expected ({n_vm},)")
    if itl_hat.shape != state.mu.shape or thresholds.shape != state.mu.shape:
        raise DimensionMismatch("itl_hat/thresholds do not match the model count")
    mask = _monitor_mask(cfg, n_vm)
    lam_u = state.lambda_under.copy()
    lam_o = state.lambda_over.copy()
    lam_u[mask] = np.maximum(0.0, lam_u[mask] + cfg.rho_v * (cfg.v_lower - v_hat[mask]))
    lam_o[mask] = np.maximum(0.0, lam_o[mask] + cfg.rho_v * (v_hat[mask] - cfg.v_upper))
    mu = np.maximum(0.0, state.mu + cfg.rho_l * (itl_hat - thresholds))
    return replace(state, lambda_under=lam_u, lambda_over=lam_o, mu=mu)


def gradient_terms(
    state: ControllerState,
    deployments: Sequence[ModelDeployment],
    cfg: ControllerConfig,
) -> GradientTerms:
    """Evaluate the four gradient contributions at the current ``x``.

    For model i with w_i replicas and phase split e_i:

        g_i = 2*gamma*(x_i - anchor_i)
              - w_i * dthroughput_i(x_i)
              + (eta @ H @ e_i) * w_i * dpower_i(x_i)
              + mu_i * dlatency_i(x_i),   eta = lambda_over - lambda_under.
    """
    n = state.x.shape[0]
    if len(deployments) != n:
        raise DimensionMismatch(f"{len(deployments)} deployments for x of size {n}")
    mask = _monitor_mask(cfg, state.lambda_under.shape[0])
    eta = np.where(mask, state.lambda_over - state.lambda_under, 0.0)
    eta_h = eta @ state.sens.H  # length-3 row vector of pu/W pressures
    smoothing = 2.0 * cfg.gamma * (state.x - state.x_anchor)
    throughput = np.empty(n)
    voltage = np.empty(n)
    latency = np.empty(n)
    for i, dep in enumerate(deployments):
        x_i = float(state.x[i])
        w = float(dep.replicas)
        e = np.asarray(dep.phase_alloc, dtype=float)
        throughput[i] = -w * logistic_derivative(dep.perf.throughput, x_i)
        voltage[i] = float(eta_h @ e) * w * logistic_derivative(dep.perf.power, x_i)
        latency[i] = state.mu[i] * logistic_derivative(dep.perf.latency, x_i)
    return GradientTerms(
        smoothing=smoothing, throughput=throughput, voltage=voltage, latency=latency
    )


def lagrangian_gradient(
    state: ControllerState,
    deployments: Sequence[ModelDeployment],
    cfg: ControllerConfig,
) -> np.ndarray:
    """Gradient of the Lagrangian with respect to the log2-batch vector."""
    return gradient_terms(state, deployments, cfg).total


def box_bounds(deployments: Sequence[ModelDeployment]) -> tuple[np.ndarray, np.ndarray]:
    """Per-model log2-batch box [log2 batch_min, log2 batch_max]."""
    lo = np.array([math.log2(d.batch_min) for d in deployments])
    hi = np.array([math.log2(d.batch_max) for d in deployments])
    return lo, hi


def primal_update(
    state: ControllerState,
    gradient: np.ndarray,
    bounds: tuple[np.ndarray, np.ndarray],
    cfg: ControllerConfig,
) -> ControllerState:
    """Projected descent step; the pre-step ``x`` becomes the next anchor."""
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != state.x.shape:
        raise DimensionMismatch("gradient length does not match x")
    lo, hi = bounds
    x_new = np.clip(state.x - cfg.rho_x * gradient, lo, hi)
    return replace(state, x=x_new, x_anchor=state.x.copy())


def discretize(x: np.ndarray) -> np.ndarray:
    """Map log2-batch decisions to integer power-of-two batch sizes.

    Rounds half away from zero, so 5.5 -> 64 and 6.4 -> 64.
    """
    x = np.asarray(x, dtype=float)
    exponents = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return (2.0 ** exponents).astype(np.int64)


def regime_label(terms: GradientTerms) -> str:
    """Dominant driver of the current step: largest aggregate |term|."""
    magnitudes = (
        float(np.abs(terms.throughput).sum()),
        float(np.abs(terms.voltage).sum()),
        float(np.abs(terms.latency).sum()),
    )
    return ("throughput", "voltage", "latency")[int(np.argmax(magnitudes))]


def control_step(
    state: ControllerState,
    v_hat: np.ndarray,
    itl_hat: np.ndarray,
    deployments: Sequence[ModelDeployment],
    cfg: ControllerConfig,
) -> tuple[ControllerState, np.ndarray]:
    """One full control interval: duals, gradient, primal step, actuation.

    Returns the updated state and the discrete batch vector to apply.
    """
    thresholds = np.array([d.latency_threshold for d in deployments])
    state = dual_update(state, v_hat, itl_hat, thresholds, cfg)
    grad = lagrangian_gradient(state, deployments, cfg)
    state = primal_update(state, grad, box_bounds(deployments), cfg)
    return state, discretize(state.x)
