"""Three-phase radial distribution feeder.

Unbalanced power flow by backward-forward sweep on the feeder tree,
a step-voltage regulator with dwell-time logic, and finite-difference
estimation of the voltage-sensitivity matrices R, X, H consumed by the
controller.  Voltages are reported in per unit as a stacked vector
[all buses phase A; all buses phase B; all buses phase C].
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NoConvergence, NonRadial, ParseError, SchemaError, ValidationError

__all__ = [
    "Bus",
    "Line",
    "Load",
    "RegulatorConfig",
    "FeederModel",
    "GridState",
    "SensitivityMatrices",
    "load_feeder",
    "solve_power_flow",
    "solve_power_flow_complex",
    "estimate_sensitivity",
    "step_regulator",
]

SWEEP_TOL_PU = 1e-9
MAX_SWEEPS = 200

Vec3 = tuple[float, float, float]
ZMatrix = tuple[tuple[complex, complex, complex], ...]


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class Line:
    """Series line segment with a full 3x3 complex impedance in ohms."""

    id: str
    src: str
    dst: str
    z: ZMatrix


@dataclass(frozen=True)
class Load:
    """Wye constant-power load: per-phase complex power in W + jvar."""

    bus: str
    s: tuple[complex, complex, complex]


@dataclass(frozen=True)
class RegulatorConfig:
    """Step-voltage regulator on one line.

    The tap applies a multiplicative ratio (1 + tap * step_size) to the
    regulated (downstream) bus.  ``band`` is the holding band on the
    regulated bus's phase voltages; ``initial_tap`` is the standing
    position used by scenarios where the regulator logic is disabled.
    """

    location: str
    step_size: float = 0.00625
    tap_range: int = 16
    band: tuple[float, float] = (0.95, 1.05)
    dwell: float = 1800.0
    first_allowed: float = 0.0
    initial_tap: int = 0

    def __post_init__(self) -> None:
        if not self.band[0] < self.band[1]:
            raise ValidationError(f"regulator band {self.band} needs low < high")
        if self.dwell <= 0:
            raise ValidationError("regulator dwell must be > 0")
        if abs(self.initial_tap) > self.tap_range:
            raise ValidationError("initial_tap outside tap range")


@dataclass(frozen=True)
class FeederModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    source_bus: str
    source_magnitude: float
    base_voltage: float
    dc_bus: str
    regulator: Optional[RegulatorConfig] = None

    def bus_index(self, bus_id: str) -> int:
        return _compile(self).index[bus_id]

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def v_index(self, bus_id: str, phase: int) -> int:
        """Position of (bus, phase) in the stacked 3M voltage vector."""
        return phase * len(self.buses) + self.bus_index(bus_id)


@dataclass(frozen=True, eq=False)
class GridState:
    """Solved per-unit voltage magnitudes (stacked 3M) and tap position."""

    v: np.ndarray
    tap_position: int


@dataclass(frozen=True, eq=False)
class SensitivityMatrices:
    """Voltage sensitivities: R (pu/W), X (pu/var), H = -R - tan(phi) X."""

    R: np.ndarray
    X: np.ndarray
    H: np.ndarray
    pf: float

    def __post_init__(self) -> None:
        want = -self.R - math.tan(math.acos(self.pf)) * self.X
        if not np.allclose(self.H, want, atol=1e-12, rtol=0.0):
            raise ValidationError("H must equal -R - tan(arccos(pf)) X within 1e-12")


class _Compiled:
    """Topology in backward-forward sweep order (immutable after build)."""

    def __init__(self, model: FeederModel):
        self.index = {b.id: i for i, b in enumerate(model.buses)}
        if len(self.index) != len(model.buses):
            raise ConfigError("duplicate bus ids")
        for ln in model.lines:
            if ln.src not in self.index or ln.dst not in self.index:
                raise ConfigError(f"line {ln.id}: unknown endpoint")
        for ld in model.loads:
            if ld.bus not in self.index:
                raise ConfigError(f"load references unknown bus {ld.bus}")
        if model.source_bus not in self.index:
            raise ConfigError(f"unknown source bus {model.source_bus}")
        if model.dc_bus not in self.index:
            raise ConfigError(f"unknown dc bus {model.dc_bus}")

        m = len(model.buses)
        adj: dict[int, list[tuple[int, Line]]] = {i: [] for i in range(m)}
        for ln in model.lines:
            a, b = self.index[ln.src], self.index[ln.dst]
            adj[a].append((b, ln))
            adj[b].append((a, ln))

        root = self.index[model.source_bus]
        parent = [-1] * m
        parent_line: list[Optional[Line]] = [None] * m
        order = [root]
        seen = {root}
        qi = 0
        while qi < len(order):
            u = order[qi]
            qi += 1
            for v, ln in adj[u]:
                if v in seen:
                    if v != parent[u]:
                        raise NonRadial(f"cycle detected through line {ln.id}")
                    continue
                seen.add(v)
                parent[v] = u
                parent_line[v] = ln
                order.append(v)
        if len(order) != m:
            missing = [b.id for b in model.buses if self.index[b.id] not in seen]
            raise NonRadial(f"buses not reachable from source: {missing}")
        if len(model.lines) != m - 1:
            raise NonRadial(f"{len(model.lines)} lines for {m} buses is not a tree")

        self.order = order
        self.parent = parent
        self.z = np.zeros((m, 3, 3), dtype=complex)
        self.is_reg_line = np.zeros(m, dtype=bool)
        reg = model.regulator
        reg_found = False
        for v in order[1:]:
            ln = parent_line[v]
            assert ln is not None
            zz = np.array(ln.z, dtype=complex)
            if zz.shape != (3, 3):
                raise ConfigError(f"line {ln.id}: impedance must be 3x3")
            # orient impedance drop from parent toward v regardless of how
            # the line was written in the file
            self.z[v] = zz
            if reg is not None and ln.id == reg.location:
                self.is_reg_line[v] = True
                reg_found = True
        if reg is not None and not reg_found:
            raise ConfigError(f"regulator location {reg.location!r} matches no line")
        self.reg_child = int(np.argmax(self.is_reg_line)) if reg_found else -1

        self.s_static = np.zeros((m, 3), dtype=complex)
        phase_sets = {self.index[b.id]: set(b.phases) for b in model.buses}
        for ld in model.loads:
            bi = self.index[ld.bus]
            for ph in range(3):
                if ld.s[ph] != 0 and ph not in phase_sets[bi]:
                    raise ConfigError(f"load at {ld.bus} on absent phase {ph}")
                self.s_static[bi, ph] += ld.s[ph]

        ang = [0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0]
        self.v_source = np.array(
            [model.source_magnitude * model.base_voltage * cmath.exp(1j * a) for a in ang]
        )
        self.root = root


@lru_cache(maxsize=32)
def _compile(model: FeederModel) -> _Compiled:
    return _Compiled(model)


def solve_power_flow_complex(
    model: FeederModel,
    dc_p: Sequence[float],
    dc_q: Sequence[float],
    tap: Optional[int] = None,
    v_init: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, int, int]:
    """Backward-forward sweep; returns (complex V (M,3), tap, sweeps).

    ``v_init`` warm-starts the iteration with a previous solution's
    complex voltages; convergence is max |dV| < 1e-9 pu between sweeps.
    """
    c = _compile(model)
    if tap is None:
        tap = model.regulator.initial_tap if model.regulator else 0
    ratio = 1.0
    if model.regulator is not None:
        if abs(tap) > model.regulator.tap_range:
            raise ValidationError(f"tap {tap} outside +-{model.regulator.tap_range}")
        ratio = 1.0 + tap * model.regulator.step_size

    m = len(model.buses)
    s = c.s_static.copy()
    dci = c.index[model.dc_bus]
    for ph in range(3):
        s[dci, ph] += complex(dc_p[ph], dc_q[ph])

    if v_init is not None:
        v = v_init.copy()
    else:
        v = np.tile(c.v_source, (m, 1))

    tol = SWEEP_TOL_PU * model.base_voltage
    rev = list(reversed(c.order[1:]))
    fwd = c.order[1:]
    for sweep in range(1, MAX_SWEEPS + 1):
        i_inj = np.conj(s / v)
        agg = i_inj.copy()
        j_line = np.zeros((m, 3), dtype=complex)
        for b in rev:
            j_line[b] = agg[b]
            flow = agg[b]
            if c.is_reg_line[b]:
                flow = ratio * flow
            agg[c.parent[b]] += flow
        v_new = v.copy()
        v_new[c.root] = c.v_source
        for b in fwd:
            drop = c.z[b] @ j_line[b]
            vb = v_new[c.parent[b]] - drop
            if c.is_reg_line[b]:
                vb = ratio * vb
            v_new[b] = vb
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            return v, tap, sweep
    raise NoConvergence(
        f"power flow did not reach {SWEEP_TOL_PU} pu in {MAX_SWEEPS} sweeps "
        f"(last delta {delta / model.base_voltage:.3e} pu); loading may be infeasible"
    )


def _stack_magnitudes(model: FeederModel, v_complex: np.ndarray) -> np.ndarray:
    mags = np.abs(v_complex) / model.base_voltage
    return np.concatenate([mags[:, 0], mags[:, 1], mags[:, 2]])


def solve_power_flow(
    model: FeederModel,
    dc_power: Sequence[float],
    pf: float,
    tap: Optional[int] = None,
    v_init: Optional[np.ndarray] = None,
) -> GridState:
    """Solve the feeder with the data-center load drawn at dc_bus.

    The data center consumes dc_power + j tan(arccos pf) dc_power per
    phase on top of the static loads.

    Raises:
        NoConvergence: sweep failed to meet tolerance in 200 iterations.
        NonRadial: the line graph is not a tree rooted at the source.
    """
    if not 0.0 < pf <= 1.0:
        raise ValidationError(f"pf must be in (0, 1], got {pf}")
    if min(dc_power) < 0:
        raise ValidationError("dc_power must be >= 0 per phase")
    tan_phi = math.tan(math.acos(pf))
    dc_q = [p * tan_phi for p in dc_power]
    v_complex, tap_out, _ = solve_power_flow_complex(model, dc_power, dc_q, tap, v_init)
    return GridState(v=_stack_magnitudes(model, v_complex), tap_position=tap_out)


def estimate_sensitivity(
    model: FeederModel,
    operating_dc_power: Sequence[float],
    pf: float,
    delta: Optional[float] = None,
    tap: Optional[int] = None,
) -> SensitivityMatrices:
    """Central-difference voltage sensitivities around an operating point.

    Column phi of R perturbs active power on phase phi alone (reactive
    held fixed); X perturbs reactive alone.  H = -R - tan(arccos pf) X
    predicts the magnitude change per W of PF-coupled data-center load.
    """
    if delta is None:
        delta = max(0.01 * max(operating_dc_power), 10e3)
    if delta <= 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    tan_phi = math.tan(math.acos(pf))
    p0 = np.array(operating_dc_power, dtype=float)
    q0 = p0 * tan_phi

    def solve(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        v_complex, _, _ = solve_power_flow_complex(model, p, q, tap)
        return _stack_magnitudes(model, v_complex)

    n = 3 * len(model.buses)
    r_mat = np.zeros((n, 3))
    x_mat = np.zeros((n, 3))
    for ph in range(3):
        e = np.zeros(3)
        e[ph] = delta
        r_mat[:, ph] = (solve(p0 - e, q0) - solve(p0 + e, q0)) / (2.0 * delta)
        x_mat[:, ph] = (solve(p0, q0 - e) - solve(p0, q0 + e)) / (2.0 * delta)
    h_mat = -r_mat - tan_phi * x_mat
    return SensitivityMatrices(R=r_mat, X=x_mat, H=h_mat, pf=pf)


def step_regulator(
    model: FeederModel,
    state: GridState,
    t: float,
    last_tap_time: float,
) -> tuple[int, float]:
    """One-step tap logic: move toward the band when allowed.

    A tap happens only if the regulated bus's worst phase voltage is
    outside the band, t >= first_allowed, the dwell time since the last
    tap has elapsed, and the tap is not already at its range limit.
    Returns (new tap, new last_tap_time); last_tap_time changes only on
    an actual tap movement.
    """
    reg = model.regulator
    if reg is None:
        return state.tap_position, last_tap_time
    c = _compile(model)
    m = len(model.buses)
    child = c.reg_child
    phases = [state.v[ph * m + child] for ph in range(3)]
    low, high = reg.band
    under = low - min(phases)
    over = max(phases) - high
    if max(under, over) <= 0:
        return state.tap_position, last_tap_time
    if t < reg.first_allowed or t - last_tap_time < reg.dwell:
        return state.tap_position, last_tap_time
    tap = state.tap_position
    if under >= over:
        new_tap = min(tap + 1, reg.tap_range)
    else:
        new_tap = max(tap - 1, -reg.tap_range)
    if new_tap == tap:
        return tap, last_tap_time
    return new_tap, t


def _complex_pair(v, where: str) -> complex:
    if not (isinstance(v, list) and len(v) == 2):
        raise SchemaError(f"{where}: expected [real, imag] pair, got {v!r}")
    return complex(float(v[0]), float(v[1]))


def load_feeder(path: str | Path) -> FeederModel:
    """Read a feeder description file (JSON) into a validated FeederModel.

    Raises:
        ParseError: the file is not valid JSON.
        SchemaError: required keys are missing or malformed.
        ConfigError / NonRadial: semantic problems (bad references,
            non-tree topology), detected eagerly.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    for key in ("base_voltage", "source", "dc_bus", "buses", "lines", "loads"):
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")

    buses = tuple(
        Bus(id=str(b["id"]), phases=tuple(int(p) for p in b.get("phases", [0, 1, 2])))
        for b in doc["buses"]
    )
    lines = []
    for ln in doc["lines"]:
        z_rows = ln["z"]
        if len(z_rows) != 3:
            raise SchemaError(f"{path}: line {ln.get('id')}: z must have 3 rows")
        z = tuple(
            tuple(_complex_pair(z_rows[i][j], f"line {ln.get('id')} z[{i}][{j}]") for j in range(3))
            for i in range(3)
        )
        lines.append(Line(id=str(ln["id"]), src=str(ln["from"]), dst=str(ln["to"]), z=z))
    loads = []
    for ld in doc["loads"]:
        s = tuple(_complex_pair(ld["s"][ph], f"load at {ld.get('bus')}") for ph in range(3))
        loads.append(Load(bus=str(ld["bus"]), s=s))

    reg = None
    if doc.get("regulator") is not None:
        r = doc["regulator"]
        reg = RegulatorConfig(
            location=str(r["location"]),
            step_size=float(r.get("step_size", 0.00625)),
            tap_range=int(r.get("tap_range", 16)),
            band=(float(r["band"][0]), float(r["band"][1])),
            dwell=float(r.get("dwell", 1800.0)),
            first_allowed=float(r.get("first_allowed", 0.0)),
            initial_tap=int(r.get("initial_tap", 0)),
        )

    model = FeederModel(
        buses=buses,
        lines=tuple(lines),
        loads=tuple(loads),
        source_bus=str(doc["source"]["bus"]),
        source_magnitude=float(doc["source"].get("magnitude", 1.0)),
        base_voltage=float(doc["base_voltage"]),
        dc_bus=str(doc["dc_bus"]),
        regulator=reg,
    )
    _compile(model)  # validate topology eagerly
    return model
