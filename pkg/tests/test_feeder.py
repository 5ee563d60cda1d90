"""Tests for the feeder power flow, sensitivities, and regulator logic."""

import cmath
import math

import numpy as np
import pytest

from gridbatch import data_path
from gridbatch.errors import NoConvergence, NonRadial, ValidationError
from gridbatch.feeder import (
    Bus,
    FeederModel,
    GridState,
    Line,
    Load,
    RegulatorConfig,
    estimate_sensitivity,
    load_feeder,
    solve_power_flow,
    solve_power_flow_complex,
    step_regulator,
)

BASE_V = 2401.78

# ---------------------------------------------------------------------------
# Oracles, written independently of the sweep implementation:
#   1. closed-form |V2| for a 2-bus single-line circuit (quadratic equation)
#   2. block Gauss-Seidel fixed point on the complex nodal equations
# ---------------------------------------------------------------------------


def two_bus_closed_form(v1: float, r: float, x: float, p: float, q: float) -> float:
    """|V2| for source v1 (volts), line r+jx, constant-power load p+jq."""
    b = 2.0 * (r * p + x * q) - v1 * v1
    c = (r * r + x * x) * (p * p + q * q)
    u = (-b + math.sqrt(b * b - 4.0 * c)) / 2.0
    return math.sqrt(u)


def gauss_seidel_oracle(model: FeederModel, s_extra, tol=1e-12, max_iter=200_000):
    """Independent solve of the nodal equations Ybus V = I(V).

    Treats each 3x3 line impedance as an admittance block; no sweep, no
    tree ordering. Returns per-unit magnitudes stacked like GridState.v.
    """
    m = len(model.buses)
    idx = {b.id: i for i, b in enumerate(model.buses)}
    ybus = np.zeros((m, m, 3, 3), dtype=complex)
    for ln in model.lines:
        a, b = idx[ln.src], idx[ln.dst]
        y = np.linalg.inv(np.array(ln.z, dtype=complex))
        ybus[a, a] += y
        ybus[b, b] += y
        ybus[a, b] -= y
        ybus[b, a] -= y
    s = np.zeros((m, 3), dtype=complex)
    for ld in model.loads:
        s[idx[ld.bus]] += np.array(ld.s)
    s[idx[model.dc_bus]] += np.array(s_extra)

    ang = [0.0, -2 * math.pi / 3, 2 * math.pi / 3]
    v_src = np.array([model.source_magnitude * model.base_voltage * cmath.exp(1j * a) for a in ang])
    v = np.tile(v_src, (m, 1))
    root = idx[model.source_bus]
    yii_inv = [np.linalg.inv(ybus[i, i]) if i != root else None for i in range(m)]
    for _ in range(max_iter):
        delta = 0.0
        for i in range(m):
            if i == root:
                continue
            acc = -np.conj(s[i] / v[i])
            for j in range(m):
                if j != i and np.any(ybus[i, j]):
                    acc = acc - ybus[i, j] @ v[j]
            v_new = yii_inv[i] @ acc
            delta = max(delta, float(np.max(np.abs(v_new - v[i]))))
            v[i] = v_new
        if delta < tol * model.base_voltage:
            break
    mags = np.abs(v) / model.base_voltage
    return np.concatenate([mags[:, 0], mags[:, 1], mags[:, 2]])


def diag_z(r, x):
    zero = complex(0.0)
    return (
        (complex(r, x), zero, zero),
        (zero, complex(r, x), zero),
        (zero, zero, complex(r, x)),
    )


def coupled_z(rng):
    rs = rng.uniform(0.15, 0.45)
    xs = rng.uniform(0.3, 0.9)
    rm = 0.3 * rs * rng.uniform(0.5, 1.0)
    xm = 0.35 * xs * rng.uniform(0.5, 1.0)
    z = np.full((3, 3), complex(rm, xm))
    np.fill_diagonal(z, complex(rs, xs))
    return tuple(tuple(z[i, j] for j in range(3)) for i in range(3))


def two_bus_model(r=0.3, x=0.6, load=(0.0, 0.0, 0.0), load_q=(0.0, 0.0, 0.0)):
    return FeederModel(
        buses=(Bus("src"), Bus("end")),
        lines=(Line("l1", "src", "end", diag_z(r, x)),),
        loads=(Load("end", tuple(complex(p, q) for p, q in zip(load, load_q))),),
        source_bus="src",
        source_magnitude=1.0,
        base_voltage=BASE_V,
        dc_bus="end",
    )


def random_radial_model(rng, n_buses):
    buses = tuple(Bus(f"b{i}") for i in range(n_buses))
    lines = []
    for i in range(1, n_buses):
        parent = int(rng.integers(0, i))
        lines.append(Line(f"l{i}", f"b{parent}", f"b{i}", coupled_z(rng)))
    loads = []
    for i in range(1, n_buses):
        p = rng.uniform(2e4, 1.5e5, size=3)
        q = p * rng.uniform(0.2, 0.5)
        loads.append(Load(f"b{i}", tuple(complex(pp, qq) for pp, qq in zip(p, q))))
    return FeederModel(
        buses=buses,
        lines=tuple(lines),
        loads=tuple(loads),
        source_bus="b0",
        source_magnitude=1.0,
        base_voltage=BASE_V,
        dc_bus=f"b{n_buses - 1}",
    )


@pytest.fixture(scope="module")
def feeder():
    return load_feeder(data_path("feeder13.json"))


class TestSolvePowerFlow:
    def test_zero_load_equals_source_everywhere(self):
        model = two_bus_model()
        state = solve_power_flow(model, (0.0, 0.0, 0.0), 0.95)
        np.testing.assert_allclose(state.v, 1.0, atol=1e-12)

    def test_two_bus_matches_closed_form(self):
        p, q = 150e3, 60e3
        model = two_bus_model(r=0.3, x=0.6, load=(p, p, p), load_q=(q, q, q))
        state = solve_power_flow(model, (0.0, 0.0, 0.0), 0.95)
        want = two_bus_closed_form(BASE_V, 0.3, 0.6, p, q) / BASE_V
        for ph in range(3):
            assert state.v[ph * 2 + 1] == pytest.approx(want, abs=1e-8)

    def test_two_bus_closed_form_with_dc_load(self):
        dc = 120e3
        pf = 0.95
        model = two_bus_model(r=0.25, x=0.5)
        state = solve_power_flow(model, (dc, dc, dc), pf)
        want = two_bus_closed_form(BASE_V, 0.25, 0.5, dc, dc * math.tan(math.acos(pf))) / BASE_V
        for ph in range(3):
            assert state.v[ph * 2 + 1] == pytest.approx(want, abs=1e-8)

    def test_sweep_matches_gauss_seidel_on_random_networks(self):
        rng = np.random.default_rng(17)
        for case in range(20):
            n = int(rng.integers(2, 5))
            model = random_radial_model(rng, n)
            dc = rng.uniform(1e4, 8e4, size=3)
            pf = 0.95
            state = solve_power_flow(model, tuple(dc), pf)
            s_extra = [complex(p, p * math.tan(math.acos(pf))) for p in dc]
            want = gauss_seidel_oracle(model, s_extra)
            np.testing.assert_allclose(state.v, want, atol=1e-8, err_msg=f"case {case}")

    def test_doubling_dc_load_lowers_dc_bus_voltage(self, feeder):
        dc = (60e3, 60e3, 60e3)
        v1 = solve_power_flow(feeder, dc, 0.95)
        v2 = solve_power_flow(feeder, tuple(2 * p for p in dc), 0.95)
        m = feeder.n_buses
        for ph in range(3):
            i = feeder.v_index("671", ph)
            assert v2.v[i] < v1.v[i]
        assert m == 13

    def test_bundled_feeder_converges_quickly(self, feeder):
        _, _, sweeps = solve_power_flow_complex(feeder, (90e3, 90e3, 90e3), (30e3, 30e3, 30e3))
        assert sweeps < 50

    def test_warm_start_converges_faster(self, feeder):
        v0, _, cold = solve_power_flow_complex(feeder, (90e3,) * 3, (30e3,) * 3)
        _, _, warm = solve_power_flow_complex(feeder, (91e3,) * 3, (30e3,) * 3, v_init=v0)
        assert warm < cold

    def test_all_voltages_positive(self, feeder):
        state = solve_power_flow(feeder, (100e3, 100e3, 100e3), 0.95)
        assert np.all(state.v > 0)

    def test_infeasible_load_raises_no_convergence(self):
        model = two_bus_model(r=2.0, x=4.0, load=(3e6, 3e6, 3e6), load_q=(1e6, 1e6, 1e6))
        with pytest.raises(NoConvergence):
            solve_power_flow(model, (0.0, 0.0, 0.0), 0.95)

    def test_rejects_bad_pf(self, feeder):
        with pytest.raises(ValidationError):
            solve_power_flow(feeder, (0.0, 0.0, 0.0), 0.0)
        with pytest.raises(ValidationError):
            solve_power_flow(feeder, (0.0, 0.0, 0.0), 1.2)

    def test_non_radial_rejected(self):
        loop = FeederModel(
            buses=(Bus("a"), Bus("b"), Bus("c")),
            lines=(
                Line("l1", "a", "b", diag_z(0.1, 0.2)),
                Line("l2", "b", "c", diag_z(0.1, 0.2)),
                Line("l3", "c", "a", diag_z(0.1, 0.2)),
            ),
            loads=(),
            source_bus="a",
            source_magnitude=1.0,
            base_voltage=BASE_V,
            dc_bus="b",
        )
        with pytest.raises(NonRadial):
            solve_power_flow(loop, (0.0, 0.0, 0.0), 0.95)

    def test_disconnected_bus_rejected(self):
        island = FeederModel(
            buses=(Bus("a"), Bus("b"), Bus("c")),
            lines=(Line("l1", "a", "b", diag_z(0.1, 0.2)),),
            loads=(),
            source_bus="a",
            source_magnitude=1.0,
            base_voltage=BASE_V,
            dc_bus="b",
        )
        with pytest.raises(NonRadial):
            solve_power_flow(island, (0.0, 0.0, 0.0), 0.95)


class TestEstimateSensitivity:
    def test_zero_impedance_network_is_stiff(self):
        model = two_bus_model(r=1e-12, x=1e-12)
        sens = estimate_sensitivity(model, (50e3, 50e3, 50e3), 0.95, delta=5e3)
        np.testing.assert_allclose(sens.R, 0.0, atol=1e-12)
        np.testing.assert_allclose(sens.X, 0.0, atol=1e-12)
        np.testing.assert_allclose(sens.H, 0.0, atol=1e-12)

    def test_h_identity(self, feeder):
        pf = 0.95
        sens = estimate_sensitivity(feeder, (90e3, 90e3, 90e3), pf, delta=5e3)
        want = -sens.R - math.tan(math.acos(pf)) * sens.X
        np.testing.assert_allclose(sens.H, want, atol=1e-12)

    def test_r_and_x_nonnegative_on_bundled_feeder(self, feeder):
        # more consumption never raises any voltage magnitude here
        for p in (30e3, 60e3, 90e3, 130e3, 180e3):
            sens = estimate_sensitivity(feeder, (p, p, p), 0.95, delta=5e3)
            assert sens.R.min() >= -1e-12, p
            assert sens.X.min() >= -1e-12, p

    def test_h_nonpositive_on_bundled_feeder(self, feeder):
        for p in (30e3, 90e3, 180e3):
            sens = estimate_sensitivity(feeder, (p, p, p), 0.95, delta=5e3)
            assert sens.H.max() <= 1e-12, p

    def test_linear_prediction_within_1e4_pu_for_100kw_steps(self, feeder):
        pf = 0.95
        op = (90e3, 90e3, 90e3)
        sens = estimate_sensitivity(feeder, op, pf, delta=5e3)
        base = solve_power_flow(feeder, op, pf)
        tan_phi = math.tan(math.acos(pf))
        for ph in range(3):
            dp = np.zeros(3)
            dp[ph] = 100e3
            truth = solve_power_flow(feeder, tuple(np.array(op) + dp), pf)
            pred = base.v - sens.R @ dp - sens.X @ (dp * tan_phi)
            assert np.max(np.abs(pred - truth.v)) < 1e-4, ph

    def test_default_delta_guard(self, feeder):
        with pytest.raises(ValidationError):
            estimate_sensitivity(feeder, (90e3,) * 3, 0.95, delta=-1.0)


class TestStepRegulator:
    def mk_state(self, feeder, vals, tap=0):
        m = feeder.n_buses
        v = np.full(3 * m, 1.0)
        child = feeder.bus_index("632")
        for ph in range(3):
            v[ph * m + child] = vals[ph]
        return GridState(v=v, tap_position=tap)

    def test_dwell_blocks_tap(self, feeder):
        state = self.mk_state(feeder, (0.90, 0.90, 0.90), tap=0)
        tap, last = step_regulator(feeder, state, t=2000.0, last_tap_time=1000.0)
        assert (tap, last) == (0, 1000.0)

    def test_tap_clamped_at_range(self, feeder):
        state = self.mk_state(feeder, (0.90, 0.90, 0.90), tap=16)
        tap, last = step_regulator(feeder, state, t=9000.0, last_tap_time=-1e9)
        assert (tap, last) == (16, -1e9)

    def test_first_allowed_gate(self, feeder):
        state = self.mk_state(feeder, (0.90, 0.90, 0.90), tap=0)
        tap, last = step_regulator(feeder, state, t=1499.9, last_tap_time=-1e9)
        assert tap == 0
        tap, last = step_regulator(feeder, state, t=1500.0, last_tap_time=-1e9)
        assert (tap, last) == (1, 1500.0)

    def test_tap_down_on_overvoltage(self, feeder):
        low, high = feeder.regulator.band
        mid = (low + high) / 2
        state = self.mk_state(feeder, (high + 0.01, mid, mid), tap=3)
        tap, last = step_regulator(feeder, state, t=5000.0, last_tap_time=-1e9)
        assert (tap, last) == (2, 5000.0)

    def test_in_band_no_tap(self, feeder):
        low, high = feeder.regulator.band
        mid = (low + high) / 2
        state = self.mk_state(feeder, (mid, mid, mid), tap=5)
        tap, last = step_regulator(feeder, state, t=5000.0, last_tap_time=-1e9)
        assert (tap, last) == (5, -1e9)

    def test_dwell_never_violated_over_random_sequence(self, feeder):
        rng = np.random.default_rng(23)
        low, high = feeder.regulator.band
        tap, last = 0, -math.inf
        tap_times = []
        for k in range(5000):
            t = float(k)
            vals = rng.uniform(low - 0.05, high + 0.05, size=3)
            new_tap, new_last = step_regulator(
                feeder, self.mk_state(feeder, vals, tap=tap), t, last
            )
            if new_tap != tap:
                tap_times.append(t)
            tap, last = new_tap, new_last
            assert abs(tap) <= feeder.regulator.tap_range
        assert tap_times, "expected at least one tap in the random sequence"
        for a, b in zip(tap_times, tap_times[1:]):
            assert b - a >= feeder.regulator.dwell

    def test_regulator_ratio_shifts_downstream_voltages(self, feeder):
        dc = (60e3, 60e3, 60e3)
        v0 = solve_power_flow(feeder, dc, 0.95, tap=0)
        v8 = solve_power_flow(feeder, dc, 0.95, tap=8)
        m = feeder.n_buses
        src = feeder.bus_index("650")
        for ph in range(3):
            assert v8.v[ph * m + src] == pytest.approx(v0.v[ph * m + src], abs=1e-12)
        child = feeder.bus_index("632")
        for ph in range(3):
            ratio = v8.v[ph * m + child] / v0.v[ph * m + child]
            assert ratio == pytest.approx(1.05, rel=2e-3)


class TestLoadFeeder:
    def test_bundled_feeder_loads(self, feeder):
        assert feeder.n_buses == 13
        assert len(feeder.lines) == 12
        assert feeder.dc_bus == "671"
        assert feeder.regulator is not None
        assert feeder.regulator.first_allowed == 1500.0

    def test_v_index_stacking(self, feeder):
        m = feeder.n_buses
        i = feeder.bus_index("671")
        assert feeder.v_index("671", 0) == i
        assert feeder.v_index("671", 1) == m + i
        assert feeder.v_index("671", 2) == 2 * m + i
