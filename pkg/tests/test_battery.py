import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import ehsoc as E
from ehsoc.battery import _integrate_many, _integrate_split_many

QUAD = E.LossModel(1.05, 100)
NEARLY_IDEAL = E.LossModel(1e9, 100)


def closed_form_reference(x, y0, beta, e_max, t=1.0):
    # Independent restatement of the separation-of-variables solution.
    m = e_max / 2.0
    a = m * math.sqrt(beta)
    return m + a * math.tanh(x * t / a + math.atanh((y0 - m) / a))


class TestStorageEfficiency:
    def test_vertex_is_one(self):
        assert E.storage_efficiency(50, QUAD) == 1.0

    def test_empty_battery(self):
        assert E.storage_efficiency(0, QUAD) == pytest.approx(1 - 1 / 1.05,
                                                              abs=1e-12)

    def test_quarter_charge(self):
        # 1 - 625/2625 = 16/21
        assert E.storage_efficiency(25, QUAD) == pytest.approx(16 / 21,
                                                               abs=1e-12)

    def test_symmetric(self):
        ys = np.linspace(0, 50, 11)
        left = E.storage_efficiency(ys, QUAD)
        right = E.storage_efficiency(100 - ys, QUAD)
        np.testing.assert_allclose(left, right, atol=1e-12)

    def test_range(self):
        ys = np.linspace(0, 100, 201)
        s = E.storage_efficiency(ys, QUAD)
        assert np.all(s >= 1 - 1 / 1.05 - 1e-12) and np.all(s <= 1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(E.BatteryDomainError):
            E.storage_efficiency(-0.5, QUAD)
        with pytest.raises(E.BatteryDomainError):
            E.storage_efficiency(100.5, QUAD)

    def test_model_validation(self):
        with pytest.raises(E.BatteryDomainError):
            E.LossModel(1.0, 100)
        with pytest.raises(E.BatteryDomainError):
            E.LossModel(1.05, 0)
        with pytest.raises(E.BatteryDomainError):
            E.LossModel(1.05, 100, form="cubic")


class TestIntegrateSlot:
    def test_zero_power_is_exact_fixed_point(self):
        assert E.integrate_slot(0.0, 37.2, QUAD) == 37.2

    def test_against_hand_derived_closed_form(self):
        got = E.integrate_slot(20, 50, QUAD)
        assert got == pytest.approx(closed_form_reference(20, 50, 1.05, 100),
                                    abs=1e-12)
        assert got == pytest.approx(69.04, abs=5e-3)

    def test_against_scipy_ivp(self):
        def rhs(t, y):
            return 20 * (1 - (y - 50) ** 2 / (1.05 * 2500))
        ref = solve_ivp(rhs, (0, 1), [50.0], rtol=1e-11, atol=1e-11).y[0, -1]
        assert E.integrate_slot(20, 50, QUAD) == pytest.approx(ref, abs=1e-7)

    def test_ideal_limit(self):
        assert E.integrate_slot(20, 50, NEARLY_IDEAL) == pytest.approx(
            70.0, abs=1e-3)

    def test_nonfinite_rejected(self):
        with pytest.raises(E.BatteryDomainError):
            E.integrate_slot(float("nan"), 50, QUAD)
        with pytest.raises(E.BatteryDomainError):
            E.integrate_slot(1.0, float("inf"), QUAD)

    def test_y0_out_of_range_rejected(self):
        with pytest.raises(E.BatteryDomainError):
            E.integrate_slot(1.0, -1.0, QUAD)

    def test_sign_consistency_and_bounds(self):
        integ = E.SlotIntegrator(drain_mode="literal")
        xs = np.linspace(-100, 50, 31)
        y0s = np.linspace(0, 100, 21)
        xg, yg = np.meshgrid(xs, y0s)
        out = _integrate_many(xg, yg, QUAD, integ)
        assert np.all(out >= 0.0) and np.all(out <= 100.0)
        assert np.all(out[xg > 0] >= yg[xg > 0])
        assert np.all(out[xg < 0] <= yg[xg < 0])
        np.testing.assert_array_equal(out[xg == 0], yg[xg == 0])

    def test_monotone_in_initial_level(self):
        integ = E.SlotIntegrator(drain_mode="literal")
        y0s = np.arange(0, 101, dtype=float)
        for x in (-60.0, -10.0, 5.0, 40.0):
            out = _integrate_many(x, y0s, QUAD, integ)
            diffs = np.diff(out)
            assert np.all(diffs >= -1e-12)
            interior = (out[1:] < 100.0) & (out[1:] > 0.0) \
                & (out[:-1] < 100.0) & (out[:-1] > 0.0)
            assert np.all(diffs[interior] > 0.0)

    def test_rk4_matches_closed_form(self):
        xs = np.arange(-100, 50.5, 2.5)
        y0s = np.arange(0, 101, 5, dtype=float)
        xg, yg = np.meshgrid(xs, y0s)
        rk = E.SlotIntegrator(method="rk4", step_count=64)
        cf = E.SlotIntegrator(method="closed-form-tanh")
        a = _integrate_many(xg, yg, QUAD, rk)
        b = _integrate_many(xg, yg, QUAD, cf)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_rk4_matches_closed_form_attenuated_drain(self):
        # 64 fixed steps leave ~6e-6 truncation on the fastest drain
        # trajectories (full battery, x = -100), so the literal-mode
        # bound is looser than the charge-side one.
        rk = E.SlotIntegrator(method="rk4", step_count=64,
                              drain_mode="literal")
        cf = E.SlotIntegrator(method="closed-form-tanh",
                              drain_mode="literal")
        xs = np.arange(-100, 50.5, 2.5)
        y0s = np.arange(0, 101, 5, dtype=float)
        xg, yg = np.meshgrid(xs, y0s)
        a = _integrate_many(xg, yg, QUAD, rk)
        b = _integrate_many(xg, yg, QUAD, cf)
        assert np.max(np.abs(a - b)) < 1e-5

    def test_ideal_limit_lattice(self):
        integ = E.SlotIntegrator(drain_mode="literal")
        xs = np.arange(-100, 51, 10, dtype=float)
        y0s = np.arange(0, 101, 10, dtype=float)
        xg, yg = np.meshgrid(xs, y0s)
        out = _integrate_many(xg, yg, NEARLY_IDEAL, integ)
        np.testing.assert_allclose(out, np.clip(yg + xg, 0, 100), atol=1e-3)

    def test_custom_curve_requires_rk4(self):
        flat = E.LossModel(2.0, 100, form=lambda y: np.full_like(y, 0.5))
        with pytest.raises(E.BatteryDomainError):
            E.integrate_slot(10, 50, flat,
                             E.SlotIntegrator(method="closed-form-tanh"))
        got = E.integrate_slot(10, 50, flat, E.make_default_integrator(flat))
        assert got == pytest.approx(55.0, abs=1e-9)

    def test_integrator_validation(self):
        with pytest.raises(E.BatteryDomainError):
            E.SlotIntegrator(method="euler")
        with pytest.raises(E.BatteryDomainError):
            E.SlotIntegrator(step_count=0)
        with pytest.raises(E.BatteryDomainError):
            E.SlotIntegrator(drain_mode="osmotic")
        with pytest.raises(E.BatteryDomainError):
            E.SlotIntegrator(slot_length=0.0)


class TestNextEnergy:
    def test_overflow_clamp(self):
        assert E.next_energy(100, 0, 0, 20, QUAD) == 100

    def test_stored_arrival_rounds(self):
        assert E.next_energy(50, 0, 0, 20, QUAD) == 69

    def test_full_bypass_fixed_point(self):
        assert E.next_energy(50, 0, 1, 10, QUAD) == 50

    def test_energy_causality_enforced(self):
        with pytest.raises(E.BatteryDomainError):
            E.next_energy(10, 11, 0, 0, QUAD)
        with pytest.raises(E.BatteryDomainError):
            E.next_energy(10, -1, 0, 0, QUAD)

    def test_bad_iota_and_arrival(self):
        with pytest.raises(E.BatteryDomainError):
            E.next_energy(10, 0, 1.5, 0, QUAD)
        with pytest.raises(E.BatteryDomainError):
            E.next_energy(10, 0, 0.0, -3, QUAD)

    def test_split_drain_is_full_rate(self):
        # iota = 1 means nothing is stored; rho leaves ungated.
        assert E.next_energy(50, 20, 1.0, 30, QUAD) == 30

    def test_split_vs_net_for_pure_store(self):
        for mode in ("split", "literal", "linear"):
            integ = E.SlotIntegrator(drain_mode=mode)
            assert E.next_energy(50, 0, 0, 20, QUAD, integ) == 69

    def test_split_mixed_flow_against_scipy(self):
        # store 20 at s(y) while draining 30: dy/dt = 20 s(y) - 30
        def rhs(t, y):
            return 20 * (1 - (y - 50) ** 2 / (1.05 * 2500)) - 30
        ref = solve_ivp(rhs, (0, 1), [60.0], rtol=1e-11, atol=1e-11).y[0, -1]
        integ = E.SlotIntegrator(drain_mode="split")
        got = _integrate_split_many(20.0, 30.0, 60.0, QUAD, integ)
        assert float(got[()]) == pytest.approx(ref, abs=1e-5)

    def test_split_never_undershoots(self):
        # the drop within a slot is at most rho
        for e in (5, 20, 60, 100):
            for rho in (0, e // 2, e):
                got = E.next_energy(e, rho, 0.0, 0, QUAD)
                assert got >= e - rho - 1  # rounding slack


class TestQuantization:
    def test_baseline_passes(self):
        rep = E.check_quantization(QUAD, None, 50)
        assert rep.passed and rep.min_increment >= 1

    def test_nearly_lossless_curve_fails_with_tiny_arrival(self):
        rep = E.check_quantization(E.LossModel(1.0001, 100), None, 1)
        assert not rep.passed
        assert rep.worst_state == 0
        assert "finer" in rep.message

    def test_ideal_battery_passes_any_arrival(self):
        assert E.check_quantization(NEARLY_IDEAL, None, 1).passed

    def test_small_battery_big_arrival_passes(self):
        assert E.check_quantization(E.LossModel(1.05, 20), None, 50).passed

    def test_zero_arrival_fails(self):
        assert not E.check_quantization(QUAD, None, 0).passed
