import math

import numpy as np
import pytest
from scipy import integrate

from spinread import trap
from spinread.constants import ELECTRON_MASS, ELEMENTARY_CHARGE
from spinread.errors import InfeasibleVoltageError

OMEGA = 2 * math.pi * 300e6


def test_rect_potential_tiles_to_unity():
    # adjacent tiles telescope exactly to the enclosing rectangle, and a
    # huge electrode approaches the unit-potential plane
    pt = np.array([3e-6, -2e-6, 33e-6])
    big = 100.0
    xs = np.linspace(-big, big, 5)
    ys = np.linspace(-big, big, 4)
    total = 0.0
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            total += trap.rect_potential(xs[i], xs[i + 1], ys[j], ys[j + 1], pt)
    enclosing = trap.rect_potential(-big, big, -big, big, pt)
    assert total == pytest.approx(enclosing, abs=1e-12)
    assert enclosing == pytest.approx(1.0, abs=1e-6)


def test_rect_potential_above_large_electrode_center():
    phi = trap.rect_potential(-0.5, 0.5, -0.5, 0.5, np.array([0, 0, 33e-6]))
    assert 0.999 < phi < 1.0


def test_rect_potential_in_unit_interval():
    rng = np.random.default_rng(11)
    for _ in range(50):
        x1, y1 = rng.uniform(-1e-4, 0, 2)
        x2, y2 = rng.uniform(1e-6, 1e-4, 2)
        p = rng.uniform([-2e-4, -2e-4, 1e-6], [2e-4, 2e-4, 2e-4])
        phi = trap.rect_potential(x1, x2, y1, y2, p)
        assert 0.0 <= phi <= 1.0


def test_rect_potential_against_quadrature_oracle():
    # Dirichlet Green's function of the grounded plane, integrated over the
    # electrode by brute-force quadrature: phi = (z/2pi) int dA / r^3
    x1, x2 = -15e-6, 15e-6
    y1, y2 = -50e-6, 50e-6
    x0, y0, z0 = 0.0, 0.0, 33e-6

    def integrand(yy, xx):
        r2 = (xx - x0) ** 2 + (yy - y0) ** 2 + z0 ** 2
        return z0 / (2 * np.pi) / r2 ** 1.5

    oracle, err = integrate.dblquad(integrand, x1, x2, y1, y2,
                                    epsabs=1e-14, epsrel=1e-9)
    got = trap.rect_potential(x1, x2, y1, y2, np.array([x0, y0, z0]))
    assert got == pytest.approx(oracle, rel=1e-6)


def test_rect_potential_rejects_points_below_plane():
    with pytest.raises(ValueError):
        trap.rect_potential(0, 1e-5, 0, 1e-5, np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        trap.rect_potential(0, 1e-5, 0, 1e-5, np.array([0.0, 0.0, -1e-6]))


def test_superposition_of_basis_potentials():
    layout = trap.default_layout()
    y = np.linspace(-20e-6, 20e-6, 31)
    basis = layout.basis_matrix(y)
    rng = np.random.default_rng(4)
    for _ in range(5):
        v = rng.uniform(-5, 5, len(layout.electrodes))
        direct = layout.axial_energy(v, y)
        summed = -ELEMENTARY_CHARGE * basis @ v
        np.testing.assert_allclose(direct, summed, rtol=0, atol=1e-30)


def test_layout_validation():
    e = trap.Electrode("A", 0, 1e-5, 0, 1e-5)
    bad = trap.Electrode("B", 5e-6, 2e-5, 5e-6, 2e-5)
    with pytest.raises(ValueError, match="overlap"):
        trap.ElectrodeLayout(electrodes=(e, bad))
    # shared edges are allowed
    ok = trap.Electrode("B", 1e-5, 2e-5, 0, 1e-5)
    trap.ElectrodeLayout(electrodes=(e, ok))
    with pytest.raises(ValueError):
        trap.ElectrodeLayout(electrodes=(e,), trap_height=-1e-6)
    with pytest.raises(ValueError):
        trap.ElectrodeLayout(electrodes=(e,), dac_bits=0)


def test_optimize_reaches_target_curvature():
    layout = trap.default_layout()
    sol = trap.optimize_voltages(layout, OMEGA)
    pot = sol.resulting_potential
    assert pot.omega == pytest.approx(OMEGA, rel=1e-3)
    # harmonicity at least at the reported level: |c4| of order 1e-7,
    # residual c6 well below it
    assert 1e-8 < abs(pot.c4) < 1e-6
    assert abs(pot.c6) < 1e-8
    assert not pot.odd_flagged


def test_optimized_voltages_are_quantized_and_grouped():
    layout = trap.default_layout()
    sol = trap.optimize_voltages(layout, OMEGA)
    step = layout.dac_step
    for v in sol.voltages:
        assert v == pytest.approx(round(v / step) * step, abs=1e-15)
    # mirrored electrodes share voltages
    volts = dict(zip((e.name for e in layout.electrodes), sol.voltages))
    assert volts["C1"] == volts["C5"] == volts["C6"] == volts["C10"]


def test_quantization_moves_at_most_half_step():
    layout = trap.default_layout()
    unq = trap.optimize_voltages(layout, OMEGA, quantize=False)
    q = trap.optimize_voltages(layout, OMEGA)
    for a, b in zip(unq.group_voltages, q.group_voltages):
        assert abs(a - b) <= layout.dac_step / 2 + 1e-15


def test_symmetric_layout_has_machine_level_odd_terms():
    layout = trap.default_layout()
    sol = trap.optimize_voltages(layout, OMEGA)
    pot = trap.fit_taylor(layout, sol.voltages, (-10e-6, 10e-6))
    hi = 10e-6
    odd = max(abs(pot.taylor[n]) * hi ** n for n in (3, 5, 7))
    even = max(abs(pot.taylor[n]) * hi ** n for n in (2, 4, 6, 8))
    assert odd < 1e-12 * even


def test_zero_target_gives_zero_voltages():
    layout = trap.default_layout()
    sol = trap.optimize_voltages(layout, 0.0)
    assert all(v == 0.0 for v in sol.voltages)
    assert sol.residual == pytest.approx(0.0, abs=1e-18)


def test_unquantized_solution_matches_normal_equations_oracle():
    # three-segment toy layout, solved densely via the normal equations
    electrodes = tuple(
        trap.Electrode(f"T{i}", 30e-6, 120e-6, y0 * 1e-6, (y0 + 60) * 1e-6,
                       group=i)
        for i, y0 in enumerate((-90.0, -30.0, 30.0))
    )
    layout = trap.ElectrodeLayout(electrodes=electrodes)
    # wide fit range keeps the toy problem well conditioned, so the dense
    # normal-equations solve is a meaningful 1e-9 oracle
    fit = (-50e-6, 50e-6)
    sol = trap.optimize_voltages(layout, OMEGA, fit_range=fit, quantize=False)

    y = np.linspace(fit[0], fit[1], trap.FIT_SAMPLES)
    basis = layout.group_matrix(y)
    target = -(0.5 * ELECTRON_MASS * OMEGA ** 2 / ELEMENTARY_CHARGE) * y ** 2
    a = np.hstack([basis, np.ones((len(y), 1))])
    oracle = np.linalg.solve(a.T @ a, a.T @ target)[:-1]
    np.testing.assert_allclose(sol.group_voltages, oracle, rtol=1e-9)


def test_infeasible_target_names_limiting_electrode():
    layout = trap.default_layout()
    with pytest.raises(InfeasibleVoltageError) as exc:
        trap.optimize_voltages(layout, 2 * math.pi * 3e9)
    assert exc.value.electrode is not None
    assert exc.value.electrode in {e.name for e in layout.electrodes}
    assert abs(exc.value.required_voltage) > layout.dac_range


def test_requires_three_electrodes():
    electrodes = (trap.Electrode("A", 0, 1e-5, -1e-5, 0, group=0),
                  trap.Electrode("B", 0, 1e-5, 0, 1e-5, group=1))
    layout = trap.ElectrodeLayout(electrodes=electrodes)
    with pytest.raises(ValueError, match="at least 3"):
        trap.optimize_voltages(layout, OMEGA)


def test_potential_consistency_invariant():
    pot = trap.TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-2e-9)
    assert pot.omega ** 2 == pytest.approx(2 * pot.taylor[2] / ELECTRON_MASS,
                                           rel=1e-9)
    # declared frequency inconsistent with the curvature is rejected
    coeffs = list(pot.taylor)
    with pytest.raises(ValueError, match="inconsistent"):
        trap.TrapPotential(omega=OMEGA * 1.01, taylor=tuple(coeffs),
                           fit_range=(-1e-5, 1e-5))
    with pytest.raises(ValueError, match="confining"):
        trap.TrapPotential(omega=OMEGA, taylor=(0.0,) * 9,
                           fit_range=(-1e-5, 1e-5))


def test_normalized_coefficients_roundtrip():
    pot = trap.TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-2e-9)
    assert pot.c4 == pytest.approx(1e-7, rel=1e-12)
    assert pot.c6 == pytest.approx(-2e-9, rel=1e-12)
    assert pot.normalized(2) == pytest.approx(1.0, rel=1e-12)


def test_frequency_shift_zero_amplitude():
    pot = trap.TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-2e-9)
    assert trap.frequency_shift(pot, 0.0) == 0.0


def test_frequency_shift_closed_form_value():
    # direct evaluation at the reported coefficients, A = 2 um:
    # 3*4*1e-7/4 + 15*16*(-2e-9)/16 = 3.0e-7 - 3.0e-8 = 2.7e-7
    pot = trap.TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-2e-9)
    assert trap.frequency_shift(pot, 2e-6) == pytest.approx(2.7e-7, rel=1e-9)


def test_frequency_shift_curve_shape_and_period_oracle():
    pot = trap.TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-2e-9)
    amps = np.linspace(0.5e-6, 10e-6, 20)
    shifts = np.array([trap.frequency_shift(pot, a) for a in amps])
    # positive at small amplitude, turning over once the sextic term wins
    assert shifts[0] > 0
    assert shifts[-1] < 0
    peak = np.argmax(shifts)
    assert 0 < peak < len(amps) - 1
    # sign change near A^2 = 40 um^2
    zero_cross = amps[np.argmax(shifts < 0)]
    assert zero_cross == pytest.approx(math.sqrt(40) * 1e-6, rel=0.1)
    # independent anharmonic-period quadrature agrees within 10% where the
    # shift is below 1e-5
    for a, s in zip(amps, shifts):
        if abs(s) < 1e-5 and abs(s) > 1e-9:
            num = trap.frequency_shift(pot, a, numeric=True)
            assert num == pytest.approx(s, rel=0.10)


def test_frequency_shift_rejects_negative_amplitude():
    pot = trap.TrapPotential.harmonic(OMEGA)
    with pytest.raises(ValueError):
        trap.frequency_shift(pot, -1e-6)
