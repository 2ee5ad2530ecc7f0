import math

import numpy as np
import pytest

from spinread import dynamics as dyn
from spinread.constants import BOHR_MAGNETON, BOLTZMANN, ELECTRON_MASS
from spinread.errors import NumericError, RunawayAmplitudeError
from spinread.trap import TrapPotential

OMEGA = 2 * math.pi * 300e6
SIGMA_04K = math.sqrt(BOLTZMANN * 0.4 / (ELECTRON_MASS * OMEGA ** 2))


@pytest.fixture(scope="module")
def pot_harmonic():
    return TrapPotential.harmonic(OMEGA)


@pytest.fixture(scope="module")
def pot_drive():
    # default protocol drive potential
    return TrapPotential.from_normalized(OMEGA, c4=1e-7, c6=-1.5e-8)


# --- cooling ---------------------------------------------------------------

def test_cooled_temperature_headline():
    t0 = dyn.cooled_temperature(4.0, OMEGA, 2 * math.pi * 3e9)
    assert t0 == pytest.approx(0.4, rel=1e-12)


def test_cooled_temperature_trivial_cases():
    assert dyn.cooled_temperature(4.0, OMEGA, OMEGA) == 4.0
    assert dyn.cooled_temperature(4.0, OMEGA, 8 * OMEGA) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="heat"):
        dyn.cooled_temperature(4.0, OMEGA, OMEGA / 2)
    with pytest.raises(ValueError, match="scheme"):
        dyn.cooled_temperature(4.0, OMEGA, 2 * OMEGA, scheme="laser")


def test_adiabaticity_check():
    ok, margin = dyn.adiabaticity_check(100e-9, OMEGA)
    assert ok and margin > 100
    ok, margin = dyn.adiabaticity_check(1e-15, OMEGA)
    assert not ok
    threshold = 0.5 / OMEGA
    ok, margin = dyn.adiabaticity_check(threshold, OMEGA)
    assert not ok and margin == pytest.approx(1.0)


# --- thermal sampling ------------------------------------------------------

def test_thermal_sigma_value():
    assert dyn.thermal_sigma(0.4, OMEGA) == pytest.approx(1.31e-6, rel=0.01)


def test_thermal_samples_statistics():
    s = dyn.thermal_samples(0.4, OMEGA, seed=123, n=100_000)
    assert s.shape == (100_000, 2)
    assert np.std(s[:, 0]) == pytest.approx(SIGMA_04K, rel=0.01)
    assert np.std(s[:, 1]) == pytest.approx(SIGMA_04K, rel=0.01)
    assert abs(np.mean(s)) < 5 * SIGMA_04K / math.sqrt(s.size)
    # quadratures are independent draws
    corr = np.corrcoef(s[:, 0], s[:, 1])[0, 1]
    assert abs(corr) < 0.02


def test_thermal_sampling_determinism_and_isolation():
    a = dyn.sample_thermal(0.4, OMEGA, seed=42)
    b = dyn.sample_thermal(0.4, OMEGA, seed=42)
    assert (a.a0, a.a90) == (b.a0, b.a90)
    batch = dyn.thermal_samples(0.4, OMEGA, seed=42, n=10)
    for i in (0, 3, 9):
        one = dyn.sample_thermal(0.4, OMEGA, seed=42, trial=i)
        assert one.a0 == batch[i, 0] and one.a90 == batch[i, 1]


def test_thermal_zero_temperature():
    s = dyn.sample_thermal(0.0, OMEGA, seed=7)
    assert s.a0 == 0.0 and s.a90 == 0.0


# --- drive -----------------------------------------------------------------

def test_drive_rate_formula():
    expected = BOHR_MAGNETON * 91.0 / (2 * ELECTRON_MASS * OMEGA)
    assert dyn.drive_rate(91.0, OMEGA) == pytest.approx(expected, rel=1e-12)
    assert dyn.drive_rate(91.0, OMEGA) == pytest.approx(0.246, rel=2e-3)
    assert dyn.drive_rate(91.0, OMEGA) * 20e-6 == pytest.approx(4.9e-6, rel=5e-3)
    assert dyn.drive_rate(0.0, OMEGA) == 0.0
    assert dyn.drive_rate(182.0, OMEGA) == 2 * dyn.drive_rate(91.0, OMEGA)


def test_harmonic_drive_linear_growth(pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6)
    res = dyn.integrate_drive(dyn.MotionalState(), +1, pot_harmonic, drive)
    expected = dyn.drive_rate(91.0, OMEGA) * 20e-6
    assert res.final.a0 == pytest.approx(expected, rel=1e-3)
    assert res.final.a90 == 0.0
    # growth is linear in time along the sampled trajectory
    mid = len(res.times) // 2
    assert res.a0[mid] == pytest.approx(expected / 2, rel=1e-3)


def test_drive_spin_mirror_is_exact(pot_drive):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            gradient_curvature=-3.92e10)
    rng = np.random.default_rng(5)
    for _ in range(3):
        a0, a90 = rng.normal(0, SIGMA_04K, 2)
        up = dyn.integrate_drive(dyn.MotionalState(a0, a90), +1, pot_drive, drive)
        dn = dyn.integrate_drive(dyn.MotionalState(-a0, -a90), -1, pot_drive, drive)
        np.testing.assert_array_equal(up.a0, -dn.a0)
        np.testing.assert_array_equal(up.a90, -dn.a90)


def test_anharmonic_drive_dephasing_drop(pot_drive):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            gradient_curvature=-3.92e10)
    res = dyn.integrate_drive(dyn.MotionalState(a0=3 * SIGMA_04K), +1,
                              pot_drive, drive)
    runmax = np.maximum.accumulate(res.a0)
    drop = np.max((runmax - res.a0) / np.maximum(runmax, 1e-30))
    assert drop > 0.10
    assert res.final.a0 > 0  # sign survives the dephasing


def test_runaway_guard_raises():
    pot = TrapPotential.harmonic(OMEGA)
    crazy = dyn.DriveParams(gradient=1e7, t_drive=20e-6)
    with pytest.raises(RunawayAmplitudeError):
        dyn.integrate_drive(dyn.MotionalState(), +1, pot, crazy)


def test_motional_state_validation():
    with pytest.raises(NumericError):
        dyn.MotionalState(float("nan"), 0.0)
    with pytest.raises(RunawayAmplitudeError):
        dyn.MotionalState(2e-3, 0.0)
    assert dyn.MotionalState(1e-6, -2e-6).magnitude == pytest.approx(
        math.hypot(1e-6, 2e-6))


def test_spin_validation():
    with pytest.raises(ValueError):
        dyn.validate_spin(0)
    assert dyn.validate_spin(-1) == -1


# --- amplification ----------------------------------------------------------

def test_harmonic_parametric_gain(pot_harmonic):
    amp = dyn.AmplificationParams(epsilon=0.1, t_amp=60e-9)
    gain = math.exp(0.1 * OMEGA * 60e-9 / 4)
    res = dyn.integrate_amplification(
        dyn.MotionalState(a0=1e-6, a90=1e-6), pot_harmonic, amp)
    assert res.final.a0 == pytest.approx(1e-6 * gain, rel=0.01)
    assert res.final.a90 == pytest.approx(1e-6 / gain, rel=0.01)
    assert gain == pytest.approx(16.9, rel=1e-3)


def test_zero_modulation_is_identity(pot_harmonic):
    amp = dyn.AmplificationParams(epsilon=0.0, t_amp=60e-9)
    res = dyn.integrate_amplification(
        dyn.MotionalState(a0=2e-6, a90=-1e-6), pot_harmonic, amp)
    assert res.final.a0 == pytest.approx(2e-6, rel=1e-12)
    assert res.final.a90 == pytest.approx(-1e-6, rel=1e-12)


def test_amplification_preserves_sign():
    pot_amp = TrapPotential.from_normalized(OMEGA, c4=8.9e-6, c6=-1.6e-9,
                                            fit_range=(-100e-6, 100e-6))
    amp = dyn.AmplificationParams()
    for a0 in (0.2e-6, -0.5e-6, 3e-6, -3.9e-6, 5.8e-6):
        res = dyn.integrate_amplification(dyn.MotionalState(a0=a0),
                                          pot_amp, amp)
        assert math.copysign(1, res.final.a0) == math.copysign(1, a0)
        assert abs(res.final.a0) > 3 * abs(a0)


def test_epsilon_warning():
    with pytest.warns(UserWarning, match="weak-modulation"):
        dyn.AmplificationParams(epsilon=0.5)


# --- lab-frame oracle --------------------------------------------------------

def test_lab_oracle_matches_harmonic_drive(pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6)
    rot = dyn.integrate_drive(dyn.MotionalState(), +1, pot_harmonic, drive)
    lab, _, _ = dyn.lab_frame_oracle(0.0, 0.0, +1, pot_harmonic, drive=drive)
    assert lab.a0 == pytest.approx(rot.final.a0, rel=0.02)


def test_lab_oracle_matches_anharmonic_drive(pot_drive):
    # physics comparison needs the oracle's numerical frequency error well
    # below the anharmonic shifts, hence the finer step here
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            gradient_curvature=-3.92e10)
    rot = dyn.integrate_drive(dyn.MotionalState(a0=3 * SIGMA_04K), +1,
                              pot_drive, drive)
    lab, _, _ = dyn.lab_frame_oracle(3 * SIGMA_04K, 0.0, +1, pot_drive,
                                     drive=drive, steps_per_period=200)
    assert lab.a0 == pytest.approx(rot.final.a0, rel=0.02)


def test_lab_oracle_full_rhs_cross_validation():
    # anharmonic rotation + gradient curvature + spurious force together,
    # both spins, both quadratures populated: the secular equations track
    # the full Newtonian dynamics
    pot = TrapPotential.from_normalized(OMEGA, c4=5e-7, c6=-5e-9)
    drive = dyn.DriveParams(gradient=91.0, t_drive=10e-6,
                            spurious_e_ratio=0.8,
                            gradient_curvature=-3.92e10)
    for spin, a0, a90 in [(-1, 2e-6, -1e-6), (+1, -1.5e-6, 2.5e-6)]:
        rot = dyn.integrate_drive(dyn.MotionalState(a0, a90), spin, pot, drive)
        # the quadrature definitions map the initial state to y(0) = a0,
        # v(0) = omega * a90
        lab, _, _ = dyn.lab_frame_oracle(a0, OMEGA * a90, spin, pot,
                                         drive=drive, steps_per_period=200)
        assert lab.a0 == pytest.approx(rot.final.a0, rel=0.01)
        assert lab.a90 == pytest.approx(rot.final.a90, rel=0.01)


def test_lab_oracle_parametric_gain_window(pot_harmonic):
    # endpoint projections carry O(epsilon) quadrature admixture, so the
    # growth rate is compared over a doubling window where it cancels
    a1, _, _ = dyn.lab_frame_oracle(
        1e-6, 0.0, +1, pot_harmonic,
        amp=dyn.AmplificationParams(t_amp=60e-9), steps_per_period=200)
    a2, _, _ = dyn.lab_frame_oracle(
        1e-6, 0.0, +1, pot_harmonic,
        amp=dyn.AmplificationParams(t_amp=120e-9), steps_per_period=200)
    gain = math.exp(0.1 * OMEGA * 60e-9 / 4)
    assert a2.a0 / a1.a0 == pytest.approx(gain, rel=0.02)


def test_lab_oracle_energy_conservation(pot_harmonic):
    drift = dyn.lab_frame_energy_drift(pot_harmonic, 1e-6, 1000,
                                       steps_per_period=640)
    assert drift < 1e-8


def test_lab_oracle_eta_term_is_benign(pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6)
    base, _, _ = dyn.lab_frame_oracle(0.0, 0.0, +1, pot_harmonic, drive=drive,
                                      steps_per_period=200)
    with_eta, _, _ = dyn.lab_frame_oracle(0.0, 0.0, +1, pot_harmonic,
                                          drive=drive, eta=-4e-3,
                                          steps_per_period=200)
    assert abs(with_eta.a0 - base.a0) / abs(base.a0) < 0.05


# --- spin echo ---------------------------------------------------------------

def test_spurious_force_displacement_matches_closed_form(pot_harmonic):
    # resonant constant-phase force: displacement e_ratio * rate * t
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            spurious_e_ratio=1.5)
    out = dyn.spin_echo_suppression(pot_harmonic, drive)
    expected = 1.5 * dyn.drive_rate(91.0, OMEGA) * 20e-6
    assert out["displacement_no_echo"] == pytest.approx(expected, rel=1e-3)
    assert out["suppression"] == 1.0  # echo off
    assert not out["criterion_ok"]


def test_spin_echo_suppression(pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            spurious_e_ratio=1.5,
                            echo_rabi=2 * math.pi * 1e6)
    out = dyn.spin_echo_suppression(pot_harmonic, drive)
    assert out["suppression"] >= 10.0
    assert out["criterion_ok"] and out["margin"] >= 10.0


def test_spin_echo_straight_wire_flagged_insufficient(pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6,
                            spurious_e_ratio=1e3,
                            echo_rabi=2 * math.pi * 1e6)
    out = dyn.spin_echo_suppression(pot_harmonic, drive)
    assert not out["criterion_ok"]
    assert out["margin"] < 1.0


def test_trajectory_csv(tmp_path, pot_harmonic):
    drive = dyn.DriveParams(gradient=91.0, t_drive=20e-6)
    res = dyn.integrate_drive(dyn.MotionalState(), +1, pot_harmonic, drive)
    path = tmp_path / "traj.csv"
    dyn.write_trajectory_csv(res, path, max_rows=100)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,a0,a90"
    assert len(lines) <= 103
    last = lines[-1].split(",")
    assert float(last[0]) == pytest.approx(20e-6, rel=1e-9)
    assert float(last[1]) == pytest.approx(res.final.a0, rel=1e-8)
