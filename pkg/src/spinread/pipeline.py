"""End-to-end Monte Carlo of the readout protocol: sample thermal initial
conditions, run the drive and amplification stages, score each trial
through the detection model, and aggregate fidelity and SNR statistics.

Trials are integrated as numpy lanes (elementwise, so results are
independent of chunking); trial i's thermal draw comes from a counter-
based stream and is reproducible in isolation.  The fidelity estimator is
the mean of the per-trial analytic correct-readout probabilities; a
sampled-outcome mode draws one Gaussian noise realization per trial
instead, for validating that estimator.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import detection, dynamics
from .dynamics import AmplificationParams, DriveParams, MotionalState
from .errors import ConfigError
from .trap import TrapPotential

# Effective normalized anharmonicity of the default protocol potential.
# The quartic term is the optimized-trap value; the sextic term carries the
# residual structure that dephases the drive above ~6 um (see README).
DEFAULT_DRIVE_C4 = 1.0e-7
DEFAULT_DRIVE_C6 = -1.5e-8
# Amplification-range (+/-100 um) coefficients of the default layout fit.
DEFAULT_AMP_C4 = 8.9e-6
DEFAULT_AMP_C6 = -1.6e-9
# Cubic coefficient of B_x(y) for the default drive circuit, shielded.
DEFAULT_GRADIENT_CURVATURE = -3.92e10  # T/m^3 at g1 = 91 T/m

DEFAULT_OMEGA = 2.0 * math.pi * 300e6
DEFAULT_COOL_TIME = 0.5e-6
COHERENCE_BUDGET = 1.0  # s


@dataclass(frozen=True)
class ProtocolConfig:
    """All parameter sets of the four-stage protocol, mutually consistent
    (one omega everywhere; t0 consistent with the cooling scheme)."""

    omega: float = DEFAULT_OMEGA
    t0: float = 0.4
    drive_potential: TrapPotential = None
    amp_potential: TrapPotential = None
    drive: DriveParams = None
    amplification: AmplificationParams = None
    circuit: detection.DetectionCircuit = None
    cool_time: float = DEFAULT_COOL_TIME
    n_trials: int = 100_000
    master_seed: int = 20260810
    spin: int = +1

    def __post_init__(self):
        if self.drive_potential is None:
            object.__setattr__(
                self, "drive_potential",
                TrapPotential.from_normalized(
                    self.omega, c4=DEFAULT_DRIVE_C4, c6=DEFAULT_DRIVE_C6))
        if self.amp_potential is None:
            object.__setattr__(
                self, "amp_potential",
                TrapPotential.from_normalized(
                    self.omega, c4=DEFAULT_AMP_C4, c6=DEFAULT_AMP_C6,
                    fit_range=(-100e-6, 100e-6)))
        if self.drive is None:
            object.__setattr__(
                self, "drive",
                DriveParams(gradient_curvature=DEFAULT_GRADIENT_CURVATURE))
        if self.amplification is None:
            object.__setattr__(self, "amplification", AmplificationParams())
        if self.circuit is None:
            object.__setattr__(
                self, "circuit", detection.circuit_params(omega=self.omega))
        dynamics.validate_spin(self.spin)
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        for pot, name in ((self.drive_potential, "drive_potential"),
                          (self.amp_potential, "amp_potential")):
            if abs(pot.omega - self.omega) > 1e-6 * self.omega:
                raise ConfigError(f"{name} frequency differs from the "
                                  "protocol frequency", field=name)
        if abs(self.circuit.omega - self.omega) > 1e-6 * self.omega:
            raise ConfigError("detection circuit frequency differs from the "
                              "protocol frequency", field="circuit")
        if self.t0 < 0:
            raise ConfigError("t0 must be >= 0", field="t0")

    def to_dict(self):
        """Fully materialized parameter values (every default resolved)."""
        return {
            "frequency_hz": self.omega / (2.0 * math.pi),
            "t0_k": self.t0,
            "cool_time_s": self.cool_time,
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "spin": self.spin,
            "drive": {
                "gradient_t_per_m": self.drive.gradient,
                "gradient_curvature_t_per_m3": self.drive.gradient_curvature,
                "t_drive_s": self.drive.t_drive,
                "spurious_e_ratio": self.drive.spurious_e_ratio,
                "echo_rabi_rad_per_s": self.drive.echo_rabi,
            },
            "amplification": {
                "epsilon": self.amplification.epsilon,
                "t_amp_s": self.amplification.t_amp,
            },
            "detection": {
                "resistance_ohm": self.circuit.r,
                "d_eff_m": self.circuit.d_eff,
                "temperature_k": self.circuit.t_electrons,
                "t_det_s": self.circuit.t_det,
                "l_eff_h": self.circuit.l_eff,
                "c_eff_f": self.circuit.c_eff,
                "gamma_per_s": self.circuit.gamma,
            },
            "drive_potential": {
                "c4_per_um4": self.drive_potential.c4,
                "c6_per_um6": self.drive_potential.c6,
                "fit_range_m": list(self.drive_potential.fit_range),
            },
            "amp_potential": {
                "c4_per_um4": self.amp_potential.c4,
                "c6_per_um6": self.amp_potential.c6,
                "fit_range_m": list(self.amp_potential.fit_range),
            },
        }


@dataclass(frozen=True)
class TrialResult:
    """Outcome of a single trial."""

    initial: MotionalState
    a0_amp: float
    snr: float
    p_correct: float

    def __post_init__(self):
        if not 0.0 <= self.p_correct <= 1.0:
            raise ValueError("p_correct outside [0, 1]")


@dataclass(frozen=True)
class FidelityReport:
    """Aggregated Monte Carlo result."""

    fidelity: float
    fidelity_stderr: float
    n_trials: int
    n_errors: int
    master_seed: int
    spin: int
    histogram_edges: tuple
    histogram_counts: tuple
    fraction_snr_below_1: float
    fraction_snr_below_0: float
    mean_snr: float
    mean_a0_amp: float
    timing: dict
    sampled_outcomes: bool = False

    def to_dict(self):
        return {
            "fidelity": self.fidelity,
            "fidelity_stderr": self.fidelity_stderr,
            "n_trials": self.n_trials,
            "n_errors": self.n_errors,
            "master_seed": self.master_seed,
            "spin": self.spin,
            "histogram_edges": list(self.histogram_edges),
            "histogram_counts": list(self.histogram_counts),
            "fraction_snr_below_1": self.fraction_snr_below_1,
            "fraction_snr_below_0": self.fraction_snr_below_0,
            "mean_snr": self.mean_snr,
            "mean_a0_amp_m": self.mean_a0_amp,
            "timing_s": self.timing,
            "sampled_outcomes": self.sampled_outcomes,
        }


def _chunk_size(n):
    """Trials per chunk; SPINREAD_WORKERS only changes the chunk count,
    never the results (all per-trial math is elementwise)."""
    workers = int(os.environ.get("SPINREAD_WORKERS", "1"))
    return max(1024, math.ceil(n / max(workers, 1)))


HISTOGRAM_BINS = 80


def run_protocol(config: ProtocolConfig, sampled_outcomes=False,
                 return_trials=False, _negate_initial=False):
    """Run the full cooled-drive-amplify-detect Monte Carlo.

    Trials whose integration leaves the amplitude guard are counted in
    ``n_errors`` and excluded from the aggregates (zero under the default
    configuration).  ``_negate_initial`` flips the sign of every thermal
    draw; combined with ``spin=-1`` it realizes the exact mirror of the
    ``spin=+1`` run and is used by the symmetry tests.
    """
    n = config.n_trials
    samples = dynamics.thermal_samples(config.t0, config.omega,
                                       config.master_seed, n)
    if _negate_initial:
        samples = -samples
    a0_amp = np.empty(n)
    chunk = _chunk_size(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d0, d90 = dynamics.drive_final_batch(
            samples[lo:hi, 0], samples[lo:hi, 1], config.spin,
            config.drive_potential, config.drive, guard=False)
        f0, f90 = dynamics.amp_final_batch(
            d0, d90, config.amp_potential, config.amplification, guard=False)
        a0_amp[lo:hi] = f0

    bad = ~np.isfinite(a0_amp) | (np.abs(a0_amp) > dynamics.AMPLITUDE_GUARD)
    n_errors = int(np.sum(bad))
    valid = ~bad

    snr = detection.snr(a0_amp[valid], config.circuit)
    if sampled_outcomes:
        noise = dynamics.unit_normals(config.master_seed, n,
                                      start=2 ** 62)[:, 0][valid]
        p = ((snr + noise) * config.spin > 0).astype(float)
    else:
        p = detection.p_correct(snr, config.spin)

    fidelity = float(np.mean(p)) if p.size else float("nan")
    stderr = float(np.std(p) / math.sqrt(p.size)) if p.size else float("nan")
    edges = np.histogram_bin_edges(snr, bins=HISTOGRAM_BINS)
    counts, _ = np.histogram(snr, bins=edges)
    report = FidelityReport(
        fidelity=fidelity,
        fidelity_stderr=stderr,
        n_trials=n,
        n_errors=n_errors,
        master_seed=config.master_seed,
        spin=config.spin,
        histogram_edges=tuple(edges.tolist()),
        histogram_counts=tuple(int(c) for c in counts),
        fraction_snr_below_1=float(np.mean(snr < 1.0)) if snr.size else 0.0,
        fraction_snr_below_0=float(np.mean(snr < 0.0)) if snr.size else 0.0,
        mean_snr=float(np.mean(snr)) if snr.size else float("nan"),
        mean_a0_amp=float(np.mean(a0_amp[valid])) if snr.size else float("nan"),
        timing=timing_budget(config),
        sampled_outcomes=sampled_outcomes,
    )
    if not return_trials:
        return report
    snr_all = np.full(n, np.nan)
    p_all = np.full(n, np.nan)
    snr_all[valid] = snr
    p_all[valid] = p
    trials = {
        "initial_a0": samples[:, 0],
        "initial_a90": samples[:, 1],
        "a0_amp": a0_amp,
        "snr": snr_all,
        "p_correct": p_all,
        "valid": valid,
    }
    return report, trials


def single_trial(config: ProtocolConfig, trial_index=0) -> TrialResult:
    """Run one trial end to end (convenience and debugging path)."""
    state = dynamics.sample_thermal(config.t0, config.omega,
                                    config.master_seed, trial=trial_index)
    res_d = dynamics.integrate_drive(state, config.spin,
                                     config.drive_potential, config.drive)
    res_a = dynamics.integrate_amplification(res_d.final, config.amp_potential,
                                             config.amplification)
    s = detection.snr(res_a.final.a0, config.circuit)
    return TrialResult(initial=state, a0_amp=res_a.final.a0, snr=s,
                       p_correct=detection.p_correct(s, config.spin))


def timing_budget(config: ProtocolConfig):
    """Physical stage durations (seconds) and the protocol total."""
    stages = {
        "cooling": config.cool_time,
        "drive": config.drive.t_drive,
        "amplification": config.amplification.t_amp,
        "detection": config.circuit.t_det,
    }
    total = sum(stages.values())
    stages["total"] = total
    stages["within_coherence_budget"] = bool(total < COHERENCE_BUDGET)
    return stages


def snr_histogram_rows(report: FidelityReport):
    """Histogram as (bin_lo, bin_hi, count) rows for CSV emission."""
    e = report.histogram_edges
    return [(e[i], e[i + 1], report.histogram_counts[i])
            for i in range(len(report.histogram_counts))]
