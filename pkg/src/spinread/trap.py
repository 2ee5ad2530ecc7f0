"""Surface-trap electrostatics: electrode basis potentials, voltage
optimization against a target axial curvature, Taylor fits of the axial
potential, and anharmonic frequency shifts.

Geometry convention: electrodes are axis-aligned rectangles in the z = 0
plane; everything outside the listed rectangles is grounded metal (the
gapless-plane approximation).  The trap axis runs along y at height z =
trap_height above the plane, and the axial potential is evaluated on the
line (0, y, trap_height).  All lengths are meters; the axial potential is
stored as electron potential energy in joules, so a confining trap has a
positive quadratic coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ELECTRON_MASS, ELEMENTARY_CHARGE
from .errors import InfeasibleVoltageError

TAYLOR_ORDER = 8
FIT_SAMPLES = 201  # uniform samples across a fit range


def rect_potential(x_min, x_max, y_min, y_max, points):
    """Potential of one rectangular electrode at unit voltage in a grounded
    plane, evaluated at ``points`` (shape (..., 3), z > 0).

    This is the solid-angle solution for the Dirichlet half-space problem:
    phi = Omega / (2 pi), with the rectangle's solid angle written as a
    four-corner arctangent sum.  Values lie in [0, 1] and tile additively:
    adjacent rectangles sum exactly to the enclosing rectangle's potential.
    """
    pts = np.asarray(points, dtype=float)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    if np.any(z <= 0.0):
        raise ValueError("rect_potential requires points strictly above the plane (z > 0)")

    def corner(u, v):
        return np.arctan2(u * v, z * np.sqrt(u * u + v * v + z * z))

    u1, u2 = x_min - x, x_max - x
    v1, v2 = y_min - y, y_max - y
    omega = corner(u2, v2) - corner(u1, v2) - corner(u2, v1) + corner(u1, v1)
    return omega / (2.0 * np.pi)


@dataclass(frozen=True)
class Electrode:
    """One rectangular electrode.  ``group`` indexes a shared DAC channel;
    electrodes with the same group are constrained to one voltage."""

    name: str
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    group: int = 0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"electrode {self.name}: degenerate rectangle")

    def overlaps(self, other: "Electrode") -> bool:
        return (
            self.x_min < other.x_max
            and other.x_min < self.x_max
            and self.y_min < other.y_max
            and other.y_min < self.y_max
        )


@dataclass(frozen=True)
class ElectrodeLayout:
    """DC electrode set of the trap.  The rest of the plane (RF rails,
    pickup electrode, ground) is held at 0 V for the axial DC problem."""

    electrodes: tuple[Electrode, ...]
    trap_height: float = 33e-6
    dac_bits: int = 16
    dac_range: float = 10.0  # volts, symmetric +/- range

    def __post_init__(self):
        if self.trap_height <= 0:
            raise ValueError("trap_height must be positive")
        if self.dac_bits < 1:
            raise ValueError("dac_bits must be >= 1")
        names = [e.name for e in self.electrodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate electrode names")
        for i, a in enumerate(self.electrodes):
            for b in self.electrodes[i + 1:]:
                if a.overlaps(b):
                    raise ValueError(f"electrodes {a.name} and {b.name} overlap")

    @property
    def n_groups(self) -> int:
        return max(e.group for e in self.electrodes) + 1

    @property
    def dac_step(self) -> float:
        return 2.0 * self.dac_range / 2 ** self.dac_bits

    def quantize(self, voltages):
        """Round voltages to the nearest DAC code."""
        step = self.dac_step
        return np.round(np.asarray(voltages, dtype=float) / step) * step

    def basis_matrix(self, y):
        """Unit-voltage potentials of each electrode on the axis, shape
        (len(y), n_electrodes), dimensionless (volts per electrode volt)."""
        y = np.asarray(y, dtype=float)
        pts = np.stack(
            [np.zeros_like(y), y, np.full_like(y, self.trap_height)], axis=-1
        )
        cols = [
            rect_potential(e.x_min, e.x_max, e.y_min, e.y_max, pts)
            for e in self.electrodes
        ]
        return np.stack(cols, axis=-1)

    def group_matrix(self, y):
        """Basis matrix with columns summed over shared-voltage groups."""
        b = self.basis_matrix(y)
        g = np.zeros((b.shape[0], self.n_groups))
        for k, e in enumerate(self.electrodes):
            g[:, e.group] += b[:, k]
        return g

    def expand_group_voltages(self, group_voltages):
        gv = np.asarray(group_voltages, dtype=float)
        return np.array([gv[e.group] for e in self.electrodes])

    def axial_energy(self, voltages, y):
        """Electron potential energy (J) along the axis for per-electrode
        voltages.  Superposition of the unit-voltage basis potentials."""
        v = np.asarray(voltages, dtype=float)
        phi = self.basis_matrix(y) @ v  # volts
        return -ELEMENTARY_CHARGE * phi


def default_layout(
    center_half_width=45e-6,
    row_depth=100e-6,
    segment_edges_um=(-150.0, -90.0, -30.0, 30.0, 90.0, 150.0),
    trap_height=33e-6,
    dac_bits=16,
    dac_range=10.0,
    mirror_groups=True,
):
    """Ten-segment, two-row DC layout in the style of a five-wire surface
    trap: a 30 um split pickup electrode and RF rails occupy |x| < 45 um
    (grounded for the DC problem), with five DC segments per side beyond.

    With ``mirror_groups`` the left/right rows and the +/-y segment pairs
    share DAC channels (full four-fold symmetry, 3 independent voltages);
    otherwise each x-mirrored pair keeps its own channel (5 voltages).
    """
    edges = [e * 1e-6 for e in segment_edges_um]
    n_seg = len(edges) - 1
    electrodes = []
    for side, (x0, x1) in enumerate(
        [(center_half_width, center_half_width + row_depth),
         (-center_half_width - row_depth, -center_half_width)]
    ):
        for j in range(n_seg):
            if mirror_groups:
                group = min(j, n_seg - 1 - j)
            else:
                group = j
            electrodes.append(
                Electrode(
                    name=f"C{side * n_seg + j + 1}",
                    x_min=x0,
                    x_max=x1,
                    y_min=edges[j],
                    y_max=edges[j + 1],
                    group=group,
                )
            )
    return ElectrodeLayout(
        electrodes=tuple(electrodes),
        trap_height=trap_height,
        dac_bits=dac_bits,
        dac_range=dac_range,
    )


@dataclass(frozen=True)
class TrapPotential:
    """Axial potential as an even-dominated Taylor series.

    ``taylor[n]`` is the energy coefficient of y^n in J/m^n for n = 0..8;
    ``omega`` is the secular frequency implied by the quadratic term,
    omega = sqrt(2 V_2 / m_e).  ``v0`` is the energy scale at which the
    normalized coefficients c_n (per um^n, with c_2 = 1) are quoted.
    """

    omega: float
    taylor: tuple[float, ...]
    fit_range: tuple[float, float]
    odd_flagged: bool = False

    def __post_init__(self):
        if len(self.taylor) != TAYLOR_ORDER + 1:
            raise ValueError("taylor must hold coefficients for n = 0..8")
        v2 = self.taylor[2]
        if v2 <= 0:
            raise ValueError("potential is not confining (V_2 <= 0)")
        omega_v2 = math.sqrt(2.0 * v2 / ELECTRON_MASS)
        if abs(omega_v2 - self.omega) > 1e-6 * self.omega:
            raise ValueError(
                "declared omega inconsistent with quadratic coefficient: "
                f"{self.omega:.6e} vs {omega_v2:.6e}"
            )

    @property
    def v2(self) -> float:
        return self.taylor[2]

    @property
    def v0(self) -> float:
        """Energy scale V(0) such that V = v0 * (c_2 y^2 + ...) with y in um
        and c_2 = 1 /um^2."""
        return self.v2 * 1e-12

    def normalized(self, n: int) -> float:
        """Normalized coefficient c_n in um^-n at c_2 = 1 um^-2."""
        return self.taylor[n] * (1e-6) ** n / self.v0

    @property
    def c4(self) -> float:
        return self.normalized(4)

    @property
    def c6(self) -> float:
        return self.normalized(6)

    def energy(self, y):
        """Potential energy (J) of the Taylor model at axial position y."""
        y = np.asarray(y, dtype=float)
        return sum(c * y ** n for n, c in enumerate(self.taylor))

    def energy_gradient(self, y):
        y = np.asarray(y, dtype=float)
        return sum(n * c * y ** (n - 1) for n, c in enumerate(self.taylor) if n >= 1)

    def anharmonic_coefficients(self):
        """V_n for n = 3..8 (the quadratic term is carried by omega)."""
        return self.taylor[3:]

    @classmethod
    def harmonic(cls, omega, fit_range=(-10e-6, 10e-6)):
        v2 = 0.5 * ELECTRON_MASS * omega ** 2
        coeffs = [0.0] * (TAYLOR_ORDER + 1)
        coeffs[2] = v2
        return cls(omega=omega, taylor=tuple(coeffs), fit_range=tuple(fit_range))

    def with_omega(self, omega):
        """Same anharmonic coefficients expressed at a (slightly) different
        secular frequency; reconciles fits over different ranges, whose
        quadratic terms differ at the fit-artifact level."""
        coeffs = list(self.taylor)
        coeffs[2] = 0.5 * ELECTRON_MASS * omega ** 2
        return TrapPotential(omega=omega, taylor=tuple(coeffs),
                             fit_range=self.fit_range,
                             odd_flagged=self.odd_flagged)

    @classmethod
    def from_normalized(cls, omega, c4=0.0, c6=0.0, c8=0.0,
                        fit_range=(-10e-6, 10e-6)):
        """Build from normalized coefficients quoted at c_2 = 1 um^-2."""
        v2 = 0.5 * ELECTRON_MASS * omega ** 2
        v0 = v2 * 1e-12
        coeffs = [0.0] * (TAYLOR_ORDER + 1)
        coeffs[2] = v2
        coeffs[4] = v0 * c4 * 1e24
        coeffs[6] = v0 * c6 * 1e36
        coeffs[8] = v0 * c8 * 1e48
        return cls(omega=omega, taylor=tuple(coeffs), fit_range=tuple(fit_range))


ODD_FLAG_RATIO = 1e-9  # odd/even coefficient ratio above which we flag


def fit_taylor(layout: ElectrodeLayout, voltages, fit_range,
               order=TAYLOR_ORDER) -> TrapPotential:
    """Least-squares Taylor fit (order 8) of the axial potential energy over
    ``fit_range``, sampled at 201 uniform points.

    The fit is performed in micron units for conditioning and converted back
    to SI coefficients.  Odd coefficients are retained; the potential is
    flagged when they are not negligible relative to the even terms.
    """
    lo, hi = fit_range
    y = np.linspace(lo, hi, FIT_SAMPLES)
    u = y * 1e6  # um
    energy = layout.axial_energy(voltages, y)
    coeffs_um = np.polynomial.polynomial.polyfit(u, energy, order)
    coeffs = [c * (1e6) ** n for n, c in enumerate(coeffs_um)]
    odd = max(abs(coeffs[n]) * hi ** n for n in (3, 5, 7))
    even_ref = max(abs(coeffs[n]) * hi ** n for n in (2, 4, 6, 8))
    odd_flagged = odd > ODD_FLAG_RATIO * even_ref
    omega = math.sqrt(2.0 * coeffs[2] / ELECTRON_MASS)
    return TrapPotential(
        omega=omega,
        taylor=tuple(coeffs),
        fit_range=(lo, hi),
        odd_flagged=bool(odd_flagged),
    )


@dataclass(frozen=True)
class VoltageSolution:
    """Result of the voltage optimization: quantized per-electrode voltages,
    the RMS fit residual in volts over the fit range, and the re-fitted
    potential of the quantized solution."""

    voltages: tuple[float, ...]
    residual: float
    resulting_potential: TrapPotential
    group_voltages: tuple[float, ...] = field(default=())


DEFAULT_OPT_RANGE = (-5e-6, 5e-6)


def optimize_voltages(layout: ElectrodeLayout, target_omega,
                      fit_range=DEFAULT_OPT_RANGE, quantize=True,
                      taylor_range=None) -> VoltageSolution:
    """Least-squares electrode voltages for a pure quadratic axial potential
    with curvature matching ``target_omega`` over ``fit_range``, followed by
    DAC quantization and an order-8 Taylor re-fit of the quantized solution.

    The fit allows a free constant offset (only curvature is physical).
    Raises InfeasibleVoltageError naming the limiting electrode if the
    unquantized solution leaves the DAC range.
    """
    if len(layout.electrodes) < 3:
        raise ValueError("need at least 3 DC electrodes")
    if target_omega < 0:
        raise ValueError("target_omega must be >= 0")
    lo, hi = fit_range
    y = np.linspace(lo, hi, FIT_SAMPLES)
    # Work in volts: B @ v ~ phi_target + const, with the electron sign
    # folded into the target curvature.
    basis = layout.group_matrix(y)
    target_phi = -(0.5 * ELECTRON_MASS * target_omega ** 2 / ELEMENTARY_CHARGE) * y ** 2
    design = np.hstack([basis, np.ones((len(y), 1))])
    sol, *_ = np.linalg.lstsq(design, target_phi, rcond=None)
    group_v = sol[:-1]

    full_v = layout.expand_group_voltages(group_v)
    over = np.abs(full_v) > layout.dac_range
    if np.any(over):
        k = int(np.argmax(np.abs(full_v)))
        raise InfeasibleVoltageError(
            f"electrode {layout.electrodes[k].name} requires "
            f"{full_v[k]:+.3f} V, outside +/-{layout.dac_range:g} V",
            electrode=layout.electrodes[k].name,
            required_voltage=float(full_v[k]),
        )

    if quantize:
        group_v = layout.quantize(group_v)
        full_v = layout.expand_group_voltages(group_v)

    # Residual: RMS voltage misfit against the quadratic after re-fitting
    # the free offset.
    phi = basis @ group_v
    offset = np.mean(target_phi - phi)
    residual = float(np.sqrt(np.mean((phi + offset - target_phi) ** 2)))

    if target_omega == 0.0:
        pot = None
    else:
        pot = fit_taylor(layout, full_v, taylor_range or fit_range)
    return VoltageSolution(
        voltages=tuple(float(v) for v in full_v),
        residual=residual,
        resulting_potential=pot,
        group_voltages=tuple(float(v) for v in group_v),
    )


def frequency_shift(pot: TrapPotential, amplitude, numeric=False,
                    quad_points=200):
    """Relative secular-frequency shift at oscillation amplitude ``amplitude``.

    Closed form: (3 A^2 c4 / 4 + 15 A^4 c6 / 16) / c2.  With ``numeric`` the
    shift is instead computed from the period of the full anharmonic
    oscillation (all fitted orders) via energy-conserving quadrature, as an
    independent cross-check of the closed form.
    """
    a = float(amplitude)
    if a < 0:
        raise ValueError("amplitude must be >= 0")
    if a == 0.0:
        return 0.0
    if not numeric:
        v2 = pot.taylor[2]
        v4 = pot.taylor[4]
        v6 = pot.taylor[6]
        return (3.0 * a ** 2 * v4 / 4.0 + 15.0 * a ** 4 * v6 / 16.0) / v2
    return _period_shift(pot, a, quad_points)


def _period_shift(pot: TrapPotential, a, quad_points):
    """Delta omega / omega from the exact oscillation period.

    T(A) = 4 int_0^A dy / v(y) with v from energy conservation; substituting
    y = A sin(theta) removes the turning-point singularity.  Assumes the
    potential is symmetric and monotonically confining out to A (true for
    the fitted ranges used here).
    """
    theta, w = np.polynomial.legendre.leggauss(quad_points)
    theta = 0.25 * np.pi * (theta + 1.0)
    w = w * 0.25 * np.pi
    # Symmetric average over +/-y so small odd terms do not bias the period.
    e_turn = 0.5 * (pot.energy(a) + pot.energy(-a))
    y = a * np.sin(theta)
    u = 0.5 * (pot.energy(y) + pot.energy(-y))
    v = np.sqrt(np.maximum(2.0 * (e_turn - u) / ELECTRON_MASS, 0.0))
    integrand = a * np.cos(theta) / v
    quarter_period = float(np.sum(w * integrand))
    period = 4.0 * quarter_period
    return 2.0 * np.pi / (period * pot.omega) - 1.0
