"""Magnetic and electric fields of the symmetric gradient-drive circuits.

Two mirror-image circuits (x > 0 and x < 0) each consist of a drain wire
running along x to a junction at (+/-d, 0, 0), where the current splits
into the upper and lower halves of a source wire running along y; return
wires close each loop at |x| = return_x.  The diverging source currents
make both the magnetic field and the axial electric field vanish at the
trap center by symmetry, while their gradients add.

Magnetic fields come from exact finite-segment Biot-Savart sums, with
optional subdivision of each wire cross-section into a filament grid.
Electric fields come from uniform finite line charges on the wire paths,
with charge per length set by an isolated-wire capacitance and the local
wire voltage from the resistive drop profile (anchored so the junction
crossing points sit at ``v0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .constants import (
    BOHR_MAGNETON,
    ELECTRON_MASS,
    ELEMENTARY_CHARGE,
    EPSILON_0,
    GOLD_CONDUCTIVITY_4K,
    MU_0,
)
from .errors import SingularFieldError

_NODE_QUANTUM = 1e-12  # node-matching tolerance for Kirchhoff checks, m


@dataclass(frozen=True)
class WireSegment:
    """Straight filament from ``start`` to ``end`` carrying ``current``
    (positive along start -> end).  ``phase`` is the drive phase of the
    circuit the segment belongs to."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    current: float
    phase: float = 0.0
    circuit: int = 0

    def __post_init__(self):
        if np.allclose(self.start, self.end, atol=0.0):
            raise ValueError("degenerate wire segment")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@dataclass(frozen=True)
class WireCircuit:
    """Geometry and currents of the gradient-drive circuits."""

    segments: tuple[WireSegment, ...]
    half_separation: float = 10e-6  # d
    trap_height: float = 33e-6  # h
    wire_width: float = 10e-6
    wire_height: float = 1e-6
    i_drive: float = 1.0
    shielding_factor: float = 0.6
    e_attenuation: float = 0.45  # top-layer electrostatic attenuation
    ground_distance: float = 0.1  # isolated-wire capacitance reference
    closed: bool = True  # False for idealized open fragments (test fixtures)

    def __post_init__(self):
        if not 0.0 < self.shielding_factor <= 1.0:
            raise ValueError("shielding_factor must be in (0, 1]")
        if self.half_separation <= 0 or self.trap_height <= 0:
            raise ValueError("geometry lengths must be positive")
        if self.closed:
            _check_kirchhoff(self.segments)

    @property
    def center(self):
        return np.array([0.0, 0.0, self.trap_height])

    def with_currents_scaled(self, factor, circuit=None):
        segs = tuple(
            replace(s, current=s.current * factor)
            if circuit is None or s.circuit == circuit
            else s
            for s in self.segments
        )
        return replace(self, segments=segs)

    def shifted(self, delta, circuit=None):
        """Translate segments (of one circuit) by ``delta`` (3-vector)."""
        d = tuple(delta)
        segs = tuple(
            replace(
                s,
                start=tuple(np.add(s.start, d)),
                end=tuple(np.add(s.end, d)),
            )
            if circuit is None or s.circuit == circuit
            else s
            for s in self.segments
        )
        return replace(self, segments=segs)


def _check_kirchhoff(segments):
    """Net current into every junction must vanish."""
    nodes = {}
    for s in segments:
        a = tuple(np.round(np.asarray(s.start) / _NODE_QUANTUM).astype(np.int64))
        b = tuple(np.round(np.asarray(s.end) / _NODE_QUANTUM).astype(np.int64))
        nodes[a] = nodes.get(a, 0.0) - s.current
        nodes[b] = nodes.get(b, 0.0) + s.current
    worst = max((abs(v) for v in nodes.values()), default=0.0)
    if worst > 1e-12:
        raise ValueError(f"Kirchhoff violation: {worst:.3e} A unbalanced at a node")


def symmetric_drive_circuit(
    half_separation=10e-6,
    trap_height=33e-6,
    wire_width=10e-6,
    wire_height=1e-6,
    i_drive=1.0,
    shielding_factor=0.6,
    e_attenuation=0.45,
    source_half_length=100e-6,
    return_x=110e-6,
    include_returns=True,
    branch_imbalance=0.0,
    ground_distance=0.1,
) -> WireCircuit:
    """Build the two mirrored drive circuits.

    ``branch_imbalance`` is the current difference (A) between the upper and
    lower source branches of the x > 0 circuit (resistance-asymmetry case);
    the branch currents become i/2 +/- branch_imbalance/2 and the matching
    return legs carry the same share.  ``include_returns=False`` keeps only
    the source wires (diverging currents fed at the junctions) for
    comparison against the infinite-wire analytic gradient.
    """
    d, big_l, big_w = half_separation, source_half_length, return_x
    i = i_drive
    segs = []
    for circuit, sx in ((0, +1.0), (1, -1.0)):
        up = 0.5 * i + (0.5 * branch_imbalance if circuit == 0 else 0.0)
        lo = 0.5 * i - (0.5 * branch_imbalance if circuit == 0 else 0.0)

        def seg(p0, p1, cur, circuit=circuit, sx=sx):
            return WireSegment(
                start=(sx * p0[0], p0[1], 0.0),
                end=(sx * p1[0], p1[1], 0.0),
                current=cur,
                circuit=circuit,
            )

        # source wire halves, diverging at the junction (d, 0)
        segs.append(seg((d, 0.0), (d, +big_l), up))
        segs.append(seg((d, 0.0), (d, -big_l), lo))
        if include_returns:
            # drain from the outer node to the junction
            segs.append(seg((big_w, 0.0), (d, 0.0), i))
            # returns closing each half-loop
            segs.append(seg((d, +big_l), (big_w, +big_l), up))
            segs.append(seg((big_w, +big_l), (big_w, 0.0), up))
            segs.append(seg((d, -big_l), (big_w, -big_l), lo))
            segs.append(seg((big_w, -big_l), (big_w, 0.0), lo))
    return WireCircuit(
        segments=tuple(segs),
        half_separation=half_separation,
        trap_height=trap_height,
        wire_width=wire_width,
        wire_height=wire_height,
        i_drive=i_drive,
        shielding_factor=shielding_factor,
        e_attenuation=e_attenuation,
        ground_distance=ground_distance,
        closed=include_returns,
    )


def _segment_field(start, end, points):
    """B field per ampere of one filament at ``points`` (n, 3)."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    u = b - a
    length = np.linalg.norm(u)
    u = u / length
    r1 = points - a
    r2 = points - b
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    f = np.cross(r1, u)
    s2 = np.einsum("...i,...i", f, f)
    if np.any(n1 < 1e-15) or np.any(n2 < 1e-15):
        raise SingularFieldError("field point coincides with a filament endpoint")
    on_axis = s2 < (1e-9 * length) ** 2
    inside = on_axis & (np.einsum("...i,...i", r1, u) > 0) & (
        np.einsum("...i,...i", r2, u) < 0
    )
    if np.any(inside):
        raise SingularFieldError("field point lies on a filament")
    sine = np.einsum("...i,...i", r2, u) / n2 - np.einsum("...i,...i", r1, u) / n1
    s2 = np.where(on_axis, 1.0, s2)
    out = f * (sine / s2)[..., None]
    return np.where(on_axis[..., None], 0.0, out) * (MU_0 / (4.0 * np.pi))


def _subdivide(seg: WireSegment, width, height, n_w, n_h):
    """Split one segment into an n_w x n_h grid of parallel filaments with
    equal current shares, offset across the wire cross-section.  Wires lie
    in the z = 0 plane; the in-plane transverse direction carries the width
    and z carries the height."""
    a = np.asarray(seg.start)
    b = np.asarray(seg.end)
    u = (b - a) / np.linalg.norm(b - a)
    t = np.cross([0.0, 0.0, 1.0], u)
    t_norm = np.linalg.norm(t)
    if t_norm < 1e-12:  # vertical feed stubs: no meaningful cross-section
        return [(a, b, seg.current)]
    t = t / t_norm
    offs_w = (np.arange(n_w) + 0.5) / n_w - 0.5
    offs_h = (np.arange(n_h) + 0.5) / n_h - 0.5
    share = seg.current / (n_w * n_h)
    fils = []
    for ow in offs_w * width:
        for oh in offs_h * height:
            shift = t * ow + np.array([0.0, 0.0, oh])
            fils.append((a + shift, b + shift, share))
    return fils


def biot_savart(circuit: WireCircuit, points, subdivide=False,
                n_w=10, n_h=2, phase=None):
    """Magnetic field (T) of the circuit at ``points`` (..., 3).

    With ``subdivide`` each wire becomes an n_w x n_h filament grid over its
    width x height cross-section.  ``phase`` evaluates the field at a drive
    phase (segments weighted by cos(phase - segment.phase)); default uses
    the in-phase amplitude of every segment.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros_like(pts)
    for seg in circuit.segments:
        w = 1.0 if phase is None else math.cos(phase - seg.phase)
        if w == 0.0:
            continue
        if subdivide:
            fils = _subdivide(seg, circuit.wire_width, circuit.wire_height, n_w, n_h)
        else:
            fils = [(seg.start, seg.end, seg.current)]
        for a, b, cur in fils:
            total += _segment_field(a, b, pts) * (cur * w)
    return total.reshape(np.shape(points))


def analytic_gradient(circuit: WireCircuit) -> float:
    """Infinite-source-wire gradient dB_x/dy at the trap center, before
    shielding: mu0/(4 pi) * 2 I h / (h^2 + d^2)^(3/2)."""
    h, d = circuit.trap_height, circuit.half_separation
    return MU_0 / (4.0 * np.pi) * 2.0 * circuit.i_drive * h / (h * h + d * d) ** 1.5


def numeric_gradient(circuit: WireCircuit, subdivide=False, step=1e-9) -> float:
    """dB_x/dy at the trap center by central differences (default 1 nm)."""
    h = circuit.trap_height
    pts = np.array([[0.0, +step, h], [0.0, -step, h]])
    b = biot_savart(circuit, pts, subdivide=subdivide)
    return float((b[0, 0] - b[1, 0]) / (2.0 * step))


def shielded_gradient(circuit: WireCircuit, subdivide=True) -> float:
    """Biot-Savart gradient reduced by the top-layer shielding factor."""
    return numeric_gradient(circuit, subdivide=subdivide) * circuit.shielding_factor


def gradient_taylor(circuit: WireCircuit, order=4, half_range=8e-6,
                    shielded=True):
    """Odd polynomial model of B_x(y) near the center: coefficients g_k of
    y^k for k = 0..order from a least-squares fit along the axis.  Feeds the
    drive integrator's position-dependent force."""
    y = np.linspace(-half_range, half_range, 41)
    pts = np.stack([np.zeros_like(y), y, np.full_like(y, circuit.trap_height)], axis=-1)
    bx = biot_savart(circuit, pts)[:, 0]
    if shielded:
        bx = bx * circuit.shielding_factor
    coeffs = np.polynomial.polynomial.polyfit(y * 1e6, bx, order)
    return tuple(c * (1e6) ** k for k, c in enumerate(coeffs))


# --- electric model -------------------------------------------------------

def _capacitance_per_length(circuit: WireCircuit) -> float:
    """Isolated-wire capacitance per length above a distant ground plane,
    with effective radius half the geometric mean of the cross-section."""
    a_eff = 0.5 * math.sqrt(circuit.wire_width * circuit.wire_height)
    return 2.0 * np.pi * EPSILON_0 / np.arccosh(circuit.ground_distance / a_eff)


def _wire_resistance(circuit: WireCircuit, length) -> float:
    area = circuit.wire_width * circuit.wire_height
    return length / (GOLD_CONDUCTIVITY_4K * area)


def _voltage_profile(circuit: WireCircuit, v0):
    """Per-segment endpoint voltages on the wires, exactly linear in v0.

    The shape of the profile is the resistive-drop pattern of the actual
    segment currents, traversed outward from each circuit's junction;
    the whole pattern is then rescaled so that the junction crossing sits
    at v0 * (drain current / nominal drive current).  The reference scale
    is the nominal drain drop i_drive * R(drain), which is what the quoted
    crossing-point voltage corresponds to physically; anchoring this way
    keeps every derived field strictly proportional to v0 while letting
    current imbalances reshape the profile.  Returns (v_start, v_end) per
    segment.
    """
    by_circuit = {}
    for idx, s in enumerate(circuit.segments):
        by_circuit.setdefault(s.circuit, []).append((idx, s))
    volts = [None] * len(circuit.segments)
    for cid, items in by_circuit.items():
        # junction node: the shared start of the two source halves
        starts = {}
        for idx, s in items:
            starts.setdefault(tuple(np.round(np.asarray(s.start) / _NODE_QUANTUM)), []).append(idx)
        junction_key = max(starts, key=lambda k: len(starts[k]))
        node_v = {junction_key: 0.0}
        # Propagate drops outward from the junction.  Per-segment voltages
        # always come from the junction-side wavefront, so the loop's
        # driving EMF discontinuity lands where the wavefronts meet (the
        # outer node) instead of corrupting the return-leg profile.
        remaining = list(items)
        guard = 0
        while remaining and guard < 10 * len(items) + 10:
            guard += 1
            idx, s = remaining.pop(0)
            a = tuple(np.round(np.asarray(s.start) / _NODE_QUANTUM))
            b = tuple(np.round(np.asarray(s.end) / _NODE_QUANTUM))
            drop = s.current * _wire_resistance(circuit, s.length)
            if a in node_v:
                va, vb = node_v[a], node_v[a] - drop
                node_v.setdefault(b, vb)
            elif b in node_v:
                va, vb = node_v[b] + drop, node_v[b]
                node_v.setdefault(a, va)
            else:
                remaining.append((idx, s))
                continue
            volts[idx] = (va, vb)
        # rescale: drops + junction anchor, all proportional to v0
        drain_idx = max(range(len(items)), key=lambda j: abs(items[j][1].current))
        drain_seg = items[drain_idx][1]
        v_ref = circuit.i_drive * _wire_resistance(circuit, drain_seg.length)
        drain_share = abs(drain_seg.current) / circuit.i_drive
        scale = v0 / v_ref if v0 else 0.0
        for idx, s in items:
            va, vb = volts[idx]
            volts[idx] = (scale * (va + v_ref * drain_share),
                          scale * (vb + v_ref * drain_share))
    return volts


def _segment_potential(start, end, points):
    """Potential per unit line-charge density of a uniform finite segment."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    ell = np.linalg.norm(b - a)
    r1 = np.linalg.norm(points - a, axis=-1)
    r2 = np.linalg.norm(points - b, axis=-1)
    return np.log((r1 + r2 + ell) / (r1 + r2 - ell)) / (4.0 * np.pi * EPSILON_0)


def wire_potential(circuit: WireCircuit, points, v0):
    """Electric potential (V) of the charged wires at ``points`` in the
    trapping region, attenuated by the top-layer factor.

    Each segment carries a uniform line charge C' * mean(endpoint
    voltages).  The grounded top electrode layer partially screens the
    wire field above the chip; that screening is a fixed multiplicative
    ``e_attenuation``, the electrostatic analogue of the magnetic
    shielding factor.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cp = _capacitance_per_length(circuit)
    profile = _voltage_profile(circuit, v0)
    phi = np.zeros(pts.shape[:-1])
    for s, vv in zip(circuit.segments, profile):
        lam = cp * 0.5 * (vv[0] + vv[1])
        if lam == 0.0:
            continue
        phi += lam * _segment_potential(s.start, s.end, pts)
    return circuit.e_attenuation * phi.reshape(np.shape(points)[:-1])


def axial_e_field(circuit: WireCircuit, point, v0, step=1e-9) -> float:
    """E_y (V/m) at ``point`` from the charged wires (central difference)."""
    p = np.asarray(point, dtype=float)
    pts = np.array([p + [0, step, 0], p - [0, step, 0]])
    phi = wire_potential(circuit, pts, v0)
    return float(-(phi[0] - phi[1]) / (2.0 * step))


def eta_quadratic(circuit: WireCircuit, v0, omega, step=0.5e-6) -> float:
    """Dimensionless quadratic coefficient of the wire electric potential:
    e * dV = eta * m omega^2 y^2 / 2 along the axis, from the second axial
    derivative of the wire potential at the trap center.  Negative for the
    default geometry (the wire potential has a maximum above the crossings).
    Exactly linear in v0."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    if v0 == 0.0:
        return 0.0
    c = circuit.center
    pts = np.array([c - [0, 2 * step, 0], c - [0, step, 0], c,
                    c + [0, step, 0], c + [0, 2 * step, 0]])
    phi = wire_potential(circuit, pts, v0)
    # 5-point second derivative of the potential (volts)
    d2 = (-phi[0] + 16 * phi[1] - 30 * phi[2] + 16 * phi[3] - phi[4]) / (12 * step ** 2)
    # eta convention: e * dV(y) = eta * m omega^2 y^2 / 2 with dV the wire
    # potential in volts, so a potential maximum above the crossings gives
    # negative eta.
    return float(ELEMENTARY_CHARGE * d2 / (ELECTRON_MASS * omega ** 2))


# --- imperfection analysis ------------------------------------------------

class ImperfectionKind(Enum):
    TRAP_SHIFT_Y = "trap_shift_y"
    TRAP_SHIFT_X = "trap_shift_x"
    CIRCUIT_MISALIGN_Y = "circuit_misalign_y"
    PHASE_DIFF = "phase_diff"
    AMPLITUDE_DIFF = "amplitude_diff"
    BRANCH_IMBALANCE = "branch_imbalance"


_KIND_UNITS = {
    ImperfectionKind.TRAP_SHIFT_Y: "m",
    ImperfectionKind.TRAP_SHIFT_X: "m",
    ImperfectionKind.CIRCUIT_MISALIGN_Y: "m",
    ImperfectionKind.PHASE_DIFF: "rad",
    ImperfectionKind.AMPLITUDE_DIFF: "fraction",
    ImperfectionKind.BRANCH_IMBALANCE: "fraction",
}


@dataclass(frozen=True)
class ImperfectionSpec:
    """One symmetry-breaking imperfection: a geometric displacement (m), a
    drive phase difference (rad), or a fractional current difference."""

    kind: ImperfectionKind
    magnitude: float

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", ImperfectionKind(self.kind))
        if self.magnitude < 0:
            raise ValueError("imperfection magnitude must be >= 0")

    @property
    def units(self) -> str:
        return _KIND_UNITS[self.kind]


@dataclass(frozen=True)
class ImperfectionResult:
    kind: ImperfectionKind
    magnitude: float
    e_ratio: float  # axial electric force over the shielded gradient force
    b_center: float  # residual |B| at the trap center, T (unshielded)


def imperfection_analysis(circuit: WireCircuit, spec: ImperfectionSpec,
                          v0=2e-3, subdivide=False) -> ImperfectionResult:
    """Residual center field and spurious axial electric force for one
    imperfection.

    ``b_center`` is the raw Biot-Savart field magnitude of the perturbed
    configuration (shielding is a separate multiplicative factor applied to
    drive quantities, not to this diagnostic).  ``e_ratio`` compares the
    axial electric force to the shielded magnetic-gradient force actually
    used for the drive.

    Displacements below the wire width move the current path but not the
    conductor surfaces, so geometric misalignments (case circuit_misalign_y)
    perturb only the magnetic geometry; the charge distribution is that of
    the nominal conductors.
    """
    k = spec.kind
    delta = spec.magnitude
    scale = (circuit.half_separation if spec.units == "m"
             else 2.0 * np.pi if spec.units == "rad" else 1.0)
    if delta > 0.01 * scale:
        import warnings

        warnings.warn(f"imperfection magnitude {delta:g} {spec.units} "
                      "exceeds 1% of its geometric scale; the linearized "
                      "model degrades")
    center = circuit.center
    grad_ref = abs(shielded_gradient(circuit, subdivide=True))
    force_ref = BOHR_MAGNETON * grad_ref

    eval_point = center
    mag_circuit = circuit
    e_circuit = circuit
    quad_field = None

    if k is ImperfectionKind.TRAP_SHIFT_Y:
        eval_point = center + np.array([0.0, delta, 0.0])
    elif k is ImperfectionKind.TRAP_SHIFT_X:
        eval_point = center + np.array([delta, 0.0, 0.0])
    elif k is ImperfectionKind.CIRCUIT_MISALIGN_Y:
        # relative axial misalignment delta of the two current paths,
        # split symmetrically (+/- delta/2); the in-phase B_x parts cancel
        # and a transverse residual survives
        mag_circuit = circuit.shifted((0.0, +0.5 * delta, 0.0), circuit=0)
        mag_circuit = mag_circuit.shifted((0.0, -0.5 * delta, 0.0), circuit=1)
    elif k is ImperfectionKind.PHASE_DIFF:
        # circuit 1 off-phase by delta: in-phase field keeps cos(delta) of
        # circuit 1, and a quadrature component sin(delta) of it appears
        b0 = biot_savart(_only_circuit(circuit, 0), center, subdivide=subdivide)
        b1 = biot_savart(_only_circuit(circuit, 1), center, subdivide=subdivide)
        in_phase = b0 + b1 * math.cos(delta)
        quad_field = b1 * math.sin(delta)
        b_center = float(math.hypot(np.linalg.norm(in_phase), np.linalg.norm(quad_field)))
        ey = axial_e_field(circuit, center, v0)
        return ImperfectionResult(k, delta, abs(ELEMENTARY_CHARGE * ey) / force_ref, b_center)
    elif k is ImperfectionKind.AMPLITUDE_DIFF:
        mag_circuit = circuit.with_currents_scaled(1.0 + delta, circuit=0)
        mag_circuit = mag_circuit.with_currents_scaled(1.0 - delta, circuit=1)
        e_circuit = mag_circuit
    elif k is ImperfectionKind.BRANCH_IMBALANCE:
        mag_circuit = _with_branch_imbalance(circuit, delta * circuit.i_drive)
        e_circuit = mag_circuit
    else:  # pragma: no cover
        raise ValueError(f"unknown imperfection kind {k}")

    b = biot_savart(mag_circuit, eval_point, subdivide=subdivide)
    b_center = float(np.linalg.norm(b))
    ey = axial_e_field(e_circuit, eval_point, v0)
    e_ratio = abs(ELEMENTARY_CHARGE * ey) / force_ref
    return ImperfectionResult(k, delta, e_ratio, b_center)


def _only_circuit(circuit: WireCircuit, cid: int) -> WireCircuit:
    segs = tuple(s for s in circuit.segments if s.circuit == cid)
    return replace(circuit, segments=segs)


def _with_branch_imbalance(circuit: WireCircuit, delta_i) -> WireCircuit:
    """Rebuild with upper/lower source-branch currents i/2 +/- delta_i/2 in
    circuit 0 (and matching return legs), keeping the drain at i."""
    segs = []
    for s in circuit.segments:
        cur = s.current
        if s.circuit == 0 and abs(abs(cur) - 0.5 * circuit.i_drive) < 1e-12:
            ymid = 0.5 * (s.start[1] + s.end[1])
            cur = cur + (0.5 * delta_i if ymid > 0 else -0.5 * delta_i) * np.sign(cur)
        segs.append(replace(s, current=cur))
    return replace(circuit, segments=tuple(segs))
