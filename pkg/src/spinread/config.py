"""JSON configuration documents: schema v1 parsing and resolution into the
module parameter objects.

One canonical reproduction config ships in ``configs/default.json``; every
physical default equals the headline protocol value and every field is
overridable.  Lengths in config files carry unit suffixes in their key
names (_um, _m, _s, _hz, _v) and are converted here; everything internal
is SI.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from . import detection, pipeline, trap, wires
from .dynamics import AmplificationParams, DriveParams
from .errors import ConfigError

SCHEMA_VERSION = 1


def _get(doc, field, default=None, required=False):
    cur = doc
    for part in field.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"missing required config field '{field}'",
                                  field=field)
            return default
        cur = cur[part]
    return cur


def _number(doc, field, default=None, required=False, positive=False):
    v = _get(doc, field, default=default, required=required)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config field '{field}' must be a number",
                          field=field)
    if positive and v <= 0:
        raise ConfigError(f"config field '{field}' must be positive",
                          field=field)
    return float(v)


def load_document(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {version}",
                          field="version")
    return doc


def layout_from_doc(doc) -> trap.ElectrodeLayout:
    """Electrode layout from its JSON form: either {"default": {kwargs}} or
    an explicit electrode list with rectangle extents in meters."""
    if "default" in doc:
        kw = dict(doc["default"])
        for key in ("center_half_width", "row_depth", "trap_height"):
            um_key = key + "_um"
            if um_key in kw:
                kw[key] = kw.pop(um_key) * 1e-6
        return trap.default_layout(**kw)
    electrodes = []
    for i, e in enumerate(doc.get("electrodes", [])):
        try:
            electrodes.append(trap.Electrode(
                name=e.get("name", f"E{i + 1}"),
                x_min=float(e["x_min_m"]),
                x_max=float(e["x_max_m"]),
                y_min=float(e["y_min_m"]),
                y_max=float(e["y_max_m"]),
                group=int(e.get("group", i)),
            ))
        except KeyError as exc:
            raise ConfigError(
                f"electrode {i}: missing field {exc.args[0]}",
                field=f"electrodes[{i}].{exc.args[0]}") from exc
    if not electrodes:
        raise ConfigError("layout has no electrodes", field="electrodes")
    return trap.ElectrodeLayout(
        electrodes=tuple(electrodes),
        trap_height=_number(doc, "trap_height_m", 33e-6),
        dac_bits=int(_get(doc, "dac_bits", 16)),
        dac_range=_number(doc, "dac_range_v", 10.0),
    )


def circuit_from_doc(doc) -> wires.WireCircuit:
    c = doc.get("circuit", {})
    if "segments" in c:
        segs = []
        for i, s in enumerate(c["segments"]):
            try:
                segs.append(wires.WireSegment(
                    start=tuple(float(v) for v in s["start_m"]),
                    end=tuple(float(v) for v in s["end_m"]),
                    current=float(s["current_a"]),
                    phase=float(s.get("phase_rad", 0.0)),
                    circuit=int(s.get("circuit", 0)),
                ))
            except KeyError as exc:
                raise ConfigError(
                    f"segment {i}: missing field {exc.args[0]}",
                    field=f"circuit.segments[{i}].{exc.args[0]}") from exc
        return wires.WireCircuit(
            segments=tuple(segs),
            half_separation=_number(c, "half_separation_um", 10.0) * 1e-6,
            trap_height=_number(c, "trap_height_um", 33.0) * 1e-6,
            wire_width=_number(c, "wire_width_um", 10.0) * 1e-6,
            wire_height=_number(c, "wire_height_um", 1.0) * 1e-6,
            i_drive=_number(c, "i_drive_a", 1.0),
            shielding_factor=_number(c, "shielding_factor", 0.6),
            e_attenuation=_number(c, "e_attenuation", 0.45),
            ground_distance=_number(c, "ground_distance_m", 0.1),
        )
    return wires.symmetric_drive_circuit(
        half_separation=_number(c, "half_separation_um", 10.0) * 1e-6,
        trap_height=_number(c, "trap_height_um", 33.0) * 1e-6,
        wire_width=_number(c, "wire_width_um", 10.0) * 1e-6,
        wire_height=_number(c, "wire_height_um", 1.0) * 1e-6,
        i_drive=_number(c, "i_drive_a", 1.0),
        shielding_factor=_number(c, "shielding_factor", 0.6),
        e_attenuation=_number(c, "e_attenuation", 0.45),
        source_half_length=_number(c, "source_half_length_um", 100.0) * 1e-6,
        return_x=_number(c, "return_x_um", 110.0) * 1e-6,
        ground_distance=_number(c, "ground_distance_m", 0.1),
    )


def wire_v0(doc) -> float:
    return _number(doc, "circuit.v0_volts", 2e-3)


def _resolve_t0(doc, omega):
    from . import dynamics

    cooling = doc.get("cooling", {})
    scheme = cooling.get("scheme", "parametric_swap")
    if scheme == "fixed":
        t0 = _number(cooling, "t0_k", required=True)
    elif scheme in ("parametric_swap", "adiabatic_ramp"):
        t_env = _number(cooling, "environment_temperature_k", 4.0)
        f_ref = _number(cooling, "reference_frequency_hz", 3.0e9,
                        positive=True)
        t0 = dynamics.cooled_temperature(t_env, omega,
                                         2.0 * math.pi * f_ref, scheme)
    else:
        raise ConfigError(
            f"unknown cooling scheme {scheme!r} (expected parametric_swap, "
            "adiabatic_ramp, or fixed)", field="cooling.scheme")
    return t0, _number(cooling, "duration_s", pipeline.DEFAULT_COOL_TIME)


def _resolve_potentials(doc, omega):
    t = doc.get("trap", {})
    source = t.get("source", "normalized")
    drive_range = _number(t, "drive_fit_range_um", 10.0) * 1e-6
    amp_range = _number(t, "amp_fit_range_um", 100.0) * 1e-6
    if source == "normalized":
        drive_pot = trap.TrapPotential.from_normalized(
            omega,
            c4=_number(t, "drive_c4_per_um4", pipeline.DEFAULT_DRIVE_C4),
            c6=_number(t, "drive_c6_per_um6", pipeline.DEFAULT_DRIVE_C6),
            fit_range=(-drive_range, drive_range))
        amp_pot = trap.TrapPotential.from_normalized(
            omega,
            c4=_number(t, "amp_c4_per_um4", pipeline.DEFAULT_AMP_C4),
            c6=_number(t, "amp_c6_per_um6", pipeline.DEFAULT_AMP_C6),
            fit_range=(-amp_range, amp_range))
        return drive_pot, amp_pot, omega
    if source == "layout":
        layout = resolve_layout(doc)
        opt_range = _number(t, "optimize_range_um", 5.0) * 1e-6
        sol = trap.optimize_voltages(layout, omega,
                                     fit_range=(-opt_range, opt_range))
        drive_pot = trap.fit_taylor(layout, sol.voltages,
                                    (-drive_range, drive_range))
        amp_pot = trap.fit_taylor(layout, sol.voltages,
                                  (-amp_range, amp_range))
        # one secular frequency everywhere: the drive-range curvature
        return drive_pot, amp_pot.with_omega(drive_pot.omega), drive_pot.omega
    raise ConfigError(f"unknown trap source {source!r} (expected "
                      "'normalized' or 'layout')", field="trap.source")


def resolve_layout(doc) -> trap.ElectrodeLayout:
    t = doc.get("trap", {})
    if "layout_file" in t:
        return layout_from_doc(load_document(t["layout_file"]))
    return layout_from_doc(t.get("layout", {"default": {}}))


def resolve_protocol(doc) -> pipeline.ProtocolConfig:
    """Materialize a ProtocolConfig from a parsed config document."""
    omega = 2.0 * math.pi * _number(doc, "frequency_hz", 300e6, positive=True)
    drive_pot, amp_pot, omega = _resolve_potentials(doc, omega)

    d = doc.get("drive", {})
    gradient = d.get("gradient_t_per_m", 91.0)
    curvature = d.get("gradient_curvature_t_per_m3", "from_circuit")
    if gradient == "from_circuit" or curvature == "from_circuit":
        g = wires.gradient_taylor(circuit_from_doc(doc))
        if gradient == "from_circuit":
            gradient = g[1]
        if curvature == "from_circuit":
            curvature = g[3]
    drive = DriveParams(
        gradient=float(gradient),
        t_drive=_number(d, "t_drive_s", 20e-6, positive=True),
        spurious_e_ratio=_number(d, "spurious_e_ratio", 0.0),
        echo_rabi=2.0 * math.pi * _number(d, "echo_rabi_hz", 0.0),
        gradient_curvature=float(curvature),
    )

    a = doc.get("amplification", {})
    amp = AmplificationParams(
        epsilon=_number(a, "epsilon", 0.1),
        t_amp=_number(a, "t_amp_s", 60e-9, positive=True),
    )

    det = doc.get("detection", {})
    gamma_t = _number(det, "gamma_t_det", 4.0, positive=True)
    circuit = detection.circuit_params(
        r=_number(det, "resistance_ohm", 160e3, positive=True),
        d_eff=_number(det, "d_eff_um", 66.0, positive=True) * 1e-6,
        omega=omega,
        t_electrons=_number(det, "temperature_k", 4.0, positive=True),
    )
    if gamma_t != 4.0:
        circuit = detection.circuit_params(
            r=circuit.r, d_eff=circuit.d_eff, omega=omega,
            t_electrons=circuit.t_electrons, t_det=gamma_t / circuit.gamma)

    t0, cool_time = _resolve_t0(doc, omega)
    return pipeline.ProtocolConfig(
        omega=omega,
        t0=t0,
        drive_potential=drive_pot,
        amp_potential=amp_pot,
        drive=drive,
        amplification=amp,
        circuit=circuit,
        cool_time=cool_time,
        n_trials=int(_get(doc, "trials", 100_000)),
        master_seed=int(_get(doc, "seed", 20260810)),
        spin=int(_get(doc, "spin", +1)),
    )


IMPERFECTION_DEFAULTS = {
    "trap_shift_y": 0.1e-6,
    "trap_shift_x": 0.1e-6,
    "circuit_misalign_y": 0.1e-6,
    "phase_diff": 2.0 * math.pi / 1000.0,
    "amplitude_diff": 1e-3,
    "branch_imbalance": 1e-3,
}

_IMPERFECTION_KEYS = {
    "trap_shift_y": "trap_shift_y_um",
    "trap_shift_x": "trap_shift_x_um",
    "circuit_misalign_y": "circuit_misalign_y_um",
    "phase_diff": "phase_diff_rad",
    "amplitude_diff": "amplitude_diff_fraction",
    "branch_imbalance": "branch_imbalance_fraction",
}


def imperfection_magnitudes(doc):
    """Per-kind magnitudes (SI) from the config, with the standard table
    values as defaults."""
    section = doc.get("imperfections", {})
    out = {}
    for kind, default in IMPERFECTION_DEFAULTS.items():
        key = _IMPERFECTION_KEYS[kind]
        if key in section:
            v = _number(section, key)
            out[kind] = v * 1e-6 if key.endswith("_um") else v
        else:
            out[kind] = default
    return out
