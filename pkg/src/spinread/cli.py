"""Command-line front end.

Subcommands: ``fields`` (drive-circuit field report), ``imperfections``
(residual-field table), ``optimize`` (electrode-voltage solution),
``simulate`` (Monte Carlo fidelity run), ``echo-demo`` (spin-echo
suppression of the spurious electric force).

Every run writes its outputs plus a ``manifest.json`` capturing the
resolved configuration, seed, and tool version, so the run is
reproducible from the manifest alone.  Outputs are byte-stable for fixed
(config, flags, seed); wall-clock timestamps live only in the manifest.
Errors are emitted as one JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, dynamics, pipeline, trap, wires
from .errors import SpinReadError

DEFAULT_CONFIG = Path(__file__).resolve().parent / "configs" / "default.json"


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(out_dir, args, doc, extra=None, resolved=None):
    manifest = {
        "tool": "spinread",
        "version": __version__,
        "command": args.command,
        "config_path": str(args.config),
        "output_dir": str(out_dir),
        "resolved_config": doc,
        "resolved_protocol": resolved,
        "seed": getattr(args, "seed", None),
        "trials": getattr(args, "trials", None),
        "spin": getattr(args, "spin", None),
        "timestamp_unix": time.time(),
        "outputs": extra or [],
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load(args):
    doc = cfgmod.load_document(args.config)
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        doc["trials"] = args.trials
    if getattr(args, "spin", None) is not None:
        doc["spin"] = args.spin
    return doc


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fields(args):
    doc = _load(args)
    circuit = cfgmod.circuit_from_doc(doc)
    v0 = cfgmod.wire_v0(doc)
    omega = 2.0 * math.pi * (doc.get("frequency_hz", 300e6))
    report = {
        "analytic_gradient_t_per_m": wires.analytic_gradient(circuit),
        "line_gradient_t_per_m": wires.numeric_gradient(circuit),
        "subdivided_gradient_t_per_m": wires.numeric_gradient(circuit, subdivide=True),
        "shielded_gradient_t_per_m": wires.shielded_gradient(circuit),
        "shielding_factor": circuit.shielding_factor,
        "eta": wires.eta_quadratic(circuit, v0, omega),
        "v0_volts": v0,
        "center_field_t": float(np.linalg.norm(wires.biot_savart(circuit, circuit.center))),
    }
    out = _out_dir(args)
    _write_json(out / "fields.json", report)
    _manifest(out, args, doc, extra=["fields.json"])
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_imperfections(args):
    doc = _load(args)
    circuit = cfgmod.circuit_from_doc(doc)
    magnitudes = cfgmod.imperfection_magnitudes(doc)
    if args.kinds is None:
        kinds = list(magnitudes)
    elif args.kinds.strip() == "":
        kinds = []
    else:
        kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    valid = [k.value for k in wires.ImperfectionKind]
    for k in kinds:
        if k not in valid:
            raise SpinReadError(
                f"unknown imperfection kind {k!r}; expected one of {valid}")
    rows = []
    for kind in kinds:
        spec = wires.ImperfectionSpec(wires.ImperfectionKind(kind),
                                      magnitudes[kind])
        r = wires.imperfection_analysis(circuit, spec,
                                        v0=cfgmod.wire_v0(doc))
        rows.append((kind, spec.magnitude, r.e_ratio, r.b_center * 1e6))
    out = _out_dir(args)
    path = out / "imperfections.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "magnitude", "e_ratio", "b_center_ut"])
        for row in rows:
            w.writerow([row[0], f"{row[1]:.9e}", f"{row[2]:.6e}", f"{row[3]:.6e}"])
    _manifest(out, args, doc, extra=["imperfections.csv"])
    print(path.read_text().rstrip())
    return 0


def cmd_optimize(args):
    doc = _load(args)
    layout = cfgmod.resolve_layout(doc)
    freq = doc.get("frequency_hz", 300e6)
    omega = 2.0 * math.pi * freq
    opt_range = doc.get("trap", {}).get("optimize_range_um", 5.0) * 1e-6
    sol = trap.optimize_voltages(layout, omega, fit_range=(-opt_range, opt_range))
    report = {
        "voltages_v": {e.name: v for e, v in zip(layout.electrodes, sol.voltages)},
        "group_voltages_v": list(sol.group_voltages),
        "residual_v_rms": sol.residual,
        "dac_step_v": layout.dac_step,
    }
    if sol.resulting_potential is not None:
        p = sol.resulting_potential
        report["potential"] = {
            "frequency_hz": p.omega / (2.0 * math.pi),
            "c4_per_um4": p.c4,
            "c6_per_um6": p.c6,
            "odd_flagged": p.odd_flagged,
            "fit_range_um": [p.fit_range[0] * 1e6, p.fit_range[1] * 1e6],
            "taylor_si": list(p.taylor),
        }
        report["frequency_shift_at_3um"] = trap.frequency_shift(p, 3e-6)
    out = _out_dir(args)
    _write_json(out / "voltages.json", report)
    _manifest(out, args, doc, extra=["voltages.json"])
    print(json.dumps({k: report[k] for k in report if k != "potential"},
                     indent=2, sort_keys=True))
    return 0


def cmd_simulate(args):
    doc = _load(args)
    proto = cfgmod.resolve_protocol(doc)
    report = pipeline.run_protocol(proto, sampled_outcomes=args.sampled)
    out = _out_dir(args)
    extra = []
    if args.dump_trajectory:
        state = dynamics.sample_thermal(proto.t0, proto.omega,
                                        proto.master_seed, trial=0)
        res_d = dynamics.integrate_drive(state, proto.spin,
                                         proto.drive_potential, proto.drive)
        res_a = dynamics.integrate_amplification(
            res_d.final, proto.amp_potential, proto.amplification)
        dynamics.write_trajectory_csv(res_d, out / "trajectory_drive.csv")
        dynamics.write_trajectory_csv(res_a, out / "trajectory_amp.csv")
        extra = ["trajectory_drive.csv", "trajectory_amp.csv"]
    _write_json(out / "report.json", report.to_dict())
    hist_path = out / "histogram.csv"
    with hist_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in pipeline.snr_histogram_rows(report):
            w.writerow([f"{lo:.9e}", f"{hi:.9e}", c])
    _manifest(out, args, doc,
              extra=["report.json", "histogram.csv"] + extra,
              resolved=proto.to_dict())
    print(json.dumps({
        "fidelity": report.fidelity,
        "fidelity_stderr": report.fidelity_stderr,
        "n_trials": report.n_trials,
        "n_errors": report.n_errors,
        "fraction_snr_below_1": report.fraction_snr_below_1,
        "total_time_us": report.timing["total"] * 1e6,
    }, indent=2, sort_keys=True))
    return 0


def cmd_echo_demo(args):
    doc = _load(args)
    proto = cfgmod.resolve_protocol(doc)
    drive = proto.drive
    e_ratio = args.e_ratio if args.e_ratio is not None else (
        drive.spurious_e_ratio if drive.spurious_e_ratio > 0 else 1.5)
    rabi = 2.0 * math.pi * args.rabi_hz if args.rabi_hz is not None else (
        drive.echo_rabi if drive.echo_rabi > 0 else 2.0 * math.pi * 1e6)
    demo_drive = dynamics.DriveParams(
        gradient=drive.gradient, t_drive=drive.t_drive,
        spurious_e_ratio=e_ratio, echo_rabi=rabi,
        gradient_curvature=drive.gradient_curvature)
    # the echo question is pure force cancellation; a harmonic trap keeps
    # the demo inside the potential model's validity at any force ratio
    result = dynamics.spin_echo_suppression(
        trap.TrapPotential.harmonic(proto.omega), demo_drive)
    out = _out_dir(args)
    _write_json(out / "echo.json", result)
    _manifest(out, args, doc, extra=["echo.json"])
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="spinread",
        description="Trapped-electron spin-readout protocol simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=str(DEFAULT_CONFIG),
                        help="JSON config path (default: built-in)")
        sp.add_argument("--out", default="runs/latest",
                        help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the master seed")

    sp = sub.add_parser("fields", help="drive-circuit field report")
    common(sp)
    sp.set_defaults(func=cmd_fields)

    sp = sub.add_parser("imperfections", help="residual-field table")
    common(sp)
    sp.add_argument("--kinds", default=None,
                    help="comma-separated imperfection kinds (empty string "
                         "for header-only output)")
    sp.set_defaults(func=cmd_imperfections)

    sp = sub.add_parser("optimize", help="electrode-voltage optimization")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("simulate", help="Monte Carlo readout fidelity")
    common(sp)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--spin", type=int, choices=(+1, -1), default=None)
    sp.add_argument("--sampled", action="store_true",
                    help="draw one noise outcome per trial instead of the "
                         "analytic per-trial probability")
    sp.add_argument("--dump-trajectory", action="store_true",
                    help="also write the trial-0 stage trajectories as CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("echo-demo", help="spin-echo suppression demo")
    common(sp)
    sp.add_argument("--e-ratio", type=float, default=None,
                    help="spurious electric/magnetic force ratio")
    sp.add_argument("--rabi-hz", type=float, default=None,
                    help="echo Rabi frequency in Hz")
    sp.set_defaults(func=cmd_echo_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpinReadError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "field", None):
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
