"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 physics or convergence
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from iongrad import __version__
from iongrad.budget import assemble_budget, fidelity_vs_chain_length, sweep_csv
from iongrad.chain_modes import DIRECTIONS, compute_modes, mode_spacing_report, solve_equilibrium, spectra_csv
from iongrad.config import Resolved, load_config
from iongrad.drive_model import calibrate_drive, calibrate_force, deflector_scan, deflector_scan_csv, retarget
from iongrad.errors import CalibrationError, ConfigError, PhysicsError, TruncationError
from iongrad.experiment import (
    SequenceSpec,
    decay_fit,
    decay_table_csv,
    density_matrix_fidelity,
    parity_scan,
    residual_csv,
    residual_spin_motion,
    run_sequence,
    spawn_rngs,
    state_fidelity,
)
from iongrad.lindblad import GateSetup, NoiseModel, gate_fidelity, simulate_gate
from iongrad.phase_engine import coherent_fidelity, gate_phases, trajectories_csv

log = logging.getLogger("iongrad")

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_IO = 0, 2, 3, 4


class Writer:
    """Collects outputs under one directory; honours the csv/json format switch."""

    def __init__(self, out: Path, fmt: str):
        self.out = Path(out)
        self.fmt = fmt
        self.written: list[Path] = []

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def csv(self, name: str, text: str):
        if self.fmt in ("csv", "both"):
            self._write(name, text)

    def json(self, name: str, obj):
        if self.fmt in ("json", "both"):
            self._write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def text(self, name: str, text: str):
        self._write(name, text)


def _direction(arg: str | None, default: str) -> str:
    if arg is None:
        return default
    return "radial_x" if arg == "radial" else arg


def _calibrated(res: Resolved, direction: str, policy: str | None = None):
    modes = compute_modes(res.crystal, direction)
    policy = policy or res.raw.drive.calibration_policy
    drive = calibrate_drive(res.crystal, modes, retarget(res.drive, direction, res.drive.target_index), policy=policy)
    return modes, drive


# -- subcommands ---------------------------------------------------------------

def cmd_modes(res: Resolved, w: Writer, args=None):
    eq = solve_equilibrium(res.crystal)
    spectra = [compute_modes(res.crystal, d, eq) for d in DIRECTIONS]
    w.csv("spectra.csv", spectra_csv(spectra))
    report = mode_spacing_report(res.crystal, res.drive.detuning, DIRECTIONS)
    checks = {}
    for s in spectra:
        err = float(np.max(np.abs(s.vectors.T @ s.vectors - np.eye(s.n_modes))))
        checks[s.direction] = err
        log.info("%s: %d modes, orthonormality error %.2e", s.direction, s.n_modes, err)
    w.json("mode_report.json", {"spacing": _plain(report), "orthonormality_error": checks,
                                "positions_m": eq.positions.tolist()})
    return report


def cmd_gate(res: Resolved, w: Writer, args=None):
    direction = _direction(getattr(args, "direction", None), res.drive.direction)
    modes, drive = _calibrated(res, direction)
    nbar = res.nbar_for(direction)
    ph = gate_phases(res.crystal, modes, drive)
    f_closed = coherent_fidelity(ph, nbar)
    ideal = GateSetup.build(res.crystal, drive, NoiseModel(), nbar, modes)
    f_lind_ideal = gate_fidelity(simulate_gate(ideal, mechanisms=()))
    noisy = GateSetup.build(res.crystal, drive, res.noise, nbar, modes)
    state = simulate_gate(noisy)
    f_lind = gate_fidelity(state)
    try:
        beam_cal = calibrate_force(res.beam, res.crystal, drive, sensitivity=res.stark_sensitivity,
                                   policy=res.raw.drive.calibration_policy, modes=modes)
        beam = {"stark_sensitivity_hz": beam_cal.sensitivity, "force_amp": list(beam_cal.drive.force_amp)}
    except CalibrationError as exc:
        beam = {"error": str(exc)}
    w.csv("trajectories.csv", trajectories_csv(res.crystal, modes, drive))
    w.json("phases.json", ph.as_dict())
    summary = {
        "direction": direction,
        "gate_time_s": drive.gate_time,
        "chi": ph.chi,
        "fidelity_closed_form": f_closed,
        "fidelity_lindblad_noiseless": f_lind_ideal,
        "fidelity_lindblad": f_lind,
        "lindblad_diagnostics": state.diagnostics(),
        "calibration": {
            "policy": res.raw.drive.calibration_policy,
            "force_amp": list(drive.force_amp),
            "force_newton": drive.forces_newton().tolist(),
            "beam": beam,
        },
    }
    w.json("gate_summary.json", _plain(summary))
    log.info("t_gate = %.1f us, F(closed form) = %.6f, F(Lindblad) = %.6f",
             drive.gate_time * 1e6, f_closed, f_lind)
    return summary


def cmd_budget(res: Resolved, w: Writer, args=None):
    b = res.raw.budget
    rep = assemble_budget(res.crystal, res.drive, res.noise, b.directions, nbar=res.nbar,
                          rf_pulses=b.rf_pulses, policy=b.calibration_policy)
    w.text("budget.txt", rep.to_text())
    w.csv("budget.csv", rep.to_csv())
    w.json("budget.json", rep.as_dict())
    sys.stdout.write(rep.to_text())
    return rep


def cmd_sweep(res: Resolved, w: Writer, args=None):
    s = res.raw.sweep
    n_list = getattr(args, "n_list", None) or s.n_ions
    pts = fidelity_vs_chain_length(res.crystal, res.drive, res.noise, n_list, direction=s.direction,
                                   nbar=res.nbar, policy=s.calibration_policy, rf_pulses=res.raw.budget.rf_pulses)
    w.csv("sweep.csv", sweep_csv(pts))
    w.json("sweep.json", [{"n_ions": p.n_ions, "mean_infidelity": p.mean_infidelity,
                           "pairs": [[lab, list(ij)] for lab, ij in p.pairs], "totals": list(p.totals),
                           "skipped": [[lab, list(ij), why] for lab, ij, why in p.skipped]} for p in pts])
    return pts


def cmd_parity(res: Resolved, w: Writer, args=None):
    e = res.raw.experiment
    direction = _direction(getattr(args, "direction", None), res.drive.direction)
    modes, drive = _calibrated(res, direction)
    setup = GateSetup.build(res.crystal, drive, res.noise, res.nbar_for(direction), modes)
    rngs = spawn_rngs(e.rng_seed, 1 + len(e.n_gates))
    phases = np.linspace(0.0, 2 * math.pi, e.parity_points, endpoint=False)

    rho1 = run_sequence(setup, SequenceSpec(1, e.echo, n_shots=e.n_shots, rng_seed=e.rng_seed), rf_error=e.rf_error)
    exact = parity_scan(rho1, phases)
    sampled = parity_scan(rho1, phases, n_shots=e.n_shots, rng=rngs[0])
    w.csv("parity_exact.csv", exact.to_csv())
    w.csv("parity_sampled.csv", sampled.to_csv())

    rows = []
    for k, rng in zip(e.n_gates, rngs[1:]):
        rho = run_sequence(setup, SequenceSpec(k, e.echo, n_shots=e.n_shots, rng_seed=e.rng_seed), rf_error=e.rf_error)
        p = parity_scan(rho, phases, n_shots=e.n_shots, rng=rng)
        # SPAM as an independent readout flip per qubit; closure populations are sampled too
        s = res.noise.spam_error
        even = p.populations * ((1 - s) ** 2 + s**2) + (1 - p.populations) * 2 * s * (1 - s)
        pops = rng.binomial(e.n_shots, float(np.clip(even, 0, 1))) / e.n_shots
        fe = state_fidelity(pops, p.amplitude * (1 - 2 * s) ** 2)
        sig = math.hypot(0.5 * math.sqrt(max(pops * (1 - pops), 0) / e.n_shots), 0.5 * p.amplitude_err)
        rows.append((k, fe.fidelity, sig if sig > 0 else 1.0 / (e.n_shots + 1)))
    w.csv("decay.csv", decay_table_csv(rows))
    summary = {"single_gate": {"exact": exact.summary(), "sampled": sampled.summary(),
                               "fidelity_exact": state_fidelity(exact.populations, exact.amplitude).fidelity,
                               "fidelity_density_matrix": density_matrix_fidelity(rho1)}}
    if len(set(e.n_gates)) >= 3:
        fit = decay_fit(rows, model=e.decay_model)
        summary["decay_fit"] = fit.summary()
        w.json("decay_fit.json", fit.summary())
    w.json("parity_summary.json", _plain(summary))
    return summary


def cmd_scan(res: Resolved, w: Writer, args=None):
    e = res.raw.experiment
    direction = _direction(getattr(args, "direction", None), res.drive.direction)
    modes, drive = _calibrated(res, direction)
    setup = GateSetup.build(res.crystal, drive, res.noise, res.nbar_for(direction), modes)
    period = 2 * math.pi / drive.detuning
    t0 = drive.gate_time
    times = np.linspace(t0 - e.residual_span_loops * period, t0 + e.residual_span_loops * period, e.residual_points)
    rng = spawn_rngs(e.rng_seed, 1)[0]
    rows = residual_spin_motion(setup, times, n_shots=e.n_shots, rng=rng)
    exact = residual_spin_motion(setup, times)
    w.csv("residual_sampled.csv", residual_csv(rows))
    w.csv("residual_exact.csv", residual_csv(exact))
    eq = solve_equilibrium(res.crystal)
    x, p00, p10 = deflector_scan(res.beam, eq, res.raw.beams.ramsey_time_s, res.stark_sensitivity,
                                 n_points=res.raw.beams.scan_points)
    w.csv("deflector_scan.csv", deflector_scan_csv(x, p00, p10))
    best = min(exact, key=lambda r: r[1])
    summary = {"gate_time_s": t0, "min_infidelity_time_s": best[0], "min_infidelity": best[1]}
    w.json("scan_summary.json", summary)
    return summary


COMMANDS = {
    "modes": cmd_modes,
    "gate": cmd_gate,
    "budget": cmd_budget,
    "sweep": cmd_sweep,
    "parity": cmd_parity,
    "scan": cmd_scan,
}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _hint(exc: PhysicsError) -> str:
    if isinstance(exc, TruncationError):
        return "hint: the Fock space is too small; lower nbar or the drive strength, or raise n_max"
    if isinstance(exc, CalibrationError):
        return "hint: choose target ions that participate in the target mode, or another mode"
    return ""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run config (default: the shipped operating point)")
    common.add_argument("--out", type=Path, default=None, help="output directory (default: outputs.directory)")
    common.add_argument("--seed", type=int, default=None, help="override experiment.rng_seed")
    common.add_argument("--format", choices=("csv", "json", "both"), default=None)
    common.add_argument("--plots", action="store_true", help="also write SVG plots of the CSV outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="iongrad", description="Gradient light-shift gate simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("modes", parents=[common], help="normal-mode spectra and spacing report")
    for name, text in (("gate", "phase-space trajectories, phases and fidelities"),
                       ("parity", "parity scans and concatenated-gate decay"),
                       ("scan", "residual spin-motion scan and deflector scan")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--direction", choices=("axial", "radial", "radial_x", "radial_y"), default=None)
    sub.add_parser("budget", parents=[common], help="error budget table")
    sw = sub.add_parser("sweep", parents=[common], help="infidelity versus chain length")
    sw.add_argument("--n-list", type=int, nargs="+", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["experiment"] = {"rng_seed": args.seed}
    try:
        res = load_config(args.config, overrides or None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(res.raw.outputs.directory)
    fmt = args.format or res.raw.outputs.format
    w = Writer(out, fmt)
    try:
        COMMANDS[args.command](res, w, args)
        if args.plots or res.raw.outputs.plots:
            from iongrad.plots import plot_outputs

            for path in plot_outputs(out):
                w.written.append(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        hint = _hint(exc)
        if hint:
            print(hint, file=sys.stderr)
        return EXIT_PHYSICS
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in w.written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
