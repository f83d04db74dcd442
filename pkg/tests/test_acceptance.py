"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference values come either from independent oracles (closed forms,
adaptive ODE integration, finite differences) or from reference budget
values. Tolerances are the stated ones and are not relaxed.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from iongrad.budget import assemble_budget, fidelity_vs_chain_length, pair_policy, stable_axial_frequency
from iongrad.chain_modes import CrystalSpec, axial_modes, compute_modes, solve_equilibrium, zigzag_ratio
from iongrad.cli import main
from iongrad.config import load_config
from iongrad.drive_model import (
    BeamPair,
    DriveConfig,
    calibrate_drive,
    calibrate_force,
    field_amplitude,
    stark_gradient,
    stark_shift,
)
from iongrad.experiment import (
    SequenceSpec,
    decay_fit,
    density_matrix_fidelity,
    parity_scan,
    run_sequence,
    spawn_rngs,
    state_fidelity,
    synthetic_decay_data,
)
from iongrad.lindblad import GateSetup, NoiseModel, gate_fidelity, simulate_gate
from iongrad.phase_engine import coherent_fidelity, evolve_mode, gate_phases, spectator_budget
from iongrad.qubits import BELL_TARGET

from oracles import forced_oscillator_batch

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def defaults():
    return load_config()


def _rel(a, b):
    return abs(a - b) / abs(b)


# 1 ------------------------------------------------------------------------------

def test_criterion_1_mode_math(criterion):
    t0 = time.perf_counter()
    wz = TWO_PI * 342.2e3
    spec2 = CrystalSpec(2, wz, TWO_PI * 1.3e6, TWO_PI * 1.34e6)
    f2 = compute_modes(spec2, "axial").frequencies
    err_br = _rel(f2[1] / f2[0], math.sqrt(3))
    err_com = 0.0
    for n in range(1, 17):
        # keep the radial confinement well above the zig-zag threshold for every N
        spec = CrystalSpec(n, wz, 3 * zigzag_ratio(max(n, 2)) * wz, 3.1 * zigzag_ratio(max(n, 2)) * wz)
        err_com = max(err_com, _rel(compute_modes(spec, "axial").frequencies[0], wz))
    f3 = np.sort(compute_modes(replace(spec2, n_ions=3), "axial").frequencies) / wz
    err3 = float(np.max(np.abs(f3 - np.array([1, math.sqrt(3), math.sqrt(29 / 5)]))))
    dt = time.perf_counter() - t0
    ok = err_br < 1e-10 and err_com < 1e-12 and err3 < 1e-8 and dt < 1.0
    criterion(1, ok, f"BR/COM err {err_br:.1e}, COM err {err_com:.1e} (N=1..16), N=3 err {err3:.1e}, {dt:.2f} s")


# 2 ------------------------------------------------------------------------------

def test_criterion_2_radial_identity(defaults, criterion):
    t0 = time.perf_counter()
    worst = 0.0
    base = defaults.crystal
    for n in range(1, 13):
        wz = stable_axial_frequency(base, n) if n > 1 else base.omega_ax
        spec = replace(base.with_ions(n), omega_ax=wz)
        eq = solve_equilibrium(spec)
        lam = np.sort(axial_modes(spec, eq).frequencies / wz) ** 2
        for axis, wr in (("radial_x", spec.omega_rad_x), ("radial_y", spec.omega_rad_y)):
            direct = np.sort(compute_modes(spec, axis, eq).frequencies)
            ident = np.sort(wz * np.sqrt((wr / wz) ** 2 - (lam - 1) / 2))
            worst = max(worst, float(np.max(np.abs(direct - ident) / ident)))
    dt = time.perf_counter() - t0
    criterion(2, worst < 1e-10 and dt < 5.0, f"max relative deviation {worst:.1e} over N<=12 on both axes, {dt:.2f} s")


# 3 ------------------------------------------------------------------------------

def test_criterion_3_closed_form_dynamics(criterion):
    rng = np.random.default_rng(2024)
    n = 1000
    c = rng.uniform(0.1, 5.0, n) * np.exp(1j * rng.uniform(0, TWO_PI, n))
    d = rng.uniform(-20.0, 20.0, n)
    t = rng.uniform(0.05, 3.0, n)
    t0 = time.perf_counter()
    res = [evolve_mode(ci, di, ti) for ci, di, ti in zip(c, d, t)]
    a_ref, phi_ref = forced_oscillator_batch(c, d, t)
    scale = np.abs(c) * t
    a = np.array([r[0] for r in res])
    phi = np.array([r[1] for r in res])
    worst = float(max(np.max(np.abs(a - a_ref) / scale), np.max(np.abs(phi - phi_ref) / scale**2)))
    closure = 0.0
    for k in (1, 2, 3, 4, 8):
        dk = TWO_PI * 20e3
        ck = 2.5e4
        ak, _ = evolve_mode(ck, dk, TWO_PI * k / dk)
        closure = max(closure, abs(ak) / (ck / dk))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and closure < 1e-12 and dt < 10.0
    criterion(3, ok, f"max scaled deviation {worst:.1e} over {n} cases, closure {closure:.1e}, {dt:.1f} s")


# 4 ------------------------------------------------------------------------------

def test_criterion_4_cross_engine(criterion):
    rng = np.random.default_rng(44)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        spec = CrystalSpec(n, TWO_PI * rng.uniform(0.3e6, 1.0e6), TWO_PI * 4e6, TWO_PI * 4.2e6)
        pair = tuple(int(i) for i in sorted(rng.choice(n, 2, replace=False)))
        modes = compute_modes(spec, "axial")
        drv = calibrate_drive(spec, modes, DriveConfig(pair, TWO_PI * rng.uniform(10e3, 40e3), int(rng.integers(1, 5))))
        drv = replace(drv, force_amp=tuple(a * rng.uniform(0.9, 1.1) for a in drv.force_amp))
        t = drv.gate_time * rng.uniform(0.97, 1.03)
        nbar = rng.uniform(0, 0.5)
        setup = GateSetup.build(spec, drv, NoiseModel(), nbar, modes)
        f_l = gate_fidelity(simulate_gate(setup, mechanisms=(), t=t))
        f_c = coherent_fidelity(gate_phases(spec, modes, drv, t=t, mode_subset=[0]), nbar)
        worst = max(worst, abs(f_l - f_c))
    dt = time.perf_counter() - t0
    criterion(4, worst < 1e-6 and dt < 300, f"max |F_lindblad - F_closed| {worst:.1e} over 20 calibrations, {dt:.1f} s")


# 5 ------------------------------------------------------------------------------

def test_criterion_5_lindblad_health(defaults, criterion):
    spec, noise = defaults.crystal, defaults.noise
    modes = compute_modes(spec, "axial")
    drv = calibrate_drive(spec, modes, defaults.drive)
    setup = GateSetup.build(spec, drv, noise, defaults.nbar_for("axial"), modes)
    st = simulate_gate(setup)
    n0 = setup.default_n_max()
    st5 = simulate_gate(setup, n_max=n0 + 5)
    dtr = abs(st.trace() - 1)
    mine = st.min_eigenvalue()
    df = abs(gate_fidelity(st) - gate_fidelity(st5))
    ok = dtr < 1e-8 and mine > -1e-8 and df < 1e-7
    criterion(5, ok, f"|tr-1| {dtr:.1e}, min eig {mine:.1e}, dF(n_max {n0}->{n0 + 5}) {df:.1e}")


# 6 ------------------------------------------------------------------------------

def test_criterion_6_budget_rows(defaults, criterion):
    t0 = time.perf_counter()
    b = defaults.raw.budget
    rep = assemble_budget(defaults.crystal, defaults.drive, defaults.noise, b.directions, nbar=defaults.nbar,
                          rf_pulses=b.rf_pulses, policy=b.calibration_policy)
    ax, rad = "axial", "radial_x"
    v = lambda m, d=ax: rep.row(m).values[d]  # noqa: E731
    checks = {
        "T2": (v("qubit_t2"), _rel(v("qubit_t2"), 9.6e-4) <= 0.30),
        "T1": (v("qubit_t1"), 1.1e-4 / 4 <= v("qubit_t1") <= 1.1e-4 * 4),
        "heating": (v("com_heating"), _rel(v("com_heating"), 4.0e-4) <= 0.50),
        "spectator_ax": (v("spectator_modes"), _rel(v("spectator_modes"), 2.1e-4) <= 0.50),
        "spectator_rad": (v("spectator_modes", rad), _rel(v("spectator_modes", rad), 742.4e-4) <= 0.50),
        "ratio": (v("spectator_modes", rad) / v("spectator_modes"), v("spectator_modes", rad) > 100 * v("spectator_modes")),
        "rf": (v("rf_pulses"), v("rf_pulses") == 2.4e-4 and v("rf_pulses", rad) == 2.4e-4),
        "scattering": (v("scattering"), v("scattering") == 1.2e-4 and v("scattering", rad) == 1.2e-4),
        "total_ax": (rep.totals[ax], _rel(rep.totals[ax], 29.1e-4) <= 0.30),
        "total_rad": (rep.totals[rad], _rel(rep.totals[rad], 776.4e-4) <= 0.30),
    }
    dt = time.perf_counter() - t0
    failed = [k for k, (_, ok) in checks.items() if not ok]
    detail = ", ".join(f"{k} {val:.3g}{'' if ok else ' (out of band)'}" for k, (val, ok) in checks.items())
    criterion(6, not failed and dt < 900, f"{detail}; {dt:.1f} s")


# 7 ------------------------------------------------------------------------------

def test_criterion_7_radial_cross_check(defaults, criterion):
    base = defaults.crystal
    vals = {}
    for n in (4, 8, 12):
        spec = replace(base.with_ions(n), omega_ax=stable_axial_frequency(base, n))
        pair = pair_policy(n)[0][1]
        drv = replace(defaults.drive, target_ions=pair)
        vals[n] = spectator_budget(spec, drv, "radial_x", defaults.nbar_for("radial_x"))
    near = _rel(vals[8], 7.4e-2) <= 0.50
    mono = vals[4] < vals[8] < vals[12]
    detail = ", ".join(f"N={n} {x:.3g}" for n, x in vals.items())
    criterion(7, near and mono, f"radial spectator {detail}; within 50% of 7.4e-2: {near}, monotone: {mono}")


# 8 ------------------------------------------------------------------------------

def test_criterion_8_chain_length(defaults, criterion):
    s = defaults.raw.sweep
    pts = fidelity_vs_chain_length(defaults.crystal, defaults.drive, defaults.noise, s.n_ions, direction=s.direction,
                                   nbar=defaults.nbar, policy=s.calibration_policy, rf_pulses=defaults.raw.budget.rf_pulses)
    means = [p.mean_infidelity for p in pts]
    per_ion = np.array([p.mean_breakdown()["com_heating"] / p.n_ions for p in pts])
    spread = float(np.max(np.abs(per_ion / per_ion.mean() - 1)))
    ok = all(m < 5e-3 for m in means) and spread <= 0.05 and not any(p.skipped for p in pts)
    detail = ", ".join(f"N={p.n_ions} {m:.2e}" for p, m in zip(pts, means))
    criterion(8, ok, f"{detail}; heating/N spread {spread:.1%}")


# 9 ------------------------------------------------------------------------------

def test_criterion_9_analysis_pipeline(criterion):
    t0 = time.perf_counter()
    spec = CrystalSpec(2, TWO_PI * 30e6, TWO_PI * 90e6, TWO_PI * 96e6)
    modes = compute_modes(spec, "axial")
    drv = calibrate_drive(spec, modes, DriveConfig((0, 1), TWO_PI * 20e3, 4))
    setup = GateSetup.build(spec, drv, NoiseModel(), 0.0, modes)
    phases = np.linspace(0, TWO_PI, 24, endpoint=False)
    amp = parity_scan(run_sequence(setup, SequenceSpec(1)), phases).amplitude
    amp_err = abs(abs(amp) - 1)

    rng = np.random.default_rng(9)
    identity_err = 0.0
    for _ in range(50):
        w = rng.dirichlet(np.ones(4))
        # Bell-diagonal states built around the gate's target Bell state
        b = BELL_TARGET
        basis = [b, np.array([b[0], 0, 0, -b[3]]), np.array([0, 1, 1, 0]) / math.sqrt(2),
                 np.array([0, 1, -1, 0]) / math.sqrt(2)]
        rho = sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, basis))
        scan = parity_scan(rho, phases)
        f_formula = state_fidelity(scan.populations, scan.amplitude).fidelity
        identity_err = max(identity_err, abs(f_formula - density_matrix_fidelity(rho)))

    hits, est = 0, []
    for r in spawn_rngs(99, 100):
        fit = decay_fit(synthetic_decay_data(3e-3, 0.004, n_shots=200, rng=r), n_shots=200)
        est.append(fit.epsilon)
        hits += abs(fit.epsilon - 3e-3) <= 3 * fit.epsilon_err
    est = np.array(est)
    bias_z = abs(est.mean() - 3e-3) / (est.std(ddof=1) / math.sqrt(len(est)))
    dt = time.perf_counter() - t0
    ok = amp_err < 1e-10 and identity_err < 1e-10 and hits >= 95 and bias_z < 3 and dt < 120
    criterion(9, ok, f"||A|-1| {amp_err:.1e}, formula-F vs rho-F {identity_err:.1e}, "
                     f"decay within 3 sigma {hits}/100, mean eps {est.mean():.2e} ({bias_z:.1f} SE), {dt:.1f} s")


# 10 -----------------------------------------------------------------------------

def test_criterion_10_drive_model(criterion):
    w = 1e-6
    rng = np.random.default_rng(10)
    grad_err = 0.0
    for _ in range(200):
        beam = BeamPair(w, rng.uniform(0.2, 2), rng.uniform(0.2, 2), rel_detuning=TWO_PI * 1e6,
                        rel_phase=rng.uniform(0, TWO_PI))
        x, t = rng.uniform(-2 * w, 2 * w), rng.uniform(0, 1e-6)
        h = 1e-9 * w
        fd = (stark_shift(beam, x + h, t, 1.0) - stark_shift(beam, x - h, t, 1.0)) / (2 * h)
        an = stark_gradient(beam, x, t, 1.0)
        # relative to the gradient scale of this beam: a 1e-9 w step leaves a
        # roundoff floor near 1e-7 of that scale, too coarse for pointwise
        # ratios where the gradient crosses zero
        scale = np.max(np.abs(stark_gradient(beam, np.linspace(-3 * w, 3 * w, 601), t, 1.0)))
        grad_err = max(grad_err, abs(fd - an) / scale)
    beam = BeamPair(w, 1.0, 2.0)
    xs = np.linspace(0, 3 * w, 301)
    sym = (field_amplitude(beam, "tem10", 0.0) == 0
           and np.array_equal(field_amplitude(beam, "tem00", xs), field_amplitude(beam, "tem00", -xs))
           and np.array_equal(field_amplitude(beam, "tem10", xs), -field_amplitude(beam, "tem10", -xs)))
    spec = CrystalSpec(2, TWO_PI * 1e6, TWO_PI * 3e6, TWO_PI * 3.2e6)
    modes = compute_modes(spec, "axial")
    drv = DriveConfig((0, 1), TWO_PI * 20e3, 4)
    chi = [gate_phases(spec, modes, calibrate_force(BeamPair(w, p0, 1 / p0), spec, drv, modes=modes).drive).chi
           for p0 in (1.0, 3.0, 0.25)]
    trade = max(abs(c - chi[0]) / abs(chi[0]) for c in chi)
    ok = grad_err < 1e-6 and sym and trade < 1e-10
    criterion(10, ok, f"gradient vs FD {grad_err:.1e}, null/mirror exact {sym}, power trade-off {trade:.1e}")


# 11 -----------------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path, criterion):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["budget", "--out", str(d), "--seed", "7"]) == 0
        assert main(["sweep", "--out", str(d), "--seed", "7"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    same = outs[0] == outs[1] and len(outs[0]) >= 5
    criterion(11, same, f"{len(outs[0])} files compared: {', '.join(sorted(outs[0]))}")
