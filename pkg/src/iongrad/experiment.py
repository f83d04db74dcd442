"""Measurement-pipeline emulation: echoed gate sequences, parity scans,
Bell-state fidelity and SPAM-free gate error from concatenated gates."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from iongrad.errors import FitError
from iongrad.lindblad import (
    MECHANISMS,
    GateSetup,
    build_jump_operators,
    evolve,
    gate_fidelity,
    gate_hamiltonian,
    thermal_state,
)
from iongrad.qubits import SX, SY, SZ, collective_rotation, on_qubit, parity, populations


@dataclass(frozen=True)
class SequenceSpec:
    n_gates: int = 1
    echo: bool = True
    analysis_phase: float | None = None
    n_shots: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_gates < 1:
            raise ValueError("n_gates must be >= 1")
        if self.n_shots < 1:
            raise ValueError("n_shots must be >= 1")


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent streams for ``n`` replications: SeedSequence(seed).spawn(n)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def closing_phase(n_gates: int) -> float:
    """Phase of the final pi/2 pulse mapping the output onto (|00> - i|11>)/sqrt(2).

    Odd concatenations alternate the sign of the accumulated entangling
    phase (mod 2 pi), which the closing pulse absorbs.
    """
    return math.pi * (((n_gates - 1) // 2) % 2)


def _depolarize(rho: np.ndarray, p: float, n_motion: int) -> np.ndarray:
    if p <= 0:
        return rho
    im = np.eye(n_motion)
    for q in (0, 1):
        acc = (1 - 0.75 * p) * rho
        for pauli in (SX, SY, SZ):
            P = np.kron(on_qubit(pauli, q), im)
            acc = acc + 0.25 * p * (P @ rho @ P.conj().T)
        rho = acc
    return rho


def run_sequence(setup: GateSetup, seq: SequenceSpec, *, mechanisms=MECHANISMS, stark_shift: float = 0.0,
                 rf_error: float = 0.0, n_max: int | None = None, return_full: bool = False):
    """Final two-qubit density matrix after the echoed gate sequence.

    R(pi/2) - n_gates x [half gate - R(pi) - half gate] - R(pi/2, closing)
    - optional analysis R(pi/2, phi). Without echo the gate is not split.
    ``stark_shift`` (rad/s) adds an equal single-qubit light shift
    ``stark_shift/2 (Z1 + Z2)`` during the gate; ``rf_error`` is a per-pulse
    single-qubit depolarising probability.
    """
    drive = setup.drive
    if seq.echo and drive.n_loops % 2:
        raise ValueError("echo needs an even number of loops to split the gate")
    n_max = setup.default_n_max() if n_max is None else n_max
    nl = n_max + 1
    h = gate_hamiltonian(setup.target_drives(), setup.target_detuning(), n_max)
    if stark_shift:
        zsum = on_qubit(SZ, 0) + on_qubit(SZ, 1)
        h = h + sp.kron(sp.csr_matrix(0.5 * stark_shift * zsum), sp.identity(nl))
    chans = build_jump_operators(setup.noise, setup.heating_rate(), n_max,
                                 direction=setup.modes.direction, mechanisms=mechanisms)
    im = np.eye(nl)

    def pulse(rho, theta, phase):
        U = np.kron(collective_rotation(theta, phase), im)
        return _depolarize(U @ rho @ U.conj().T, rf_error, nl)

    psi0 = np.zeros(4, dtype=complex)
    psi0[0] = 1.0
    rho = np.kron(np.outer(psi0, psi0.conj()), thermal_state(setup.nbar, n_max))
    rho = pulse(rho, math.pi / 2, 0.0)
    t_half = drive.gate_time / 2
    for _ in range(seq.n_gates):
        if seq.echo:
            rho = evolve(h, chans, rho, t_half, n_max=n_max).rho
            rho = pulse(rho, math.pi, 0.0)
            rho = evolve(h, chans, rho, t_half, n_max=n_max).rho
        else:
            rho = evolve(h, chans, rho, drive.gate_time, n_max=n_max).rho
    rho = pulse(rho, math.pi / 2, closing_phase(seq.n_gates) if seq.echo else 0.0)
    if seq.analysis_phase is not None:
        rho = pulse(rho, math.pi / 2, seq.analysis_phase)
    red = np.einsum("iaja->ij", rho.reshape(4, nl, 4, nl))
    return (red, rho) if return_full else red


# -- parity and fidelity -------------------------------------------------------

def analysis_probabilities(rho: np.ndarray, phi: float) -> np.ndarray:
    U = collective_rotation(math.pi / 2, phi)
    return populations(U @ rho @ U.conj().T)


@dataclass(frozen=True)
class ParityScan:
    phases: np.ndarray
    parities: np.ndarray
    errors: np.ndarray
    amplitude: float
    amplitude_err: float
    offset: float
    phase_offset: float
    populations: float
    n_shots: int | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phi_rad", "parity", "parity_err"])
        for row in zip(self.phases, self.parities, self.errors):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "amplitude_err": self.amplitude_err,
            "offset": self.offset,
            "phase_offset": self.phase_offset,
            "p00_plus_p11": self.populations,
            "n_shots": self.n_shots,
        }


def fit_parity(phases, parities, errors=None):
    """Weighted linear fit of P = a sin 2phi + b cos 2phi + c.

    Both qubits see the analysis phase, so the parity oscillates at twice
    the pulse phase. Returns (|A|, sigma_|A|, c, phase offset).
    """
    phases = np.asarray(phases, float)
    y = np.asarray(parities, float)
    X = np.column_stack([np.sin(2 * phases), np.cos(2 * phases), np.ones_like(phases)])
    if errors is None:
        w = np.ones_like(y)
    else:
        err = np.asarray(errors, float)
        floor = err[err > 0].min() if np.any(err > 0) else 1.0
        w = 1.0 / np.where(err > 0, err, floor)
    Xw, yw = X * w[:, None], y * w
    coef, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < 3:
        raise FitError("parity phases do not determine a sinusoid (need >= 3 distinct 2*phi values)")
    resid = yw - Xw @ coef
    a, b, c = coef
    amp = float(np.hypot(a, b))
    if errors is None:
        dof = max(len(y) - 3, 1)
        s2 = float(resid @ resid) / dof
    else:
        s2 = 1.0
    cov = s2 * np.linalg.inv(Xw.T @ Xw)
    if amp > 0:
        g = np.array([a / amp, b / amp, 0.0])
        amp_err = float(np.sqrt(max(g @ cov @ g, 0.0)))
    else:
        amp_err = float(np.sqrt(max(cov[0, 0], 0.0)))
    if not np.isfinite(amp):
        raise FitError("parity fit did not converge", float(resid @ resid))
    return amp, amp_err, float(c), float(math.atan2(b, a))


def parity_scan(rho: np.ndarray, phases, *, n_shots: int | None = None, rng: np.random.Generator | None = None) -> ParityScan:
    """Parity versus analysis phase for the state ``rho`` before the analysis pulse.

    With ``n_shots`` each point is sampled from a multinomial over the four
    outcomes and carries the error bar sqrt((1 - P^2) / N).
    """
    phases = np.asarray(phases, float)
    if len(phases) < 8:
        raise ValueError("parity scan needs at least 8 phase points")
    # an evenly spaced grid without its endpoint still covers a full period
    if np.ptp(phases) * len(phases) / (len(phases) - 1) < math.pi - 1e-9:
        raise ValueError("parity scan must span at least one period (pi in analysis phase)")
    probs = [analysis_probabilities(rho, phi) for phi in phases]
    if n_shots is None:
        par = np.array([parity(p) for p in probs])
        err = np.zeros_like(par)
        amp, amp_err, off, ph = fit_parity(phases, par)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        counts = [rng.multinomial(n_shots, p / p.sum()) for p in probs]
        par = np.array([parity(c / n_shots) for c in counts])
        err = np.sqrt((1 - par**2) / n_shots)
        # weights from the fitted curve rather than the sampled points: sample
        # variances vanish at |P| = 1 and would bias |A| upwards
        amp, amp_err, off, ph = fit_parity(phases, par)
        for _ in range(3):
            model = amp * np.sin(2 * phases + ph) + off
            sig = np.maximum(np.sqrt(np.clip(1 - model**2, 0, 1) / n_shots), 1.0 / (n_shots + 1))
            amp, amp_err, off, ph = fit_parity(phases, par, sig)
    pops = populations(rho)
    return ParityScan(phases, par, err, amp, amp_err, off, ph, float(pops[0] + pops[3]), n_shots)


@dataclass(frozen=True)
class FidelityEstimate:
    fidelity: float
    clamped: bool


def state_fidelity(populations_00_11: float, amplitude: float) -> FidelityEstimate:
    """F = (P00 + P11)/2 + |A|/2, clamped to [0, 1]."""
    f = 0.5 * populations_00_11 + 0.5 * abs(amplitude)
    c = min(1.0, max(0.0, f))
    return FidelityEstimate(c, c != f)


def density_matrix_fidelity(rho: np.ndarray) -> float:
    """Overlap with the best Bell state (|00> + e^{i theta}|11>)/sqrt(2)."""
    p = populations(rho)
    return float(0.5 * (p[0] + p[3]) + abs(rho[0, 3]))


# -- concatenated-gate decay fit ----------------------------------------------

DECAY_MODELS = ("exponential", "depolarizing")


@dataclass(frozen=True)
class DecayFit:
    epsilon: float
    epsilon_err: float
    epsilon_ci_low: float
    epsilon_ci_high: float
    spam: float
    spam_err: float
    chi2_red: float
    model: str
    degenerate: bool = False
    params: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "epsilon_ci_low": self.epsilon_ci_low,
            "epsilon_ci_high": self.epsilon_ci_high,
            "spam": self.spam,
            "chi2_red": self.chi2_red,
            "model": self.model,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _exp_model(k, s, eps):
    return s * np.exp(-eps * k)


def _dep_model(k, s, p):
    return 0.75 * s * p**k + 0.25


def decay_fit(data, *, model: str = "exponential", n_shots: int | None = None, z: float = 1.96) -> DecayFit:
    """Fit fidelities of concatenated gates.

    ``data`` is a sequence of ``(n_gates, F, sigma)``. The exponential model
    F(k) = s exp(-eps k) reports eps as the per-gate error and 1 - s as the
    SPAM loss. The depolarizing model F(k) = 3/4 s p^k + 1/4 reports
    eps = 3/4 (1 - p). With ``n_shots`` the weights are iterated from the
    model prediction, which avoids the bias of per-point sample variances.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("data must be rows of (n_gates, F, sigma)")
    k, y, sig = arr.T
    if len(np.unique(k)) < 3:
        raise ValueError("decay fit needs at least 3 distinct gate counts")
    if model == "exponential":
        f, p0 = _exp_model, [max(y[0], 1e-3), 1e-3]
        bounds = ([0.0, -1.0], [2.0, 10.0])
    elif model == "depolarizing":
        f, p0 = _dep_model, [1.0, 0.99]
        bounds = ([0.0, 0.0], [2.0, 1.5])
    else:
        raise ValueError(f"unknown decay model {model!r}")

    weighted = np.all(sig > 0) or n_shots is not None
    sigma = sig if np.all(sig > 0) else None
    try:
        popt, pcov = curve_fit(f, k, y, p0=p0, sigma=sigma, absolute_sigma=weighted, bounds=bounds,
                               xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
        if n_shots is not None:
            for _ in range(20):
                pred = np.clip(f(k, *popt), 1e-9, 1 - 1e-9)
                sigma = np.maximum(np.sqrt(pred * (1 - pred) / n_shots), 1.0 / (n_shots + 1))
                new, pcov = curve_fit(f, k, y, p0=popt, sigma=sigma, absolute_sigma=True, bounds=bounds,
                                      xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
                done = np.allclose(new, popt, rtol=1e-12, atol=1e-15)
                popt = new
                if done:
                    break
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"decay fit failed: {exc}") from exc
    resid = y - f(k, *popt)
    dof = max(len(k) - 2, 1)
    chi2 = float(np.sum((resid / sigma) ** 2) / dof) if sigma is not None else float(resid @ resid / dof)
    perr = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else np.full(2, np.nan)
    s, s_err = float(popt[0]), float(perr[0])
    if model == "exponential":
        eps, eps_err = float(popt[1]), float(perr[1])
    else:
        eps, eps_err = float(0.75 * (1 - popt[1])), float(0.75 * perr[1])
    if not np.isfinite(eps_err):
        eps_err = 0.0 if sigma is None and np.allclose(resid, 0) else float("nan")
    lo, hi = eps - z * eps_err, eps + z * eps_err
    degenerate = (not np.isfinite(eps_err)) or lo < 0
    return DecayFit(eps, eps_err, lo, hi, 1.0 - s, s_err, chi2, model, degenerate,
                    {"scale": s, "rate" if model == "exponential" else "p": float(popt[1])})


def synthetic_decay_data(epsilon: float, spam: float, n_gates=(1, 3, 5, 7, 9), n_shots: int | None = 200,
                         rng: np.random.Generator | None = None):
    """Fidelities F(k) = (1 - spam) exp(-epsilon k), optionally with binomial projection noise."""
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for k in n_gates:
        f_true = (1 - spam) * math.exp(-epsilon * k)
        if n_shots is None:
            rows.append((k, f_true, 0.0))
            continue
        f_hat = rng.binomial(n_shots, f_true) / n_shots
        sig = math.sqrt(f_hat * (1 - f_hat) / n_shots)
        if sig == 0:
            sig = 1.0 / (n_shots + 1)
        rows.append((k, f_hat, sig))
    return rows


def decay_table_csv(data) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_gates", "fidelity", "sigma"])
    for k, f, s in data:
        w.writerow([int(k), repr(float(f)), repr(float(s))])
    return buf.getvalue()


# -- residual spin-motion entanglement ----------------------------------------

def residual_spin_motion(setup: GateSetup, times, *, mechanisms=MECHANISMS, n_shots: int | None = None,
                         rng: np.random.Generator | None = None, n_max: int | None = None):
    """Bell-state infidelity versus gate duration around loop closure.

    Rows are ``(t, infidelity, error_bar)``. Sampled points with zero
    observed errors carry the rule-of-succession bound 1/(N + 1).
    """
    from iongrad.lindblad import simulate_gate

    times = sorted(float(t) for t in times)
    states = simulate_gate(setup, mechanisms=mechanisms, times=times, n_max=n_max)
    rows = []
    rng = rng if rng is not None else np.random.default_rng(0)
    for t, st in zip(times, states):
        infid = max(0.0, 1.0 - gate_fidelity(st))
        if n_shots is None:
            rows.append((t, infid, 0.0))
            continue
        errors = rng.binomial(n_shots, min(infid, 1.0))
        est = errors / n_shots
        bar = math.sqrt(est * (1 - est) / n_shots) if errors else 1.0 / (n_shots + 1)
        rows.append((t, est, bar))
    return rows


def residual_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s", "infidelity", "error_bar"])
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
