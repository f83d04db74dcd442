"""Closed-form phase-space dynamics of the sigma_z x sigma_z light-shift gate.

For each two-qubit basis state i and motional mode m the interaction-picture
Hamiltonian is ``hbar (c_im e^{i d_m t} a^dag + h.c.)`` with constant drive
c_im, so the propagator is a displacement times a phase:

    alpha(t) = (c / d) (1 - e^{i d t})
    phi(t)   = (|c| / d)^2 (d t - sin d t)

phi is the signed phase-space area ``Im int alpha* dalpha``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from iongrad.chain_modes import CrystalSpec, ModeSpectrum, compute_modes, lamb_dicke
from iongrad.qubits import CHI_SIGNS, LABELS, Z_VALUES, frame_fidelity

_SMALL_ARG = 0.1


def _area_kernel(x):
    """(x - sin x) / x^2, stable near zero."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SMALL_ARG
    xs = x[small]
    x2 = xs * xs
    out[small] = xs * (1 / 6 - x2 * (1 / 120 - x2 * (1 / 5040 - x2 * (1 / 362880 - x2 / 39916800))))
    xl = x[~small]
    out[~small] = (xl - np.sin(xl)) / xl**2
    return out


def evolve_mode(c, delta_m, t):
    """Displacement and geometric phase after driving for time ``t``.

    Broadcasts over array arguments. ``delta_m = 0`` is handled through the
    small-argument expansions, so the resonant limit ``alpha = -i c t`` needs
    no special casing by the caller.
    """
    c = np.asarray(c, dtype=complex)
    delta_m = np.asarray(delta_m, dtype=float)
    t = np.asarray(t, dtype=float)
    x = delta_m * t
    # (1 - e^{ix}) / d = -i t (e^{ix} - 1) / (i x)
    small = np.abs(x) < 1e-8
    ratio = np.where(small, 1.0 + 0.5j * x, np.expm1(1j * x) / (1j * np.where(small, 1.0, x)))
    alpha = -1j * c * t * ratio
    phi = np.abs(c) ** 2 * t**2 * _area_kernel(x)
    if alpha.ndim == 0:
        return complex(alpha), float(phi)
    return alpha, phi


def trajectory(c, delta_m, times):
    alpha, phi = evolve_mode(np.full(len(times), c), np.full(len(times), delta_m), np.asarray(times))
    return alpha, phi


@dataclass(frozen=True)
class GatePhases:
    """Per-state phases and residual displacements at the evaluation time.

    Arrays are indexed ``[state]`` and ``[state, mode]`` with states ordered as
    :data:`iongrad.qubits.LABELS`.
    """

    phases: np.ndarray
    alphas: np.ndarray
    drives: np.ndarray
    detunings: np.ndarray
    mode_indices: np.ndarray
    time: float

    @property
    def chi(self) -> float:
        return float(CHI_SIGNS @ self.phases)

    def phase(self, label: str) -> float:
        return float(self.phases[LABELS.index(label)])

    def as_dict(self) -> dict:
        return {
            "time_s": self.time,
            "phases": {lab: float(p) for lab, p in zip(LABELS, self.phases)},
            "chi": self.chi,
            "residual_alpha": {
                lab: [[float(a.real), float(a.imag)] for a in row]
                for lab, row in zip(LABELS, self.alphas)
            },
            "mode_indices": [int(m) for m in self.mode_indices],
        }


def state_drives(modes: ModeSpectrum, eta: np.ndarray, targets, amplitudes) -> np.ndarray:
    """c[i, m] = sum_j eta_m b_jm Omega_j z_j(i) over the two target ions."""
    b = modes.vectors[list(targets), :]  # (2, n_modes)
    weights = (np.asarray(amplitudes, dtype=float)[:, None] * b) * eta[None, :]
    return Z_VALUES @ weights


def mode_detunings(modes: ModeSpectrum, drive) -> np.ndarray:
    """Drive frequency minus mode frequency, with the drive red of the target mode."""
    drive_freq = modes.frequencies[drive.target_index] - drive.detuning
    return drive_freq - modes.frequencies


def gate_phases(spec: CrystalSpec, modes: ModeSpectrum, drive, *, t: float | None = None,
                mode_subset=None) -> GatePhases:
    """Accumulated phases for all basis states at ``t`` (default: gate time)."""
    t = drive.gate_time if t is None else t
    eta = lamb_dicke(spec, modes, drive.k_eff)
    idx = np.arange(modes.n_modes) if mode_subset is None else np.asarray(mode_subset, dtype=int)
    c = state_drives(modes, eta, drive.target_ions, drive.force_amp)[:, idx]
    d = mode_detunings(modes, drive)[idx]
    alpha, phi = evolve_mode(c, np.broadcast_to(d, c.shape), np.full(c.shape, t))
    return GatePhases(phi.sum(axis=1), alpha, c, d, idx, float(t))


def coherent_density(phases: GatePhases, nbar) -> np.ndarray:
    """Reduced two-qubit state after the gate acting on |++> with thermal modes.

    rho_ij = 1/4 exp(i(Phi_i - Phi_j)) prod_m exp(i Im(a_jm* a_im)) exp(-|a_im - a_jm|^2 (nbar_m + 1/2))
    """
    nbar = np.broadcast_to(np.asarray(nbar, dtype=float), (len(phases.mode_indices),))
    a = phases.alphas
    ai = a[:, None, :]
    aj = a[None, :, :]
    cross = np.sum(np.imag(np.conj(aj) * ai), axis=2)
    damp = np.sum(np.abs(ai - aj) ** 2 * (nbar + 0.5), axis=2)
    dphi = phases.phases[:, None] - phases.phases[None, :]
    return 0.25 * np.exp(1j * (dphi + cross) - damp)


def coherent_fidelity(phases: GatePhases, nbar) -> float:
    return frame_fidelity(coherent_density(phases, nbar))


def spectator_budget(spec: CrystalSpec, drive, direction: str, nbar, policy: str = "target") -> float:
    """Coherent infidelity from all modes of one direction with the drive
    recalibrated on that direction's target mode."""
    from iongrad.drive_model import calibrate_drive, retarget

    modes = compute_modes(spec, direction)
    drv = calibrate_drive(spec, modes, retarget(drive, direction), policy=policy)
    return 1.0 - coherent_fidelity(gate_phases(spec, modes, drv), nbar)


def trajectories_csv(spec: CrystalSpec, modes: ModeSpectrum, drive, n_points: int = 400,
                     mode_index: int | None = None) -> str:
    """Per-state trajectories of one mode: ``state, t_s, re_alpha, im_alpha, phi``."""
    m = drive.target_index if mode_index is None else mode_index
    eta = lamb_dicke(spec, modes, drive.k_eff)
    c = state_drives(modes, eta, drive.target_ions, drive.force_amp)[:, m]
    d = mode_detunings(modes, drive)[m]
    times = np.linspace(0.0, drive.gate_time, n_points)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "t_s", "re_alpha", "im_alpha", "phi"])
    for lab, ci in zip(LABELS, c):
        alpha, phi = trajectory(ci, d, times)
        for ti, ai, pi in zip(times, alpha, phi):
            w.writerow([lab, repr(float(ti)), repr(float(ai.real)), repr(float(ai.imag)), repr(float(pi))])
    return buf.getvalue()
