"""Interfering TEM00/TEM10 beams and the state-dependent drive they produce.

The beam model is a 1D cut along the crystal axis at the focal plane. Field
profiles are normalised to equal optical power per unit ``power``:

    u00(x) = sqrt(p00) exp(-(x - c00)^2 / w^2)
    u10(x) = sqrt(p10) 2 (x - c10) / w exp(-(x - c10)^2 / w^2)

With a frequency offset between the beams the cross term
``2 u00 u10 cos(rel_detuning t + rel_phase)`` gives an oscillating AC-Stark
gradient, largest at the TEM10 null.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from iongrad.chain_modes import CrystalSpec, EquilibriumPositions, ModeSpectrum, compute_modes
from iongrad.constants import TWO_PI
from iongrad.errors import CalibrationError
from iongrad.phase_engine import evolve_mode, gate_phases, mode_detunings, state_drives
from iongrad.chain_modes import lamb_dicke
from iongrad.qubits import CHI_SIGNS

POLARIZATIONS = ("lin_parallel", "lin_perpendicular")


@dataclass(frozen=True)
class BeamPair:
    waist: float
    power00: float = 1.0
    power10: float = 1.0
    center00: float = 0.0
    center10: float = 0.0
    rel_detuning: float = 0.0
    rel_phase: float = 0.0
    polarization: str = "lin_parallel"

    def __post_init__(self):
        if self.waist <= 0:
            raise ValueError("waist must be positive")
        if self.power00 < 0 or self.power10 < 0:
            raise ValueError("beam powers must be non-negative")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be one of {POLARIZATIONS}")

    def centered_at(self, x: float) -> "BeamPair":
        return replace(self, center00=x, center10=x)


@dataclass(frozen=True)
class DriveConfig:
    """Gate drive on one ion pair.

    ``force_amp`` holds per-ion drive scales Omega_j in s^-1; the coupling of
    ion j to mode m is ``eta_m b_jm Omega_j`` with eta from ``k_eff``. The
    force in Newtons is ``hbar * k_eff * Omega_j``.
    """

    target_ions: tuple[int, int]
    detuning: float
    n_loops: int = 1
    force_amp: tuple[float, float] = (1.0, -1.0)
    direction: str = "axial"
    target_index: int = 0
    k_eff: float = 1.0e6

    def __post_init__(self):
        i, j = self.target_ions
        if i == j:
            raise ValueError("target ions must be distinct")
        if self.detuning <= 0:
            raise ValueError("detuning must be positive")
        if self.n_loops < 1:
            raise ValueError("n_loops must be >= 1")
        if self.k_eff <= 0:
            raise ValueError("k_eff must be positive")

    @property
    def gate_time(self) -> float:
        return TWO_PI * self.n_loops / self.detuning

    @property
    def target_mode(self) -> tuple[str, int]:
        return (self.direction, self.target_index)

    def forces_newton(self) -> np.ndarray:
        from iongrad.constants import HBAR

        return HBAR * self.k_eff * np.asarray(self.force_amp)


def retarget(drive: DriveConfig, direction: str, target_index: int = 0) -> DriveConfig:
    return replace(drive, direction=direction, target_index=target_index)


# -- optics ------------------------------------------------------------------

def _profiles(beam: BeamPair, x):
    x = np.asarray(x, dtype=float)
    w = beam.waist
    s0 = (x - beam.center00) / w
    s1 = (x - beam.center10) / w
    g0 = np.exp(-s0**2)
    g1 = np.exp(-s1**2)
    u0 = np.sqrt(beam.power00) * g0
    u1 = np.sqrt(beam.power10) * 2 * s1 * g1
    du0 = -2 * s0 / w * u0
    du1 = np.sqrt(beam.power10) * (2 / w) * (1 - 2 * s1**2) * g1
    return u0, u1, du0, du1


def field_amplitude(beam: BeamPair, mode: str, x):
    u0, u1, _, _ = _profiles(beam, x)
    if mode == "tem00":
        return u0 + 0j
    if mode == "tem10":
        return u1 + 0j
    raise ValueError(f"unknown transverse mode {mode!r}")


def interference_intensity(beam: BeamPair, x, t):
    if beam.polarization != "lin_parallel":
        raise ValueError("orthogonal polarisations do not interfere in intensity; "
                         "use stark_shift with a polarisation-gradient sensitivity")
    u0, u1, _, _ = _profiles(beam, x)
    psi = beam.rel_detuning * np.asarray(t) + beam.rel_phase
    return np.abs(u0 + u1 * np.exp(1j * psi)) ** 2


def stark_shift(beam: BeamPair, x, t, sensitivity: float):
    """Differential AC-Stark shift (Hz).

    For lin_perpendicular only the cross term contributes, through the local
    polarisation rotation; ``sensitivity`` then carries the vector-shift
    coefficient.
    """
    u0, u1, _, _ = _profiles(beam, x)
    cross = 2 * u0 * u1 * np.cos(beam.rel_detuning * np.asarray(t) + beam.rel_phase)
    if beam.polarization == "lin_parallel":
        return sensitivity * (u0**2 + u1**2 + cross)
    return sensitivity * cross


def stark_gradient(beam: BeamPair, x, t, sensitivity: float):
    """Spatial derivative of :func:`stark_shift` (Hz/m)."""
    u0, u1, du0, du1 = _profiles(beam, x)
    cos = np.cos(beam.rel_detuning * np.asarray(t) + beam.rel_phase)
    dcross = 2 * (du0 * u1 + u0 * du1) * cos
    if beam.polarization == "lin_parallel":
        return sensitivity * (2 * u0 * du0 + 2 * u1 * du1 + dcross)
    return sensitivity * dcross


def oscillating_gradient_amplitude(beam: BeamPair, x, sensitivity: float):
    """Amplitude of the gradient component oscillating at ``rel_detuning``,
    signed by ``cos(rel_phase)``."""
    u0, u1, du0, du1 = _profiles(beam, x)
    return sensitivity * 2 * (du0 * u1 + u0 * du1) * np.cos(beam.rel_phase)


def drive_from_beam(beam: BeamPair, positions, targets, sensitivity: float, k_eff: float) -> np.ndarray:
    """Per-ion drive scales from a beam pair centred on each target ion.

    The deflector phase is 0 on the first ion and pi on the second, so the
    gradients alternate in sign. Omega_j = 2 pi G_j / k_eff.
    """
    out = []
    for n, ion in enumerate(targets):
        x = positions[ion]
        b = replace(beam.centered_at(x), rel_phase=beam.rel_phase + np.pi * n)
        grad = float(oscillating_gradient_amplitude(b, x, sensitivity))
        out.append(TWO_PI * grad / k_eff)
    return np.array(out)


def deflector_scan(beam: BeamPair, eq: EquilibriumPositions, ramsey_time: float, sensitivity: float,
                   scan=None, n_points: int = 801):
    """Ramsey population while sweeping each beam alone across the chain.

    Returns ``(x, pop_tem00, pop_tem10)``; the shift is evaluated at the ion
    nearest to the beam centre.
    """
    if ramsey_time <= 0:
        raise ValueError("ramsey_time must be positive")
    pos = eq.positions
    if scan is None:
        span = (pos.max() - pos.min()) if len(pos) > 1 else 0.0
        pad = 3 * beam.waist
        scan = np.linspace(pos.min() - pad - 0.1 * span, pos.max() + pad + 0.1 * span, n_points)
    scan = np.asarray(scan, dtype=float)
    nearest = pos[np.argmin(np.abs(scan[:, None] - pos[None, :]), axis=1)]
    only00 = replace(beam, power10=0.0, polarization="lin_parallel")
    only10 = replace(beam, power00=0.0, polarization="lin_parallel")
    pops = []
    for b in (only00, only10):
        shift = np.array([stark_shift(b.centered_at(x), xi, 0.0, sensitivity)
                          for x, xi in zip(scan, nearest)])
        pops.append(0.5 * (1 - np.cos(TWO_PI * shift * ramsey_time)))
    return scan, pops[0], pops[1]


def deflector_scan_csv(scan, pop00, pop10) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_m", "pop_tem00", "pop_tem10"])
    for row in zip(scan, pop00, pop10):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# -- calibration -------------------------------------------------------------

def _chi(spec, modes, drive, idx):
    return gate_phases(spec, modes, drive, mode_subset=idx).chi


def calibrate_drive(spec: CrystalSpec, modes: ModeSpectrum, drive: DriveConfig, policy: str = "target") -> DriveConfig:
    """Scale both drive amplitudes so that |chi| = pi at the gate time.

    ``policy="target"`` uses the target mode alone; ``"full"`` adds one
    correction step against the phase of every mode in ``modes``. Since the
    phases are quadratic in a common amplitude scale the correction is exact.
    Amplitudes keep their signs and are set to equal magnitude.
    """
    m = drive.target_index
    for n, ion in enumerate(drive.target_ions):
        if not 0 <= ion < spec.n_ions:
            raise CalibrationError(f"target ion {ion} outside chain of {spec.n_ions}")
        if abs(modes.vectors[ion, m]) < 1e-12:
            raise CalibrationError(
                f"ion {ion} does not participate in {modes.direction} mode {m}; "
                f"no force can drive the gate through this mode")
    signs = np.sign(drive.force_amp)
    signs[signs == 0] = 1.0
    unit = replace(drive, force_amp=tuple(float(s) for s in signs))

    # closed-form target-mode phase per unit amplitude
    eta = lamb_dicke(spec, modes, drive.k_eff)
    c = state_drives(modes, eta, drive.target_ions, unit.force_amp)[:, m]
    d = mode_detunings(modes, drive)[m]
    _, phi = evolve_mode(c, np.full(4, d), np.full(4, drive.gate_time))
    chi1 = float(CHI_SIGNS @ phi)
    if abs(chi1) < 1e-300:
        raise CalibrationError(
            f"drive on ions {drive.target_ions} produces no entangling phase on "
            f"{modes.direction} mode {m}")
    scale = np.sqrt(np.pi / abs(chi1))
    out = replace(drive, force_amp=tuple(float(s * scale) for s in signs))
    if policy == "full":
        chi = _chi(spec, modes, out, None)
        out = replace(out, force_amp=tuple(float(a * np.sqrt(np.pi / abs(chi))) for a in out.force_amp))
    elif policy != "target":
        raise ValueError(f"unknown calibration policy {policy!r}")
    return out


@dataclass(frozen=True)
class BeamCalibration:
    drive: DriveConfig
    sensitivity: float


def calibrate_force(beam: BeamPair, spec: CrystalSpec, drive: DriveConfig, *, sensitivity: float = 1.0,
                    policy: str = "target", modes: ModeSpectrum | None = None) -> BeamCalibration:
    """Calibrate the beam strength for a maximally entangling gate.

    The per-ion drive follows from the oscillating gradient of ``beam`` at
    each target ion; the returned ``sensitivity`` is the differential
    Stark coefficient that realises the calibrated amplitudes. Trading power
    between the two beams at a fixed product leaves the result unchanged.
    """
    from iongrad.chain_modes import solve_equilibrium

    modes = modes if modes is not None else compute_modes(spec, drive.direction)
    eq = solve_equilibrium(spec)
    raw = drive_from_beam(beam, eq.positions, drive.target_ions, sensitivity, drive.k_eff)
    if np.any(np.abs(raw) == 0):
        raise CalibrationError("beam produces no oscillating gradient at a target ion "
                               "(check power10 and beam centring)")
    seeded = replace(drive, force_amp=tuple(float(r) for r in raw))
    cal = calibrate_drive(spec, modes, seeded, policy=policy)
    ratio = cal.force_amp[0] / raw[0]
    beam_drive = replace(cal, force_amp=tuple(float(r * ratio) for r in raw))
    return BeamCalibration(beam_drive, sensitivity * ratio)
