"""Equilibrium positions and normal modes of a linear Coulomb crystal.

Positions are solved in the dimensionless units u = z / l with the Coulomb
length l = (q^2 / (4 pi eps0 m omega_ax^2))^(1/3). Mode frequencies follow
from the Hessian of the dimensionless potential

    V(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|

and from its transverse counterpart.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from iongrad.constants import BA138_MASS, E_CHARGE, EPS0, HBAR, TWO_PI
from iongrad.errors import SolverError, StructuralInstabilityError

DIRECTIONS = ("axial", "radial_x", "radial_y")


@dataclass(frozen=True)
class CrystalSpec:
    """Trap and ion parameters. Frequencies are angular (rad/s)."""

    n_ions: int
    omega_ax: float
    omega_rad_x: float
    omega_rad_y: float
    ion_mass: float = BA138_MASS
    charge: float = E_CHARGE

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError(f"n_ions must be >= 1, got {self.n_ions}")
        if self.omega_ax <= 0:
            raise ValueError("omega_ax must be positive")
        for name in ("omega_rad_x", "omega_rad_y"):
            if getattr(self, name) <= self.omega_ax:
                raise ValueError(f"{name} must exceed omega_ax for a linear chain")
        if self.ion_mass <= 0 or self.charge <= 0:
            raise ValueError("ion_mass and charge must be positive")

    @property
    def length_scale(self) -> float:
        return (self.charge**2 / (4 * np.pi * EPS0 * self.ion_mass * self.omega_ax**2)) ** (1 / 3)

    def omega_radial(self, direction: str) -> float:
        if direction == "radial_x":
            return self.omega_rad_x
        if direction == "radial_y":
            return self.omega_rad_y
        raise ValueError(f"not a radial direction: {direction!r}")

    def with_ions(self, n_ions: int) -> "CrystalSpec":
        return CrystalSpec(n_ions, self.omega_ax, self.omega_rad_x, self.omega_rad_y,
                           self.ion_mass, self.charge)


@dataclass(frozen=True)
class EquilibriumPositions:
    dimensionless: np.ndarray
    length_scale: float

    @property
    def positions(self) -> np.ndarray:
        """Axial coordinates in meters, ascending."""
        return self.dimensionless * self.length_scale

    @property
    def n_ions(self) -> int:
        return len(self.dimensionless)


@dataclass(frozen=True)
class ModeSpectrum:
    """Normal modes along one direction.

    ``frequencies`` are angular and COM-first: ascending for the axial
    direction, descending for the radial ones. Column ``m`` of ``vectors`` is
    the participation vector of mode ``m``.
    """

    direction: str
    frequencies: np.ndarray
    vectors: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    lamb_dicke: np.ndarray | None = None

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @property
    def com_index(self) -> int:
        return 0


def _force_residual(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def axial_hessian(u: np.ndarray) -> np.ndarray:
    """Dimensionless axial Hessian (units of m * omega_ax^2)."""
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    coupling = 2.0 / diff**3
    hess = -coupling
    np.fill_diagonal(hess, 1.0 + coupling.sum(axis=1))
    return hess


def radial_hessian(u: np.ndarray, ratio: float) -> np.ndarray:
    """Dimensionless transverse Hessian for trap-frequency ratio omega_rad / omega_ax."""
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    coupling = 1.0 / diff**3
    hess = coupling.copy()
    np.fill_diagonal(hess, ratio**2 - coupling.sum(axis=1))
    return hess


def initial_guess(n_ions: int) -> np.ndarray:
    return (np.arange(1, n_ions + 1) - (n_ions + 1) / 2) * (2.018 / n_ions**0.559)


def solve_equilibrium(spec: CrystalSpec, tol: float = 1e-12, max_iter: int = 200) -> EquilibriumPositions:
    """Damped Newton iteration on the dimensionless force balance."""
    n = spec.n_ions
    u = initial_guess(n)
    if n == 1:
        return EquilibriumPositions(np.zeros(1), spec.length_scale)
    res = _force_residual(u)
    norm = np.max(np.abs(res))
    for _ in range(max_iter):
        if norm < tol:
            break
        step = np.linalg.solve(axial_hessian(u), -res)
        lam = 1.0
        while True:
            trial = u + lam * step
            ordered = np.all(np.diff(trial) > 0)
            if ordered:
                trial_res = _force_residual(trial)
                trial_norm = np.max(np.abs(trial_res))
                if trial_norm < norm or lam < 1e-6:
                    break
            lam *= 0.5
            if lam < 1e-12:
                raise SolverError("line search stalled", norm)
        u, res, norm = trial, trial_res, trial_norm
    else:
        raise SolverError(f"no convergence after {max_iter} Newton steps", norm)
    if norm >= tol:
        raise SolverError(f"no convergence after {max_iter} Newton steps", norm)
    # exact symmetry about the origin
    u = 0.5 * (u - u[::-1])
    return EquilibriumPositions(u, spec.length_scale)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for m in range(out.shape[1]):
        col = out[:, m]
        for comp in col:
            if abs(comp) > 1e-12:
                if comp < 0:
                    out[:, m] = -col
                break
    return out


def axial_modes(spec: CrystalSpec, eq: EquilibriumPositions) -> ModeSpectrum:
    lam, vec = np.linalg.eigh(axial_hessian(eq.dimensionless))
    return ModeSpectrum("axial", spec.omega_ax * np.sqrt(lam), _fix_signs(vec), lam)


def radial_modes(spec: CrystalSpec, eq: EquilibriumPositions, axis: str = "radial_x") -> ModeSpectrum:
    ratio = spec.omega_radial(axis) / spec.omega_ax
    mu, vec = np.linalg.eigh(radial_hessian(eq.dimensionless, ratio))
    order = np.argsort(mu)[::-1]
    mu, vec = mu[order], vec[:, order]
    bad = np.flatnonzero(mu <= 0)
    if bad.size:
        m = int(bad[0])
        raise StructuralInstabilityError(axis, m, float(mu[m]))
    return ModeSpectrum(axis, spec.omega_ax * np.sqrt(mu), _fix_signs(vec), mu)


def compute_modes(spec: CrystalSpec, direction: str, eq: EquilibriumPositions | None = None) -> ModeSpectrum:
    eq = eq if eq is not None else solve_equilibrium(spec)
    if direction == "axial":
        return axial_modes(spec, eq)
    return radial_modes(spec, eq, direction)


def zigzag_ratio(n_ions: int) -> float:
    """Smallest omega_rad / omega_ax keeping an n-ion chain linear."""
    if n_ions == 1:
        return 0.0
    u = solve_equilibrium(CrystalSpec(n_ions, 1.0, 1e3, 1e3)).dimensionless
    lam_max = np.linalg.eigvalsh(axial_hessian(u)).max()
    return float(np.sqrt((lam_max - 1) / 2))


def lamb_dicke(spec: CrystalSpec, modes: ModeSpectrum, k_eff: float) -> np.ndarray:
    """Per-mode Lamb-Dicke factors with single-ion mass and unit-norm vectors.

    The coupling of ion j to mode m is ``eta[m] * modes.vectors[j, m]``.
    """
    if k_eff <= 0:
        raise ValueError("k_eff must be positive")
    return k_eff * np.sqrt(HBAR / (2 * spec.ion_mass * np.asarray(modes.frequencies)))


def with_lamb_dicke(spec: CrystalSpec, modes: ModeSpectrum, k_eff: float) -> ModeSpectrum:
    return ModeSpectrum(modes.direction, modes.frequencies, modes.vectors, modes.eigenvalues,
                        lamb_dicke(spec, modes, k_eff))


def mode_spacing_report(spec: CrystalSpec, delta: float, directions=DIRECTIONS) -> dict:
    """Nearest-mode separation from the COM mode, in units of ``delta``.

    Directions with a single ion have no neighbour and report ``None``.
    """
    eq = solve_equilibrium(spec)
    report = {}
    for direction in directions:
        modes = compute_modes(spec, direction, eq)
        freqs = modes.frequencies
        entry = {
            "com_freq_hz": float(freqs[0] / TWO_PI),
            "nearest_freq_hz": None,
            "separation_hz": None,
            "separation_in_delta": None,
        }
        if len(freqs) > 1:
            sep = abs(freqs[1] - freqs[0])
            entry.update(
                nearest_freq_hz=float(freqs[1] / TWO_PI),
                separation_hz=float(sep / TWO_PI),
                separation_in_delta=float(sep / delta),
            )
        if direction == "axial" and len(freqs) > 1:
            entry["breathing_ratio"] = float(freqs[1] / freqs[0])
        report[direction] = entry
    return report


def spectra_csv(spectra: list[ModeSpectrum]) -> str:
    """Columns ``direction, mode_index, freq_hz, b_1..b_N``."""
    n = spectra[0].vectors.shape[0]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["direction", "mode_index", "freq_hz"] + [f"b_{j + 1}" for j in range(n)])
    for spec in spectra:
        for m, freq in enumerate(spec.frequencies):
            writer.writerow([spec.direction, m, repr(float(freq / TWO_PI))]
                            + [repr(float(b)) for b in spec.vectors[:, m]])
    return buf.getvalue()
