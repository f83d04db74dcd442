"""Master-equation simulation of the gate on two qubits and the target mode.

In a frame rotating with the mode detuning d the drive Hamiltonian is time
independent,

    H / hbar = d a^dag a + sum_i (c_i a^dag + c_i^* a) |i><i|,

and the frame transformation exp(-i d t a^dag a) acts on motion only, so the
reduced qubit state is identical in both frames (and the full state as well
whenever d t is a multiple of 2 pi). The Liouvillian is therefore constant and
the state is propagated with a sparse matrix exponential.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from iongrad.chain_modes import CrystalSpec, ModeSpectrum, compute_modes, lamb_dicke
from iongrad.errors import ModelInconsistencyError, TruncationError
from iongrad.phase_engine import mode_detunings, state_drives
from iongrad.qubits import BELL_TARGET, SIGMA_MINUS, SZ, frame_fidelity, on_qubit, overlap, plus_plus

MECHANISMS = ("qubit_t1", "qubit_t2", "motional_decoherence", "com_heating")


@dataclass(frozen=True)
class NoiseModel:
    """Decoherence inputs. Times in s, rates in 1/s; ``inf`` disables a channel.

    ``t1_branching``: ``"symmetric"`` flips each qubit up and down, each at
    rate 1/t1; ``"decay"`` only relaxes |1> -> |0> at rate 1/t1.
    ``dephasing``: ``"independent"`` per-qubit sigma_z, or ``"collective"``.
    """

    t1: float = math.inf
    t2: float = math.inf
    motional_coherence: float = math.inf
    motional_coherence_radial: float | None = None
    heating_rate_per_ion: float = 0.0
    heating_rate_per_ion_radial: float | None = None
    breathing_heating_factor: float = 1.0
    n_ions: int | None = None
    scattering_rayleigh: float = 0.0
    scattering_raman: float = 0.0
    spam_error: float = 0.0
    t1_branching: str = "symmetric"
    dephasing: str = "independent"

    def __post_init__(self):
        for name in ("t1", "t2", "motional_coherence"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.heating_rate_per_ion < 0:
            raise ValueError("heating rate must be non-negative")
        if self.t1_branching not in ("symmetric", "decay"):
            raise ValueError("t1_branching must be 'symmetric' or 'decay'")
        if self.dephasing not in ("independent", "collective"):
            raise ValueError("dephasing must be 'independent' or 'collective'")

    @property
    def t1_flip_rate(self) -> float:
        return 0.0 if math.isinf(self.t1) else 1.0 / self.t1

    @property
    def pure_dephasing_rate(self) -> float:
        """Rate of the sigma_z jump operator; coherence decays as exp(-2 rate t)."""
        if math.isinf(self.t2):
            return 0.0
        # transverse decay already supplied by the t1 channel
        t1_part = self.t1_flip_rate if self.t1_branching == "symmetric" else 0.5 * self.t1_flip_rate
        rate = 0.5 * (1.0 / self.t2 - t1_part)
        if rate < -1e-15:
            limit = "t1" if self.t1_branching == "symmetric" else "2*t1"
            raise ModelInconsistencyError(
                f"t2={self.t2} s exceeds {limit} (t1={self.t1} s, {self.t1_branching} branching): "
                f"negative pure-dephasing rate")
        return max(rate, 0.0)

    def motional_dephasing_rate(self, direction: str = "axial") -> float:
        tau = self.motional_coherence
        if direction != "axial" and self.motional_coherence_radial is not None:
            tau = self.motional_coherence_radial
        # a^dag a at rate g damps the 0/1 Fock coherence as exp(-g t / 2)
        return 0.0 if math.isinf(tau) else 2.0 / tau

    def scattering_rate(self) -> float:
        return self.scattering_rayleigh + self.scattering_raman


def mode_heating_rate(noise: NoiseModel, spec: CrystalSpec, modes: ModeSpectrum, target_index: int = 0) -> float:
    """Heating rate (quanta/s) of the driven mode.

    The COM rate is the per-ion rate times the ion number. Radial modes scale
    by omega_ax / omega_mode (flat electric-field noise) unless a radial
    per-ion rate is given; the breathing mode takes the configured factor.
    """
    n_ions = noise.n_ions if noise.n_ions is not None else spec.n_ions
    if modes.direction == "axial":
        rate = noise.heating_rate_per_ion * n_ions
        if target_index == 1:
            rate *= noise.breathing_heating_factor
        return rate
    if noise.heating_rate_per_ion_radial is not None:
        return noise.heating_rate_per_ion_radial * n_ions
    return noise.heating_rate_per_ion * n_ions * spec.omega_ax / modes.frequencies[target_index]


@dataclass(frozen=True)
class Channel:
    mechanism: str
    name: str
    rate: float
    operator: sp.csr_matrix


def _ladder(n_levels: int):
    a = sp.diags(np.sqrt(np.arange(1, n_levels)), 1, format="csr", dtype=complex)
    return a


def build_jump_operators(noise: NoiseModel, mode_nbar_dot: float, n_max: int, *, direction: str = "axial",
                         mechanisms=MECHANISMS) -> list[Channel]:
    """Collapse operators on the (two qubits) x (Fock 0..n_max) space.

    Zero-rate channels are omitted.
    """
    nl = n_max + 1
    a = _ladder(nl)
    im = sp.identity(nl, format="csr", dtype=complex)
    iq = sp.identity(4, format="csr", dtype=complex)
    chans = []

    def add(mech, name, rate, op):
        if mech in mechanisms and rate > 0:
            chans.append(Channel(mech, name, float(rate), sp.csr_matrix(op)))

    g1 = noise.t1_flip_rate
    for q in (0, 1):
        low = sp.kron(on_qubit(SIGMA_MINUS, q), im)
        add("qubit_t1", f"decay_q{q}", g1, low)
        if noise.t1_branching == "symmetric":
            add("qubit_t1", f"excite_q{q}", g1, low.conj().T)
    gz = noise.pure_dephasing_rate
    if noise.dephasing == "independent":
        for q in (0, 1):
            add("qubit_t2", f"dephase_q{q}", gz, sp.kron(on_qubit(SZ, q), im))
    else:
        # same single-qubit coherence decay, fully correlated noise
        add("qubit_t2", "dephase_collective", gz,
            sp.kron(on_qubit(SZ, 0) + on_qubit(SZ, 1), im) / np.sqrt(2))
    add("motional_decoherence", "motional_dephasing", noise.motional_dephasing_rate(direction),
        sp.kron(iq, a.conj().T @ a))
    add("com_heating", "heating_up", mode_nbar_dot, sp.kron(iq, a.conj().T))
    add("com_heating", "heating_down", mode_nbar_dot, sp.kron(iq, a))
    return chans


def _liouvillian(h: sp.spmatrix, channels) -> sp.csr_matrix:
    """Row-major vectorisation: vec(A rho B) = (A kron B^T) vec(rho)."""
    n = h.shape[0]
    eye = sp.identity(n, format="csr", dtype=complex)
    L = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for ch in channels:
        op = ch.operator
        opd = op.conj().T
        ld = (opd @ op).tocsr()
        L = L + ch.rate * (sp.kron(op, op.conj()) - 0.5 * sp.kron(ld, eye) - 0.5 * sp.kron(eye, ld.T))
    return sp.csr_matrix(L)


def gate_hamiltonian(c: np.ndarray, detuning: float, n_max: int) -> sp.csr_matrix:
    """Rotating-frame Hamiltonian (units of hbar, rad/s)."""
    nl = n_max + 1
    a = _ladder(nl)
    ad = a.conj().T
    h = sp.kron(sp.identity(4), detuning * (ad @ a))
    for i, ci in enumerate(c):
        proj = sp.csr_matrix(([1.0], ([i], [i])), shape=(4, 4))
        h = h + sp.kron(proj, ci * ad + np.conj(ci) * a)
    return sp.csr_matrix(h)


def thermal_state(nbar: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if nbar <= 0:
        p = (n == 0).astype(float)
    else:
        p = (nbar / (1 + nbar)) ** n / (1 + nbar)
    return np.diag(p / p.sum())


def choose_n_max(nbar: float, alpha_max: float) -> int:
    return int(math.ceil(nbar + 6 * math.sqrt(nbar + 1) + 4 * alpha_max + 4))


@dataclass
class OpenSystemState:
    rho: np.ndarray
    n_max: int
    time: float
    frame_detuning: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, int]:
        return (4, self.n_max + 1)

    def reduced(self) -> np.ndarray:
        nl = self.n_max + 1
        return np.einsum("iaja->ij", self.rho.reshape(4, nl, 4, nl))

    def motional_populations(self) -> np.ndarray:
        nl = self.n_max + 1
        return np.real(np.einsum("iaib->ab", self.rho.reshape(4, nl, 4, nl)).diagonal())

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def leakage(self) -> float:
        return float(self.motional_populations()[-2:].sum())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def diagnostics(self) -> dict:
        return {
            "time_s": self.time,
            "n_max": self.n_max,
            "trace": self.trace(),
            "purity": self.purity(),
            "gate_fidelity": gate_fidelity(self),
            "bell_fidelity": bell_fidelity(self),
            "top_fock_leakage": self.leakage(),
            "min_eigenvalue": self.min_eigenvalue(),
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True)

    def dump_text(self) -> str:
        """Row-major matrix dump, one row per line, ``re,im`` pairs separated by spaces."""
        lines = [f"# dims 4x{self.n_max + 1} time_s {self.time!r}"]
        for row in self.rho:
            lines.append(" ".join(f"{v.real!r},{v.imag!r}" for v in row))
        return "\n".join(lines) + "\n"


def evolve(h: sp.spmatrix, channels, rho0: np.ndarray, t: float, *, n_max: int,
           times=None, check_truncation: bool = True):
    """Propagate ``rho0`` to time ``t`` (or every entry of ``times``).

    Raises :class:`TruncationError` if more than 1e-6 of the population sits in
    the two highest Fock levels at the output time.
    """
    dim = h.shape[0]
    L = _liouvillian(h, channels)
    v0 = rho0.reshape(-1).astype(complex)
    if times is None:
        vs = [expm_multiply(L * t, v0)]
        ts = [t]
    else:
        ts = list(times)
        vs = []
        prev_t, v = 0.0, v0
        for ti in ts:
            v = expm_multiply(L * (ti - prev_t), v) if ti != prev_t else v
            vs.append(v)
            prev_t = ti
    states = []
    for ti, v in zip(ts, vs):
        rho = v.reshape(dim, dim)
        rho = 0.5 * (rho + rho.conj().T)
        st = OpenSystemState(rho, n_max, float(ti))
        if check_truncation:
            leak = st.leakage()
            if leak > 1e-6:
                raise TruncationError(leak, n_max)
        states.append(st)
    return states[0] if times is None else states


def bell_fidelity(state) -> float:
    """Overlap of the reduced two-qubit state with (|00> - i|11>)/sqrt(2)."""
    rho = state.reduced() if isinstance(state, OpenSystemState) else np.asarray(state)
    return overlap(rho, BELL_TARGET)


def gate_fidelity(state) -> float:
    """Gate-frame fidelity of a post-gate state prepared from |++>."""
    rho = state.reduced() if isinstance(state, OpenSystemState) else np.asarray(state)
    return frame_fidelity(rho)


@dataclass(frozen=True)
class GateSetup:
    """Everything needed to simulate one gate on its target mode."""

    spec: CrystalSpec
    modes: ModeSpectrum
    drive: object
    noise: NoiseModel
    nbar: float

    @classmethod
    def build(cls, spec, drive, noise, nbar, modes=None):
        modes = modes if modes is not None else compute_modes(spec, drive.direction)
        return cls(spec, modes, drive, noise, float(nbar))

    def target_drives(self) -> np.ndarray:
        eta = lamb_dicke(self.spec, self.modes, self.drive.k_eff)
        return state_drives(self.modes, eta, self.drive.target_ions, self.drive.force_amp)[:, self.drive.target_index]

    def target_detuning(self) -> float:
        return float(mode_detunings(self.modes, self.drive)[self.drive.target_index])

    def alpha_max(self) -> float:
        c = np.abs(self.target_drives())
        d = abs(self.target_detuning())
        if d == 0:
            return float(c.max() * self.drive.gate_time)
        return float(2 * c.max() / d)

    def default_n_max(self) -> int:
        return choose_n_max(self.nbar, self.alpha_max())

    def heating_rate(self) -> float:
        return mode_heating_rate(self.noise, self.spec, self.modes, self.drive.target_index)


def simulate_gate(setup: GateSetup, *, mechanisms=MECHANISMS, t: float | None = None, n_max: int | None = None,
                  rho_qubits: np.ndarray | None = None, times=None):
    """Run the gate from ``rho_qubits`` (default |++><++|) x thermal motion."""
    n_max = setup.default_n_max() if n_max is None else n_max
    t = setup.drive.gate_time if t is None else t
    h = gate_hamiltonian(setup.target_drives(), setup.target_detuning(), n_max)
    chans = build_jump_operators(setup.noise, setup.heating_rate(), n_max,
                                 direction=setup.modes.direction, mechanisms=mechanisms)
    if rho_qubits is None:
        psi = plus_plus()
        rho_qubits = np.outer(psi, psi.conj())
    rho0 = np.kron(rho_qubits, thermal_state(setup.nbar, n_max))
    out = evolve(h, chans, rho0, t, n_max=n_max, times=times)
    return out


def infidelity_contribution(setup: GateSetup, mechanism: str, *, n_max: int | None = None) -> float:
    """Gate infidelity added by one mechanism, all other rates zeroed."""
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    base = gate_fidelity(simulate_gate(setup, mechanisms=(), n_max=n_max))
    with_ch = gate_fidelity(simulate_gate(setup, mechanisms=(mechanism,), n_max=n_max))
    return max(0.0, base - with_ch)
