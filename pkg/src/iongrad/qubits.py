"""Two-qubit basis conventions, rotations and Bell-state overlaps.

Basis order is |00>, |01>, |10>, |11> with |0> the +1 eigenstate of sigma_z.
"""

import numpy as np
from scipy.optimize import minimize

LABELS = ("00", "01", "10", "11")
Z_VALUES = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
ZZ = Z_VALUES[:, 0] * Z_VALUES[:, 1]
# chi = Phi_01 + Phi_10 - Phi_00 - Phi_11
CHI_SIGNS = -ZZ

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])
# |0><1|: relaxation from |1> into |0>
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

BELL_TARGET = np.array([1, 0, 0, -1j]) / np.sqrt(2)


def on_qubit(op: np.ndarray, which: int) -> np.ndarray:
    return np.kron(op, I2) if which == 0 else np.kron(I2, op)


def rotation(theta: float, phase: float = 0.0) -> np.ndarray:
    """exp(-i theta/2 (cos(phase) X + sin(phase) Y))."""
    gen = np.cos(phase) * SX + np.sin(phase) * SY
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * gen


def collective_rotation(theta: float, phase: float = 0.0) -> np.ndarray:
    r = rotation(theta, phase)
    return np.kron(r, r)


def plus_plus() -> np.ndarray:
    return np.full(4, 0.5, dtype=complex)


def overlap(rho: np.ndarray, psi: np.ndarray) -> float:
    return float(np.real(np.conj(psi) @ rho @ psi))


def _frame_state(betas, sign):
    theta = betas[0] * Z_VALUES[:, 0] + betas[1] * Z_VALUES[:, 1] + sign * np.pi / 4 * ZZ
    return 0.5 * np.exp(1j * theta)


def frame_fidelity(rho: np.ndarray) -> float:
    """Overlap of a gate output with the ideal maximally entangling output.

    The input is the post-gate two-qubit state for a |++> input. The target is
    ``exp(-/+ i pi/4 ZZ)|++>`` up to single-qubit z rotations, which are
    optimised out (they are removed by the echo in the full sequence).
    """
    rho = np.asarray(rho)
    # phases of rho_{i,j} give a starting point for the local-frame search
    grid = np.linspace(-np.pi, np.pi, 9, endpoint=False)
    best = -np.inf
    for sign in (1, -1):
        def neg(b):
            return -overlap(rho, _frame_state(b, sign))

        start = min(((a, b) for a in grid for b in grid), key=neg)
        res = minimize(neg, np.array(start), method="BFGS", options={"gtol": 1e-12})
        best = max(best, -res.fun)
    return float(min(1.0, max(0.0, best)))


def parity(probs: np.ndarray) -> float:
    """P00 + P11 - P01 - P10."""
    return float(probs[0] + probs[3] - probs[1] - probs[2])


def populations(rho: np.ndarray) -> np.ndarray:
    return np.clip(np.real(np.diag(rho)), 0.0, 1.0)
