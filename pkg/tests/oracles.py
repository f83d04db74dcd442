"""Independent reference integrators used by the tests."""

import numpy as np
from scipy.integrate import solve_ivp


def forced_oscillator(c, d, t, rtol=1e-13):
    """Integrate dalpha/dt = -i c e^{i d s} and dphi/dt = Im(alpha* dalpha/dt)."""

    def rhs(s, y):
        a = y[0] + 1j * y[1]
        da = -1j * c * np.exp(1j * d * s)
        dphi = np.imag(np.conj(a) * da)
        return [da.real, da.imag, dphi]

    scale = abs(c) * t
    atol = [1e-16 * scale, 1e-16 * scale, 1e-16 * scale**2]
    sol = solve_ivp(rhs, (0.0, t), [0.0, 0.0, 0.0], method="DOP853", rtol=rtol, atol=atol)
    y = sol.y[:, -1]
    return y[0] + 1j * y[1], y[2]


def forced_oscillator_batch(c, d, t, rtol=1e-13):
    """Vectorised :func:`forced_oscillator` over arrays, integrated on s in [0, 1]."""
    c, d, t = (np.asarray(v) for v in (c, d, t))
    n = len(c)

    def rhs(s, y):
        a = y[:n] + 1j * y[n:2 * n]
        da = -1j * c * np.exp(1j * d * t * s) * t
        dphi = np.imag(np.conj(a) * da)
        return np.concatenate([da.real, da.imag, dphi])

    scale = np.abs(c) * t
    atol = 1e-16 * np.concatenate([scale, scale, scale**2])
    sol = solve_ivp(rhs, (0.0, 1.0), np.zeros(3 * n), method="DOP853", rtol=rtol, atol=atol)
    y = sol.y[:, -1]
    return y[:n] + 1j * y[n:2 * n], y[2 * n:]
