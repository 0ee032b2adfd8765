"""Independent reference computations used to cross-check the main paths.

Nothing in the production pipeline calls into this module.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from fluxchain.fluxonium import FluxoniumParams, fix_gauge

# central-difference second-derivative stencil, 8th order
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
# first-derivative stencil, 8th order
_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def phase_grid_fluxonium(
    params: FluxoniumParams,
    n_keep: int = 5,
    n_points: int = 4001,
    half_width: float = 12 * np.pi,
):
    """Diagonalize the fluxonium on a uniform phase grid.

    Kinetic term from an 8th-order finite-difference stencil; the lowest
    levels come from sparse shift-invert Lanczos. Returns
    ``(energies, phi_op, n_op)`` in the same conventions as
    ``diagonalize_fluxonium``: ground level at zero, largest wavefunction
    component real-positive.
    """
    grid, h = np.linspace(-half_width, half_width, n_points, retstep=True)
    half = len(_D2) // 2
    potential = 0.5 * params.e_l * grid**2 - params.e_j * np.cos(grid - params.phi_ext)
    offsets = list(range(-half, half + 1))
    kinetic = [-4.0 * params.e_c * _D2[half + k] / h**2 * np.ones(n_points - abs(k)) for k in offsets]
    ham = sparse.diags(kinetic, offsets, format="csc") + sparse.diags(potential)
    # shift below the potential minimum so shift-invert returns the ground states
    w, v = sparse_linalg.eigsh(ham, k=n_keep, sigma=-params.e_j - 1.0, which="LM")
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    v = fix_gauge(v)
    phi_op = v.T @ (grid[:, None] * v)
    dv = np.zeros_like(v)
    for k, c in enumerate(_D1):
        shift = k - half
        if c == 0.0:
            continue
        if shift > 0:
            dv[:-shift] += c * v[shift:]
        else:
            dv[-shift:] += c * v[:shift]
    n_op = -1j * (v.T @ dv) / h
    return w - w[0], phi_op, n_op


def piecewise_constant_propagator(h_static: np.ndarray, drive_op: np.ndarray, coefficient, t_final: float, dt: float = 1e-3):
    """Propagator of ``h_static + coefficient(t) * drive_op`` (angular units).

    Each step uses the exact matrix exponential of the Hamiltonian frozen at
    the step midpoint.
    """
    n_steps = max(1, int(round(t_final / dt)))
    dt = t_final / n_steps
    u = np.eye(h_static.shape[0], dtype=complex)
    for k in range(n_steps):
        c = coefficient((k + 0.5) * dt)
        w, v = linalg.eigh(h_static + c * drive_op)
        u = (v * np.exp(-1j * dt * w)) @ (v.conj().T @ u)
    return u
