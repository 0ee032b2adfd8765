"""Single fluxonium circuit in a truncated harmonic-oscillator basis.

Energies are in GHz with h = 1. The Hamiltonian is

    H = 4 E_C n^2 + E_L phi^2 / 2 - E_J cos(phi - phi_ext)

with [phi, n] = i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from fluxchain.errors import NumericalError, ParameterError

DEFAULT_BASIS_SIZE = 80
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class FluxoniumParams:
    e_c: float
    e_l: float
    e_j: float
    phi_ext: float = np.pi

    def __post_init__(self):
        problems = []
        if not self.e_c > 0:
            problems.append(f"e_c must be > 0, got {self.e_c}")
        if not self.e_l > 0:
            problems.append(f"e_l must be > 0, got {self.e_l}")
        if not self.e_j >= 0:
            problems.append(f"e_j must be >= 0, got {self.e_j}")
        if not np.isfinite(self.phi_ext):
            problems.append(f"phi_ext must be finite, got {self.phi_ext}")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def phi_zpf(self) -> float:
        """Oscillator length (8 E_C / E_L)^(1/4)."""
        return (8.0 * self.e_c / self.e_l) ** 0.25

    @property
    def plasma_frequency(self) -> float:
        return float(np.sqrt(8.0 * self.e_c * self.e_l))


@dataclass(frozen=True)
class OperatorSet:
    h0: np.ndarray
    phi: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class QubitSpectrum:
    energies: np.ndarray
    phi_op: np.ndarray
    n_op: np.ndarray
    n_keep: int
    basis_size: int
    params: FluxoniumParams | None = field(default=None, compare=False)
    vectors: np.ndarray | None = field(default=None, repr=False, compare=False)


def _hermitian_function(mat: np.ndarray, fn) -> np.ndarray:
    w, v = linalg.eigh(mat)
    return (v * fn(w)) @ v.conj().T


def build_oscillator_basis(params: FluxoniumParams, basis_size: int) -> OperatorSet:
    """Hamiltonian, flux and charge operators in the oscillator basis.

    The cosine is applied exactly to the truncated flux matrix: phi is
    diagonalized, the cosine evaluated on its eigenvalues, and the result
    rotated back.
    """
    if basis_size < 20:
        raise ParameterError(f"basis_size must be >= 20, got {basis_size}")
    a = np.diag(np.sqrt(np.arange(1, basis_size, dtype=float)), 1)
    ell = params.phi_zpf
    phi = ell / np.sqrt(2.0) * (a + a.T)
    n = 1j / (np.sqrt(2.0) * ell) * (a.T - a)
    n2 = (a.T - a) @ (a.T - a) * (-1.0 / (2.0 * ell**2))
    cos_term = _hermitian_function(phi, lambda w: np.cos(w - params.phi_ext))
    h0 = 4.0 * params.e_c * n2 + 0.5 * params.e_l * phi @ phi - params.e_j * cos_term
    h0 = 0.5 * (h0 + h0.T)
    return OperatorSet(h0=h0, phi=phi, n=n)


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive."""
    vectors = np.array(vectors, copy=True)
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    vectors *= (np.abs(pivots) / pivots)[None, :]
    return vectors


def diagonalize_fluxonium(
    params: FluxoniumParams, basis_size: int = DEFAULT_BASIS_SIZE, n_keep: int = 5
) -> QubitSpectrum:
    """Lowest ``n_keep`` eigenpairs with operators in the eigenbasis.

    Energies are shifted so the ground level is zero.
    """
    if n_keep < 1:
        raise ParameterError("n_keep must be positive")
    if n_keep > basis_size / 4:
        raise ParameterError(f"n_keep={n_keep} exceeds basis_size/4 for basis_size={basis_size}")
    ops = build_oscillator_basis(params, basis_size)
    try:
        w, v = linalg.eigh(ops.h0, subset_by_index=[0, n_keep - 1])
    except linalg.LinAlgError as exc:
        raise NumericalError(f"fluxonium eigensolver failed: {exc}") from exc
    if np.any(np.diff(w) < DEGENERACY_TOL):
        raise NumericalError("degenerate fluxonium levels within 1e-9 GHz")
    v = fix_gauge(v)
    phi_op = v.T @ ops.phi @ v
    n_op = v.T @ ops.n @ v
    phi_op = 0.5 * (phi_op + phi_op.T)
    n_op = 0.5 * (n_op + n_op.conj().T)
    return QubitSpectrum(
        energies=w - w[0],
        phi_op=phi_op,
        n_op=n_op,
        n_keep=n_keep,
        basis_size=basis_size,
        params=params,
        vectors=v,
    )


def transition_frequency(spec: QubitSpectrum, i: int, j: int) -> float:
    if not (0 <= i < spec.n_keep and 0 <= j < spec.n_keep):
        raise ParameterError(f"levels ({i}, {j}) out of range for n_keep={spec.n_keep}")
    if i > j:
        raise ParameterError(f"expected i <= j, got ({i}, {j})")
    return float(spec.energies[j] - spec.energies[i])


@dataclass(frozen=True)
class ConvergenceReport:
    basis_sizes: tuple
    energies: np.ndarray  # (len(basis_sizes), n_keep)
    drift: np.ndarray  # (len(basis_sizes) - 1, n_keep)
    tolerance: float

    @property
    def flagged_levels(self) -> list[int]:
        """Levels whose energy still moves by more than the tolerance."""
        return [int(k) for k in np.nonzero(self.drift[-1] > self.tolerance)[0]]

    @property
    def converged(self) -> bool:
        return not self.flagged_levels


def convergence_report(
    params: FluxoniumParams, basis_sizes, n_keep: int = 5, tolerance: float = 1e-8
) -> ConvergenceReport:
    sizes = tuple(int(b) for b in basis_sizes)
    if len(sizes) < 2:
        raise ParameterError("convergence_report needs at least two basis sizes")
    energies = np.array([diagonalize_fluxonium(params, b, n_keep).energies for b in sizes])
    drift = np.abs(np.diff(energies, axis=0))
    return ConvergenceReport(basis_sizes=sizes, energies=energies, drift=drift, tolerance=tolerance)
