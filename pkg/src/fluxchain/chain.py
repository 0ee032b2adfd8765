"""Linear chain of coupled fluxonium qubits.

The chain Hamiltonian is assembled in the product of single-qubit eigenbases
(each truncated to ``levels_per_qubit`` levels) with nearest-neighbour
flux-flux and charge-charge couplings, then diagonalized densely. Dressed
eigenstates are labeled by the bare product state they overlap most.
"""

from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from fluxchain.errors import LabelingError, NumericalError, ParameterError
from fluxchain.fluxonium import (
    DEFAULT_BASIS_SIZE,
    FluxoniumParams,
    QubitSpectrum,
    diagonalize_fluxonium,
    fix_gauge,
)

E_C_DEFAULT = 1.0
E_L_DEFAULT = 0.7
J_FF_DEFAULT = 0.003
TIER_EJ = {"L": 4.5, "M": 3.8, "H": 3.0}
PRIME_SHIFT = 0.1

LABEL_THRESHOLD = 0.5
TIE_TOL = 1e-9


@dataclass(frozen=True)
class ChainSpec:
    qubits: tuple
    j_ff: float = J_FF_DEFAULT
    j_nn: float = 0.0
    levels_per_qubit: int = 5
    basis_size: int = DEFAULT_BASIS_SIZE
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if not 2 <= len(self.qubits) <= 6:
            raise ParameterError(f"chain length must be between 2 and 6, got {len(self.qubits)}")
        if self.levels_per_qubit < 3:
            raise ParameterError("levels_per_qubit must be >= 3")
        for q in self.qubits:
            if not isinstance(q, FluxoniumParams):
                raise ParameterError("qubits must be FluxoniumParams")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    @property
    def dims(self) -> tuple:
        return (self.levels_per_qubit,) * self.n_qubits

    def with_couplings(self, j_ff=None, j_nn=None) -> ChainSpec:
        return replace(
            self,
            j_ff=self.j_ff if j_ff is None else j_ff,
            j_nn=self.j_nn if j_nn is None else j_nn,
        )


def parse_tiers(name: str) -> list[tuple[str, bool]]:
    """Split a configuration name like ``HLMH'`` into ``(tier, primed)`` pairs.

    A ``*`` after a tier marks the target qubit and is ignored here.
    """
    tokens = re.findall(r"([LMHS])('?)\*?", name)
    if "".join(t + p for t, p in tokens) != name.replace("*", ""):
        raise ParameterError(f"cannot parse configuration name {name!r}")
    return [(t, p == "'") for t, p in tokens]


def tier_ej(name: str, spectator_ej: float | None = None) -> list[float]:
    """Josephson energies for a configuration name.

    ``S`` stands for a swept spectator and needs ``spectator_ej``.
    """
    out = []
    for tier, primed in parse_tiers(name):
        if tier == "S":
            if spectator_ej is None:
                raise ParameterError(f"{name!r} contains a spectator slot but no spectator_ej was given")
            ej = spectator_ej
        else:
            ej = TIER_EJ[tier]
        out.append(round(ej - PRIME_SHIFT, 12) if primed else ej)
    return out


def target_index(name: str) -> int | None:
    """Position of the ``*``-marked qubit, or None."""
    pos = None
    for i, m in enumerate(re.finditer(r"[LMHS]'?(\*?)", name)):
        if m.group(1):
            pos = i
    return pos


def chain_from_ej(
    ejs,
    *,
    e_c: float = E_C_DEFAULT,
    e_l: float = E_L_DEFAULT,
    phi_ext: float = np.pi,
    j_ff: float = J_FF_DEFAULT,
    j_nn: float = 0.0,
    levels_per_qubit: int = 5,
    basis_size: int = DEFAULT_BASIS_SIZE,
    name: str = "",
) -> ChainSpec:
    qubits = tuple(FluxoniumParams(e_c, e_l, float(ej), phi_ext) for ej in ejs)
    return ChainSpec(qubits, j_ff, j_nn, levels_per_qubit, basis_size, name)


def named_chain(name: str, spectator_ej: float | None = None, **kwargs) -> ChainSpec:
    """ChainSpec for names such as ``HLMH'``, ``LM`` or ``SLMS'``."""
    return chain_from_ej(tier_ej(name, spectator_ej), name=name.replace("*", ""), **kwargs)


@functools.lru_cache(maxsize=256)
def solve_qubit(params: FluxoniumParams, basis_size: int, n_keep: int) -> QubitSpectrum:
    return diagonalize_fluxonium(params, basis_size, n_keep)


@dataclass(frozen=True)
class ChainOperators:
    h0_static: np.ndarray
    n_embedded: tuple
    phi_embedded: tuple
    spectra: tuple
    dims: tuple
    spec: ChainSpec | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_qubits(self) -> int:
        return len(self.dims)


def embed(op: np.ndarray, site: int, dims) -> np.ndarray:
    """Lift a single-site operator into the full product space."""
    out = np.eye(1)
    for i, d in enumerate(dims):
        out = np.kron(out, op if i == site else np.eye(d))
    return out


def assemble_from_spectra(spectra, j_ff: float, j_nn: float) -> ChainOperators:
    spectra = tuple(spectra)
    levels = {s.n_keep for s in spectra}
    if len(levels) != 1:
        raise ParameterError(f"qubits truncated to different level counts: {sorted(levels)}")
    dims = tuple(s.n_keep for s in spectra)
    n_emb = tuple(embed(s.n_op, i, dims) for i, s in enumerate(spectra))
    phi_emb = tuple(embed(s.phi_op, i, dims) for i, s in enumerate(spectra))
    h = np.zeros((int(np.prod(dims)),) * 2)
    for i, s in enumerate(spectra):
        h += embed(np.diag(s.energies), i, dims)
    h = h.astype(complex)
    for i in range(len(spectra) - 1):
        if j_ff:
            h += j_ff * embed(spectra[i].phi_op, i, dims) @ embed(spectra[i + 1].phi_op, i + 1, dims)
        if j_nn:
            h += j_nn * n_emb[i] @ n_emb[i + 1]
    h = 0.5 * (h + h.conj().T)
    if np.abs(h.imag).max() < 1e-14:
        h = h.real.copy()
    return ChainOperators(h0_static=h, n_embedded=n_emb, phi_embedded=phi_emb, spectra=spectra, dims=dims)


def assemble_chain(spec: ChainSpec) -> ChainOperators:
    spectra = [solve_qubit(q, spec.basis_size, spec.levels_per_qubit) for q in spec.qubits]
    ops = assemble_from_spectra(spectra, spec.j_ff, spec.j_nn)
    return replace(ops, spec=spec)


@dataclass(frozen=True)
class DressedSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    label_map: dict
    overlap_quality: dict
    dims: tuple

    @property
    def n_qubits(self) -> int:
        return len(self.dims)

    def index(self, label) -> int:
        try:
            return self.label_map[tuple(label)]
        except KeyError:
            raise LabelingError(f"no dressed state labeled {tuple(label)}") from None

    def energy(self, label) -> float:
        return float(self.eigenvalues[self.index(label)])

    @functools.cached_property
    def labels(self) -> list:
        """Bare label of every dressed index."""
        out = [None] * len(self.eigenvalues)
        for lab, k in self.label_map.items():
            out[k] = lab
        return out


def computational_labels(n_qubits: int) -> list[tuple]:
    return list(itertools.product((0, 1), repeat=n_qubits))


def label_states(eigenvectors: np.ndarray, dims, *, strict: bool = True, threshold: float = LABEL_THRESHOLD):
    """Assign a bare multi-index to every dressed eigenvector.

    Bare labels are processed in descending order of their best overlap and
    each takes its best still-free dressed state. If a label's best state is
    already taken, the whole problem is re-solved as an optimal assignment
    (Hungarian). A contested state claimed with equal overlap by two labels is
    ambiguous and raises. With ``strict``, any computational label whose
    overlap falls below ``threshold`` raises too.

    Returns ``(label_map, overlap_quality)``.
    """
    dims = tuple(dims)
    overlap = np.abs(eigenvectors)  # rows: bare index, cols: dressed index
    n = overlap.shape[0]
    best = overlap.max(axis=1)
    order = np.argsort(-best, kind="stable")
    owner = -np.ones(n, dtype=int)
    assign = -np.ones(n, dtype=int)
    conflict = False
    for b in order:
        k = int(np.argmax(overlap[b]))
        if owner[k] >= 0:
            a = owner[k]
            if strict and abs(overlap[a, k] - overlap[b, k]) < TIE_TOL:
                raise LabelingError(
                    f"bare labels {np.unravel_index(a, dims)} and {np.unravel_index(b, dims)} "
                    f"claim dressed state {k} with equal overlap {overlap[b, k]:.6f}"
                )
            conflict = True
            break
        owner[k] = b
        assign[b] = k
    if conflict:
        rows, cols = linear_sum_assignment(-(overlap**2))
        assign = np.empty(n, dtype=int)
        assign[rows] = cols
    label_map = {}
    quality = {}
    for b in range(n):
        lab = tuple(int(x) for x in np.unravel_index(b, dims))
        label_map[lab] = int(assign[b])
        quality[lab] = float(overlap[b, assign[b]])
    if strict:
        bad = [lab for lab in computational_labels(len(dims)) if quality[lab] < threshold]
        if bad:
            worst = min(bad, key=quality.get)
            raise LabelingError(
                f"computational label {worst} has overlap {quality[worst]:.3f} < {threshold}; "
                "strong hybridization"
            )
    return label_map, quality


def diagonalize_chain(ops: ChainOperators, *, strict: bool = True) -> DressedSystem:
    try:
        w, v = np.linalg.eigh(ops.h0_static)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"chain eigensolver failed: {exc}") from exc
    v = fix_gauge(v)
    label_map, quality = label_states(v, ops.dims, strict=strict)
    return DressedSystem(eigenvalues=w, eigenvectors=v, label_map=label_map, overlap_quality=quality, dims=ops.dims)


def computational_subspace(dressed: DressedSystem, min_overlap: float | None = None) -> list[int]:
    """Dressed indices of the 2^N computational labels, lexicographic order."""
    out = []
    for lab in computational_labels(dressed.n_qubits):
        if lab not in dressed.label_map:
            raise LabelingError(f"computational label {lab} missing")
        if min_overlap is not None and dressed.overlap_quality[lab] < min_overlap:
            raise LabelingError(f"computational label {lab} overlap {dressed.overlap_quality[lab]:.3f} below {min_overlap}")
        out.append(dressed.label_map[lab])
    return out


def build_system(spec: ChainSpec, *, strict: bool = True):
    """Assemble and diagonalize in one go; returns ``(ops, dressed)``."""
    ops = assemble_chain(spec)
    return ops, diagonalize_chain(ops, strict=strict)


def rotate(op: np.ndarray, dressed: DressedSystem) -> np.ndarray:
    """Express a full-space operator in the dressed eigenbasis."""
    v = dressed.eigenvectors
    return v.conj().T @ op @ v
