"""Static diagnostics of a dressed chain: ZZ rates, charge matrix elements,
and the selective-darkening drive ratio."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from fluxchain.chain import (
    ChainOperators,
    ChainSpec,
    DressedSystem,
    build_system,
)
from fluxchain.errors import (
    DegenerateDriveError,
    FluxchainError,
    NumericalError,
    ParameterError,
)

GHZ_TO_KHZ = 1e6

# (bra, ket) gate-pair labels of the tabulated charge elements; first digit is
# the left gate qubit, second the right one.
TABLE_TRANSITIONS = (((1, 0), (0, 0)), ((1, 1), (0, 1)), ((0, 1), (0, 0)), ((1, 1), (1, 0)))


@dataclass(frozen=True)
class ZZRecord:
    spectator_state: tuple
    pair: tuple
    value: float  # kHz
    config: str = ""
    j_ff: float = float("nan")
    j_nn: float = float("nan")
    status: str = "ok"


@dataclass(frozen=True)
class MatrixElementRecord:
    operator_qubit: int
    bra_label: tuple
    ket_label: tuple
    value: complex


def default_pair(n_qubits: int) -> tuple:
    """Central pair of the chain: (1, 2) for four qubits, (0, 1) for two."""
    left = (n_qubits - 1) // 2 if n_qubits > 2 else 0
    return (left, left + 1)


def full_label(n_qubits: int, pair, gate_state, spectators=()) -> tuple:
    """Bare label with gate qubits at ``pair`` and the rest filled from
    ``spectators`` in chain order."""
    c, t = pair
    others = [i for i in range(n_qubits) if i not in (c, t)]
    spectators = tuple(spectators) if spectators is not None else ()
    if not spectators:
        spectators = (0,) * len(others)
    if len(spectators) != len(others):
        raise ParameterError(f"expected {len(others)} spectator states, got {len(spectators)}")
    lab = [0] * n_qubits
    lab[c], lab[t] = gate_state
    for i, s in zip(others, spectators):
        lab[i] = s
    return tuple(lab)


def zz_rate(dressed: DressedSystem, pair=None, spectators=None) -> float:
    """ZZ between the pair for fixed spectator states, in kHz."""
    n = dressed.n_qubits
    pair = default_pair(n) if pair is None else tuple(pair)
    e = {s: dressed.energy(full_label(n, pair, s, spectators)) for s in ((0, 0), (0, 1), (1, 0), (1, 1))}
    return (e[1, 1] - e[1, 0] - e[0, 1] + e[0, 0]) * GHZ_TO_KHZ


def raw_matrix_element(dressed: DressedSystem, ops: ChainOperators, qubit: int, bra, ket) -> complex:
    vb = dressed.eigenvectors[:, dressed.index(bra)]
    vk = dressed.eigenvectors[:, dressed.index(ket)]
    return complex(vb.conj() @ (ops.n_embedded[qubit] @ vk))


def charge_matrix_element(dressed: DressedSystem, ops: ChainOperators, qubit: int, bra, ket) -> complex:
    """``-i <bra| n_qubit |ket>`` between dressed states given by bare labels."""
    return -1j * raw_matrix_element(dressed, ops, qubit, bra, ket)


def sd_ratio(
    dressed: DressedSystem, ops: ChainOperators, control: int, target: int, spectators=None
) -> float:
    """Target-to-control drive ratio that darkens the control-0 target transition."""
    n = dressed.n_qubits
    pair = (control, target)
    lab00 = full_label(n, pair, (0, 0), spectators)
    lab01 = full_label(n, pair, (0, 1), spectators)
    num = raw_matrix_element(dressed, ops, control, lab01, lab00)
    den = raw_matrix_element(dressed, ops, target, lab01, lab00)
    if abs(den) < 1e-12:
        raise DegenerateDriveError(f"target matrix element {abs(den):.2e} too small for selective darkening")
    eta = -num / den
    if abs(eta.imag) > 1e-9:
        raise NumericalError(f"selective-darkening ratio has imaginary part {eta.imag:.2e}")
    return float(eta.real)


def table_row(dressed: DressedSystem, ops: ChainOperators, spectators=None, pair=None) -> dict:
    """ZZ and the eight tabulated charge elements for one spectator state."""
    n = dressed.n_qubits
    pair = default_pair(n) if pair is None else tuple(pair)
    row = {"zz_kHz": zz_rate(dressed, pair, spectators), "elements": []}
    for bra, ket in TABLE_TRANSITIONS:
        for q in pair:
            val = charge_matrix_element(
                dressed, ops, q, full_label(n, pair, bra, spectators), full_label(n, pair, ket, spectators)
            )
            row["elements"].append(
                MatrixElementRecord(q, full_label(n, pair, bra, spectators), full_label(n, pair, ket, spectators), val)
            )
    return row


def relative_signs(values) -> list[int]:
    """Gauge-invariant sign pattern: for each transition, the sign of the
    right-qubit element relative to the left-qubit element."""
    vals = np.real(np.asarray(values, dtype=complex)).reshape(-1, 2)
    return [int(np.sign(a) * np.sign(b)) for a, b in vals]


def zz_vs_coupling_sweep(
    spec_template: ChainSpec,
    j_ff_values,
    j_nn_values,
    spectators=(1, 1),
    pair=None,
    config: str | None = None,
) -> list[ZZRecord]:
    """ZZ on a (j_ff, j_nn) grid; failed points are kept with their status."""
    j_ff_values = list(j_ff_values)
    j_nn_values = list(j_nn_values)
    if not j_ff_values or not j_nn_values:
        raise ParameterError("coupling grids must be nonempty")
    name = spec_template.name if config is None else config
    pair = default_pair(spec_template.n_qubits) if pair is None else tuple(pair)
    out = []
    for j_nn in j_nn_values:
        for j_ff in j_ff_values:
            spec = spec_template.with_couplings(j_ff=j_ff, j_nn=j_nn)
            try:
                _, dressed = build_system(spec)
                val, status = zz_rate(dressed, pair, spectators), "ok"
            except FluxchainError as exc:
                val, status = float("nan"), f"failed: {exc}"
            out.append(ZZRecord(tuple(spectators), pair, val, name, j_ff, j_nn, status))
    return out


ZZ_CSV_COLUMNS = ("config", "j_ff_GHz", "j_nn_GHz", "alpha", "beta", "zz_kHz", "status")


def write_zz_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ZZ_CSV_COLUMNS)
        for r in records:
            a, b = (tuple(r.spectator_state) + (0, 0))[:2]
            w.writerow([r.config, repr(float(r.j_ff)), repr(float(r.j_nn)), a, b, repr(float(r.value)), r.status])
