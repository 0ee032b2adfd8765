"""Driven evolution of a dressed chain and CNOT gate error.

The propagator is integrated in the eigenbasis of the static Hamiltonian with
a fourth-order commutator-free Magnus scheme. Every exponential in that scheme
has the form ``exp(-i tau (Lambda + b D))`` with diagonal ``Lambda`` and a fixed
drive matrix ``D``; only the scalar ``b`` changes from step to step. Those
exponentials are therefore interpolated in ``b`` on Chebyshev nodes, which
costs a handful of eigendecompositions per run instead of one per step and
keeps the stiff static part exact.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from fluxchain.chain import (
    ChainOperators,
    DressedSystem,
    computational_labels,
    computational_subspace,
)
from fluxchain.errors import IntegrationError, ParameterError
from fluxchain.kernels import apply_steps, barycentric_weights, chebyshev_nodes
from fluxchain.spectral import full_label

TWO_PI = 2.0 * np.pi

# angular drive prefactor (rad/ns per unit epsilon) for each reading of epsilon
AMPLITUDE_CONVENTIONS = {
    "h": TWO_PI,  # H_drive = h * eps * f * cos * D
    "hbar": 1.0,  # H_drive = hbar * eps * f * cos * D, eps in rad/ns
    "h_half": np.pi,  # H_drive = h * (eps / 2) * f * cos * D
}

# fourth-order commutator-free Magnus: Gauss nodes and mixing weights
_C1 = 0.5 - np.sqrt(3.0) / 6.0
_C2 = 0.5 + np.sqrt(3.0) / 6.0
_A1 = 0.25 + np.sqrt(3.0) / 6.0
_A2 = 0.25 - np.sqrt(3.0) / 6.0

_INTERP_TOL = 1e-15


@dataclass(frozen=True)
class DriveSpec:
    epsilon: float
    eta: float
    delta: float = 1.0
    t_g: float = 100.0
    t_r: float = 20.0
    control: int = 1
    target: int = 2

    def __post_init__(self):
        if not self.t_r > 0 or not self.t_g > 2 * self.t_r:
            raise ParameterError(f"need t_g > 2 t_r > 0, got t_g={self.t_g}, t_r={self.t_r}")
        if not self.epsilon >= 0:
            raise ParameterError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.control == self.target:
            raise ParameterError("control and target must differ")

    def with_params(self, epsilon=None, eta=None, delta=None) -> DriveSpec:
        return replace(
            self,
            epsilon=self.epsilon if epsilon is None else float(epsilon),
            eta=self.eta if eta is None else float(eta),
            delta=self.delta if delta is None else float(delta),
        )


@dataclass(frozen=True)
class PropagationSettings:
    steps_per_period: int = 40
    step_tolerance: float = 1e-6
    max_halvings: int = 4
    check_convergence: bool = True
    amplitude_convention: str = "h_half"
    # spectators restricted to levels below this in the dynamical basis; None keeps all
    spectator_levels: int | None = 2
    columns: str = "computational"

    def __post_init__(self):
        if self.amplitude_convention not in AMPLITUDE_CONVENTIONS:
            raise ParameterError(f"unknown amplitude convention {self.amplitude_convention!r}")
        if self.columns not in ("computational", "all"):
            raise ParameterError("columns must be 'computational' or 'all'")
        if self.steps_per_period < 40:
            raise ParameterError("steps_per_period must be >= 40")

    @property
    def prefactor(self) -> float:
        return AMPLITUDE_CONVENTIONS[self.amplitude_convention]


@dataclass(frozen=True)
class PropagatorResult:
    u_full: np.ndarray  # rows: ``basis``; columns: ``columns``
    u_projected: np.ndarray
    frame: str
    basis: tuple
    columns: tuple
    t_g: float
    steps_per_period: int = 0
    step_change: float = float("nan")

    def unitarity_defect(self) -> float:
        g = self.u_full.conj().T @ self.u_full
        return float(np.abs(g - np.eye(g.shape[0])).max())


@dataclass(frozen=True)
class GateErrorReport:
    error: float
    leakage: float
    vz_phases: np.ndarray
    error_uncorrected: float
    drive: DriveSpec | None = None
    vz_corrected: bool = True


def envelope(t, t_g: float, t_r: float):
    """sin^2 ramps of length ``t_r`` around a flat top; zero outside [0, t_g]."""
    t = np.asarray(t, dtype=float)
    up = np.sin(np.pi * t / (2.0 * t_r)) ** 2
    down = np.sin(np.pi * (t_g - t) / (2.0 * t_r)) ** 2
    out = np.where(t < t_r, up, np.where(t < t_g - t_r, 1.0, down))
    out = np.where((t < 0) | (t > t_g), 0.0, out)
    return out if out.ndim else float(out)


def drive_operator(ops: ChainOperators, drive: DriveSpec) -> np.ndarray:
    """``n_control + eta * n_target`` in the bare product basis."""
    _check_pair(ops.n_qubits, drive.control, drive.target)
    return ops.n_embedded[drive.control] + drive.eta * ops.n_embedded[drive.target]


def _check_pair(n_qubits: int, control: int, target: int) -> None:
    for q in (control, target):
        if not 0 <= q < n_qubits:
            raise ParameterError(f"qubit index {q} outside chain of {n_qubits}")
    if abs(control - target) != 1:
        raise ParameterError(f"control {control} and target {target} are not adjacent")


def conditioned_target_frequency(dressed: DressedSystem, control: int, target: int) -> float:
    """Target transition with the control excited and spectators in ground."""
    n = dressed.n_qubits
    up = full_label(n, (control, target), (1, 1))
    down = full_label(n, (control, target), (1, 0))
    return dressed.energy(up) - dressed.energy(down)


def drive_frequency(dressed: DressedSystem, drive: DriveSpec) -> float:
    return drive.delta * conditioned_target_frequency(dressed, drive.control, drive.target)


def ideal_cnot(n_qubits: int, control: int, target: int) -> np.ndarray:
    """Identity on spectators times CNOT on the pair, lexicographic labels."""
    labels = computational_labels(n_qubits)
    pos = {lab: i for i, lab in enumerate(labels)}
    u = np.zeros((len(labels), len(labels)))
    for j, lab in enumerate(labels):
        out = list(lab)
        if lab[control] == 1:
            out[target] ^= 1
        u[pos[tuple(out)], j] = 1.0
    return u


@dataclass
class DrivenSystem:
    """Dressed-basis data reused across propagations of one chain and pair."""

    energies: np.ndarray  # GHz, kept states
    n_control: np.ndarray  # dressed basis, kept states
    n_target: np.ndarray
    basis: tuple  # dressed indices kept
    computational: tuple  # dressed indices of computational states
    control: int
    target: int
    conditioned_frequency: float
    n_qubits: int = 0
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {k: i for i, k in enumerate(self.basis)}

    def positions(self, indices) -> list[int]:
        return [self._pos[k] for k in indices]

    @classmethod
    def build(cls, dressed: DressedSystem, ops: ChainOperators, control: int, target: int, spectator_levels=2):
        _check_pair(ops.n_qubits, control, target)
        comp = tuple(computational_subspace(dressed))
        if spectator_levels is None:
            basis = tuple(range(len(dressed.eigenvalues)))
        else:
            keep = []
            for k, lab in enumerate(dressed.labels):
                if all(lab[i] < spectator_levels for i in range(len(lab)) if i not in (control, target)):
                    keep.append(k)
            basis = tuple(keep)
        v = dressed.eigenvectors[:, list(basis)]
        nc = v.conj().T @ (ops.n_embedded[control] @ v)
        nt = v.conj().T @ (ops.n_embedded[target] @ v)
        return cls(
            energies=np.asarray(dressed.eigenvalues)[list(basis)],
            n_control=0.5 * (nc + nc.conj().T),
            n_target=0.5 * (nt + nt.conj().T),
            basis=basis,
            computational=comp,
            control=control,
            target=target,
            conditioned_frequency=conditioned_target_frequency(dressed, control, target),
            n_qubits=ops.n_qubits,
        )


def _segments(drive: DriveSpec, h_max: float):
    bounds = [(0.0, drive.t_r), (drive.t_r, drive.t_g - drive.t_r), (drive.t_g - drive.t_r, drive.t_g)]
    out = []
    for a, b in bounds:
        n = max(1, int(math.ceil((b - a) / h_max - 1e-12)))
        out.append((a, (b - a) / n, n))
    return out


def _node_count(rho: float) -> int:
    if rho == 0.0:
        return 1
    n = 1
    while 2.0 * (rho / 2.0) ** n / math.factorial(n) > _INTERP_TOL and n < 60:
        n += 1
    return n


def _integrate(system: DrivenSystem, drive: DriveSpec, settings: PropagationSettings, steps_per_period: int, u0):
    f_d = drive.delta * system.conditioned_frequency
    if f_d <= 0:
        raise ParameterError(f"drive frequency must be positive, got {f_d}")
    omega = TWO_PI * f_d
    amp = settings.prefactor * drive.epsilon
    lam = TWO_PI * system.energies
    dmat = system.n_control + drive.eta * system.n_target
    segs = _segments(drive, 1.0 / (f_d * steps_per_period))

    coeffs = []
    for a, h, n in segs:
        t0 = a + h * np.arange(n)
        t1, t2 = t0 + _C1 * h, t0 + _C2 * h
        g1 = amp * envelope(t1, drive.t_g, drive.t_r) * np.cos(omega * t1)
        g2 = amp * envelope(t2, drive.t_g, drive.t_r) * np.cos(omega * t2)
        b = np.empty(2 * n)
        b[0::2] = 2.0 * (_A1 * g1 + _A2 * g2)
        b[1::2] = 2.0 * (_A2 * g1 + _A1 * g2)
        coeffs.append(b)
    b_max = max(float(np.abs(b).max()) for b in coeffs)
    dnorm = float(np.abs(dmat).sum(axis=1).max())
    rho = max(0.5 * h for _, h, _ in segs) * b_max * dnorm
    n_nodes = _node_count(rho)
    if b_max == 0.0:
        nodes = np.zeros(1)
        n_nodes = 1
    else:
        nodes = chebyshev_nodes(n_nodes)
    eig = [linalg.eigh(np.diag(lam) + b_max * x * dmat) for x in nodes]

    u = u0
    for (a, h, n), b in zip(segs, coeffs):
        tau = 0.5 * h
        stack = np.array([(v * np.exp(-1j * tau * w)) @ v.conj().T for w, v in eig])
        if n_nodes == 1:
            weights = np.ones((len(b), 1))
        else:
            weights = barycentric_weights(b / b_max, n_nodes)
        u = apply_steps(stack, weights, u)
    return u


def propagate(
    dressed: DressedSystem,
    ops: ChainOperators,
    drive: DriveSpec,
    settings: PropagationSettings | None = None,
    system: DrivenSystem | None = None,
) -> PropagatorResult:
    """Lab-frame propagator over ``[0, t_g]`` in the dressed eigenbasis.

    The step starts at ``1/steps_per_period`` of the drive period; with
    ``check_convergence`` it is halved until the largest entry changes by
    less than ``step_tolerance``.
    """
    settings = settings or PropagationSettings()
    if system is None:
        system = DrivenSystem.build(dressed, ops, drive.control, drive.target, settings.spectator_levels)
    elif (system.control, system.target) != (drive.control, drive.target):
        raise ParameterError("precomputed system was built for a different control/target pair")
    if settings.columns == "all":
        columns = system.basis
    else:
        columns = system.computational
    u0 = np.eye(len(system.basis), dtype=complex)[:, system.positions(columns)]

    m = settings.steps_per_period
    u = _integrate(system, drive, settings, m, u0)
    change = float("nan")
    if settings.check_convergence:
        for _ in range(settings.max_halvings):
            finer = _integrate(system, drive, settings, 2 * m, u0)
            change = float(np.abs(finer - u).max())
            u, m = finer, 2 * m
            if change < settings.step_tolerance:
                break
        else:
            raise IntegrationError(
                f"propagator did not converge: change {change:.2e} >= {settings.step_tolerance:.1e} "
                f"after {settings.max_halvings} halvings"
            )
    result = PropagatorResult(
        u_full=u,
        u_projected=np.empty((0, 0)),
        frame="lab",
        basis=tuple(system.basis),
        columns=tuple(columns),
        t_g=drive.t_g,
        steps_per_period=m,
        step_change=change,
    )
    return replace(result, u_projected=project(result, system.computational))


def rotating_frame(result: PropagatorResult, dressed: DressedSystem, t_g: float | None = None, inverse: bool = False):
    """Remove (or with ``inverse``, restore) the free evolution of the static
    Hamiltonian: ``U_rot = R(t)^dagger U`` with ``R(t) = exp(-2 pi i E t)``."""
    t = result.t_g if t_g is None else t_g
    energies = np.asarray(dressed.eigenvalues)[list(result.basis)]
    sign = -1.0 if inverse else 1.0
    u = np.exp(sign * 1j * TWO_PI * energies * t)[:, None] * result.u_full
    frame = "lab" if inverse else "rotating"
    comp = computational_subspace(dressed)
    out = replace(result, u_full=u, frame=frame)
    return replace(out, u_projected=project(out, comp))


def project(result: PropagatorResult, subspace) -> np.ndarray:
    """Rows and columns of the propagator at the given dressed indices."""
    rows = {k: i for i, k in enumerate(result.basis)}
    cols = {k: i for i, k in enumerate(result.columns)}
    try:
        r = [rows[k] for k in subspace]
        c = [cols[k] for k in subspace]
    except KeyError as exc:
        raise ParameterError(f"dressed index {exc.args[0]} not in propagated basis") from None
    return result.u_full[np.ix_(r, c)]


def leakage(u: np.ndarray) -> float:
    d = u.shape[0]
    return float(1.0 - np.trace(u.conj().T @ u).real / d)


def average_gate_error(u: np.ndarray, u_ideal: np.ndarray) -> float:
    d = u.shape[0]
    norm = d * (d + 1)
    return float(1.0 - np.trace(u.conj().T @ u).real / norm - abs(np.trace(u_ideal.conj().T @ u)) ** 2 / norm)


def _bits(n_qubits: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n_qubits)), dtype=float)


def apply_virtual_z(u: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """``diag(post) @ u @ diag(pre)`` for per-qubit Z angles ``[pre..., post...]``."""
    n = int(round(math.log2(u.shape[0])))
    bits = _bits(n)
    pre = np.exp(1j * bits @ phases[:n])
    post = np.exp(1j * bits @ phases[n:])
    return post[:, None] * u * pre[None, :]


def optimize_virtual_z(u: np.ndarray, u_ideal: np.ndarray, max_sweeps: int = 500) -> np.ndarray:
    """Per-qubit Z angles before and after ``u`` maximizing the ideal-gate overlap.

    ``u_ideal`` must be a permutation matrix. Each angle enters the overlap as
    ``A + B exp(i theta)`` with the others fixed, so coordinate updates are
    exact; sweeps repeat until the overlap stops growing.
    """
    n = int(round(math.log2(u.shape[0])))
    bits = _bits(n)
    perm = np.argmax(u_ideal, axis=0)
    vals = u[perm, np.arange(len(perm))]
    masks = [bits[:, q].astype(bool) for q in range(n)] + [bits[perm, q].astype(bool) for q in range(n)]
    theta = np.zeros(2 * n)
    mixed = np.concatenate([bits, bits[perm]], axis=1)

    def overlap(th):
        return abs(np.sum(vals * np.exp(1j * (mixed @ th))))

    best = overlap(theta)
    for _ in range(max_sweeps):
        for q in range(2 * n):
            theta[q] = 0.0
            z = vals * np.exp(1j * (mixed @ theta))
            a, b = z[~masks[q]].sum(), z[masks[q]].sum()
            theta[q] = np.angle(a) - np.angle(b) if abs(b) > 0 else 0.0
        new = overlap(theta)
        if new - best <= 1e-15 * max(1.0, best):
            best = max(best, new)
            break
        best = new
    return np.mod(theta + np.pi, 2 * np.pi) - np.pi


def gate_error(u_proj: np.ndarray, control: int, target: int, vz_correct: bool = True, drive=None) -> GateErrorReport:
    """Average gate error of a projected propagator against spectator-identity x CNOT."""
    u_proj = np.asarray(u_proj)
    d = u_proj.shape[0]
    n = int(round(math.log2(d))) if d > 0 else 0
    if u_proj.ndim != 2 or u_proj.shape[1] != d or 2**n != d or n < 2:
        raise ParameterError(f"projected propagator must be 2^N x 2^N with N >= 2, got {u_proj.shape}")
    u_id = ideal_cnot(n, control, target)
    raw = average_gate_error(u_proj, u_id)
    phases = np.zeros(2 * n)
    err = raw
    if vz_correct:
        phases = optimize_virtual_z(u_proj, u_id)
        err = min(raw, average_gate_error(apply_virtual_z(u_proj, phases), u_id))
        if err == raw:
            phases = np.zeros(2 * n)
    return GateErrorReport(
        error=float(min(max(err, 0.0), 1.0)),
        leakage=float(min(max(leakage(u_proj), 0.0), 1.0)),
        vz_phases=phases,
        error_uncorrected=float(raw),
        drive=drive,
        vz_corrected=vz_correct,
    )


def evaluate_gate(
    dressed: DressedSystem,
    ops: ChainOperators,
    drive: DriveSpec,
    settings: PropagationSettings | None = None,
    system: DrivenSystem | None = None,
    vz_correct: bool = True,
) -> GateErrorReport:
    """Propagate, move to the rotating frame, project and score."""
    result = propagate(dressed, ops, drive, settings, system)
    rot = rotating_frame(result, dressed, drive.t_g)
    return gate_error(rot.u_projected, drive.control, drive.target, vz_correct, drive)


def population_trace(
    dressed: DressedSystem,
    ops: ChainOperators,
    drive: DriveSpec,
    initial,
    settings: PropagationSettings | None = None,
    n_samples: int = 201,
):
    """Computational-state populations along the pulse from one initial label.

    Returns ``(times, envelope, populations)`` with populations shaped
    ``(n_samples, 2^N)``. Each sample is an independent propagation to that
    time with the drive envelope of the full gate, so it costs ``n_samples``
    short runs.
    """
    settings = replace(settings or PropagationSettings(), check_convergence=False, columns="computational")
    system = DrivenSystem.build(dressed, ops, drive.control, drive.target, settings.spectator_levels)
    start = system.positions([dressed.index(initial)])
    comp_pos = system.positions(system.computational)
    times = np.linspace(0.0, drive.t_g, n_samples)
    pops = np.zeros((n_samples, len(comp_pos)))
    pops[0, comp_pos.index(start[0])] = 1.0
    f_d = drive.delta * system.conditioned_frequency
    u0 = np.eye(len(system.basis), dtype=complex)[:, start]
    for i, t in enumerate(times[1:], start=1):
        psi = _integrate_until(system, drive, settings, u0, t, f_d)
        pops[i] = np.abs(psi[comp_pos, 0]) ** 2
    return times, envelope(times, drive.t_g, drive.t_r), pops


def _integrate_until(system, drive, settings, u0, t_stop, f_d):
    h_max = 1.0 / (f_d * settings.steps_per_period)
    n = max(1, int(math.ceil(t_stop / h_max)))
    h = t_stop / n
    omega = TWO_PI * f_d
    amp = settings.prefactor * drive.epsilon
    t0 = h * np.arange(n)
    t1, t2 = t0 + _C1 * h, t0 + _C2 * h
    g1 = amp * envelope(t1, drive.t_g, drive.t_r) * np.cos(omega * t1)
    g2 = amp * envelope(t2, drive.t_g, drive.t_r) * np.cos(omega * t2)
    lam = TWO_PI * system.energies
    dmat = system.n_control + drive.eta * system.n_target
    u = u0
    tau = 0.5 * h
    for x1, x2 in zip(2.0 * (_A1 * g1 + _A2 * g2), 2.0 * (_A2 * g1 + _A1 * g2)):
        for b in (x1, x2):
            w, v = linalg.eigh(np.diag(lam) + b * dmat)
            u = (v * np.exp(-1j * tau * w)) @ (v.conj().T @ u)
    return u


TRACE_COLUMNS = ("t_ns", "envelope")


def write_trace(path, times, env, pops, n_qubits: int) -> None:
    names = ["p_" + "".join(map(str, lab)) for lab in computational_labels(n_qubits)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TRACE_COLUMNS) + names)
        for t, e, row in zip(times, env, pops):
            w.writerow([repr(float(t)), repr(float(e))] + [repr(float(p)) for p in row])
