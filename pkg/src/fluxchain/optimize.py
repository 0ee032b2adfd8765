"""Gate-parameter optimization and the sweeps built on it."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from fluxchain.chain import ChainSpec, build_system, named_chain, target_index
from fluxchain.dynamics import (
    DrivenSystem,
    DriveSpec,
    GateErrorReport,
    PropagationSettings,
    evaluate_gate,
)
from fluxchain.errors import (
    DegenerateDriveError,
    FluxchainError,
    OptimizationError,
    ParameterError,
)
from fluxchain.fluxonium import transition_frequency
from fluxchain.spectral import full_label, raw_matrix_element, sd_ratio

DEFAULT_BOUNDS = {"epsilon": (0.01, 3.0), "eta": (-1.0, 1.0), "delta": (0.99, 1.01)}
PARAM_NAMES = ("epsilon", "eta", "delta")

# simplex edge lengths, per parameter
_SIMPLEX_SCALE = (0.05, 0.02, 2e-4)  # relative for epsilon, absolute for eta and delta
_RESTART_SHRINK = 0.25

TABLE2_ROWS = (
    "LM*", "HLM*H'",
    "L*M", "HL*MH'",
    "MH*", "LMH*L'",
    "M*H", "LM*HL'",
    "LH*", "MLH*M'",
    "L*H", "ML*HM'",
)


@dataclass(frozen=True)
class OptimizationProblem:
    chain: ChainSpec
    control: int
    target: int
    t_g: float = 100.0
    t_r: float = 20.0
    initial: DriveSpec | None = None
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    tolerance: float = 1e-9
    max_evals: int = 300
    # stop a simplex run once this many evaluations improve the best error by < tolerance
    stall_evals: int = 40
    settings: PropagationSettings = field(default_factory=lambda: PropagationSettings(check_convergence=False))
    vz_correct: bool = True
    strict_labels: bool = True

    def __post_init__(self):
        if self.stall_evals < 4:
            raise ParameterError("stall_evals must be >= 4")
        if self.max_evals < 50:
            raise ParameterError(f"max_evals must be >= 50, got {self.max_evals}")
        missing = set(PARAM_NAMES) - set(self.bounds)
        if missing:
            raise ParameterError(f"bounds missing for {sorted(missing)}")
        for name in PARAM_NAMES:
            lo, hi = self.bounds[name]
            if not lo < hi:
                raise ParameterError(f"empty bounds for {name}: [{lo}, {hi}]")
        if self.initial is not None:
            for name in PARAM_NAMES:
                lo, hi = self.bounds[name]
                val = getattr(self.initial, name)
                if not lo <= val <= hi:
                    raise ParameterError(f"initial {name}={val} outside bounds [{lo}, {hi}]")


@dataclass(frozen=True)
class OptResult:
    best: DriveSpec
    error: float
    evals: int
    trace: list  # (epsilon, eta, delta), error
    report: GateErrorReport | None = None
    initial_error: float = float("nan")
    status: str = "ok"


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    error_unoptimized: float
    error_optimized: float
    status: str = "ok"
    best: DriveSpec | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    axis_name: str
    axis_values: tuple
    points: tuple

    def __post_init__(self):
        vals = np.asarray(self.axis_values, dtype=float)
        if len(vals) > 1 and not (np.all(np.diff(vals) > 0) or np.all(np.diff(vals) < 0)):
            raise ParameterError(f"{self.axis_name} values must be strictly monotone")


@dataclass(frozen=True)
class TableRow:
    config: str
    n_qubits: int
    control: int
    target: int
    best: DriveSpec | None
    error: float
    initial_error: float
    evals: int
    status: str = "ok"


def bright_element(dressed, ops, control: int, target: int, eta: float, spectators=None) -> float:
    """|<c=1,t=0| n_c + eta n_t |c=1,t=1>| with spectators in ground."""
    n = dressed.n_qubits
    pair = (control, target)
    lo = full_label(n, pair, (1, 0), spectators)
    hi = full_label(n, pair, (1, 1), spectators)
    val = raw_matrix_element(dressed, ops, control, lo, hi) + eta * raw_matrix_element(dressed, ops, target, lo, hi)
    return abs(val)


def initial_guess(
    dressed, ops, control: int, target: int, t_g: float = 100.0, t_r: float = 20.0, settings=None
) -> DriveSpec:
    """SD ratio from matrix elements, Delta = 1, epsilon from the pi-pulse area.

    The rotating-wave rotation angle of the bright transition is
    ``prefactor * epsilon * |<bright>| * (t_g - t_r)``; setting it to pi gives
    epsilon for the configured amplitude convention.
    """
    settings = settings or PropagationSettings()
    eta = sd_ratio(dressed, ops, control, target)
    m_bright = bright_element(dressed, ops, control, target, eta)
    # a conditional gate needs the two target transitions to differ
    n = dressed.n_qubits
    pair = (control, target)
    f1 = dressed.energy(full_label(n, pair, (1, 1))) - dressed.energy(full_label(n, pair, (1, 0)))
    f0 = dressed.energy(full_label(n, pair, (0, 1))) - dressed.energy(full_label(n, pair, (0, 0)))
    if abs(f1 - f0) < 1e-12 or m_bright < 1e-12:
        raise DegenerateDriveError(
            "no conditional drive: target transitions do not depend on the control state"
        )
    area = t_g - t_r
    epsilon = math.pi / (settings.prefactor * m_bright * area)
    return DriveSpec(epsilon=epsilon, eta=eta, delta=1.0, t_g=t_g, t_r=t_r, control=control, target=target)


class _Objective:
    def __init__(self, problem: OptimizationProblem, dressed, ops, template: DriveSpec):
        self.problem = problem
        self.dressed = dressed
        self.ops = ops
        self.template = template
        self.system = DrivenSystem.build(
            dressed, ops, problem.control, problem.target, problem.settings.spectator_levels
        )
        lo = np.array([problem.bounds[k][0] for k in PARAM_NAMES])
        hi = np.array([problem.bounds[k][1] for k in PARAM_NAMES])
        self.lo, self.hi = lo, hi
        eps0 = template.epsilon
        self.scale = np.array([_SIMPLEX_SCALE[0] * eps0, _SIMPLEX_SCALE[1], _SIMPLEX_SCALE[2]])
        self.origin = np.array([template.epsilon, template.eta, template.delta])
        self.trace = []
        self.failures = 0
        self.run_best = math.inf
        self.run_best_at = 0
        self.stall = problem.stall_evals
        self.tolerance = problem.tolerance

    def reset_stall(self):
        self.run_best = math.inf
        self.run_best_at = len(self.trace)

    def params(self, z):
        return np.clip(self.origin + self.scale * np.asarray(z), self.lo, self.hi)

    def evaluate(self, p) -> GateErrorReport:
        drive = self.template.with_params(*p)
        return evaluate_gate(self.dressed, self.ops, drive, self.problem.settings, self.system, self.problem.vz_correct)

    def __call__(self, z):
        p = self.params(z)
        try:
            err = self.evaluate(p).error
        except FluxchainError:
            self.failures += 1
            err = 1.0
            self.trace.append((tuple(float(x) for x in p), float("nan")))
            return err
        self.trace.append((tuple(float(x) for x in p), float(err)))
        if err < self.run_best - self.tolerance:
            self.run_best = err
            self.run_best_at = len(self.trace)
        elif len(self.trace) - self.run_best_at >= self.stall:
            raise _Stalled
        return err


class _Stalled(Exception):
    pass


def _run_simplex(obj: _Objective, z0, step: float, max_evals: int, tolerance: float):
    simplex = np.vstack([z0] + [z0 + step * e for e in np.eye(3)])
    obj.reset_stall()
    try:
        _minimize(obj, z0, simplex, max_evals, tolerance, step)
    except _Stalled:
        pass


def _minimize(obj, z0, simplex, max_evals, tolerance, step):
    minimize(
        obj,
        z0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxfev": max_evals,
            "fatol": tolerance,
            "xatol": 1e-3 * step,
            "adaptive": False,
        },
    )


def optimize_gate(problem: OptimizationProblem, system=None) -> OptResult:
    """Nelder-Mead over (epsilon, eta, delta) with one restart from the best point.

    ``system`` may pass a prebuilt ``(ops, dressed)`` pair. The returned
    point is the best evaluation seen, so it is never worse than the start.
    """
    if system is None:
        ops, dressed = build_system(problem.chain, strict=problem.strict_labels)
    else:
        ops, dressed = system
    start = problem.initial
    if start is None:
        start = initial_guess(dressed, ops, problem.control, problem.target, problem.t_g, problem.t_r, problem.settings)
        start = _clip_drive(start, problem.bounds)
    start = replace(start, t_g=problem.t_g, t_r=problem.t_r, control=problem.control, target=problem.target)

    obj = _Objective(problem, dressed, ops, start)
    z0 = np.zeros(3)
    obj(z0)
    initial_error = obj.trace[0][1]
    budget = problem.max_evals - 1
    first = max(1, int(budget * 0.7))
    _run_simplex(obj, z0, 1.0, first, problem.tolerance)
    best_p, _ = _best(obj.trace)
    remaining = problem.max_evals - len(obj.trace)
    if remaining > 4:
        zb = (np.asarray(best_p) - obj.origin) / obj.scale
        _run_simplex(obj, zb, _RESTART_SHRINK, remaining, problem.tolerance)

    if obj.failures == len(obj.trace):
        raise OptimizationError("every gate evaluation failed")
    best_p, best_err = _best(obj.trace)
    best = start.with_params(*best_p)
    report = obj.evaluate(best_p)
    return OptResult(
        best=best,
        error=report.error,
        evals=len(obj.trace),
        trace=list(obj.trace),
        report=report,
        initial_error=initial_error,
        status="ok" if obj.failures == 0 else f"{obj.failures} failed evaluations",
    )


def _best(trace):
    ok = [(p, e) for p, e in trace if not math.isnan(e)]
    if not ok:
        return trace[0][0], float("nan")
    return min(ok, key=lambda pe: pe[1])


def _clip_drive(drive: DriveSpec, bounds) -> DriveSpec:
    vals = [float(np.clip(getattr(drive, k), *bounds[k])) for k in PARAM_NAMES]
    return drive.with_params(*vals)


def best_so_far(trace) -> list[float]:
    out, cur = [], math.inf
    for _, e in trace:
        if not math.isnan(e):
            cur = min(cur, e)
        out.append(cur)
    return out


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def spectator_chain(base: ChainSpec, spectator_ej: float) -> ChainSpec:
    """SLMS' chain with spectator E_J and E_J - 0.1 on the outer sites."""
    q = base.qubits[1]
    return named_chain(
        "SLMS'",
        spectator_ej=spectator_ej,
        e_c=q.e_c,
        e_l=q.e_l,
        phi_ext=q.phi_ext,
        j_ff=base.j_ff,
        j_nn=base.j_nn,
        levels_per_qubit=base.levels_per_qubit,
        basis_size=base.basis_size,
    )


@dataclass(frozen=True)
class _SweepTask:
    base: OptimizationProblem
    chain: ChainSpec
    axis_value: float
    reuse: DriveSpec
    optimize: bool
    t_g: float | None = None


def _labeling_status(dressed) -> str:
    from fluxchain.chain import LABEL_THRESHOLD, computational_labels

    worst = min(dressed.overlap_quality[lab] for lab in computational_labels(dressed.n_qubits))
    return "ok" if worst >= LABEL_THRESHOLD else f"hybridized (overlap {worst:.3f})"


def _sweep_point(task: _SweepTask) -> SweepPoint:
    base = task.base
    t_g = base.t_g if task.t_g is None else task.t_g
    extra = {}
    try:
        ops, dressed = build_system(task.chain, strict=False)
        extra["spectator_freq_GHz"] = transition_frequency(ops.spectra[0], 0, 1)
        status = _labeling_status(dressed)
        reuse = replace(task.reuse, t_g=t_g, t_r=base.t_r, control=base.control, target=base.target)
        reuse = _clip_drive(reuse, base.bounds)
        sys_ = DrivenSystem.build(dressed, ops, base.control, base.target, base.settings.spectator_levels)
        unopt = evaluate_gate(dressed, ops, reuse, base.settings, sys_, base.vz_correct).error
        opt, best = float("nan"), None
        if task.optimize:
            prob = replace(base, chain=task.chain, t_g=t_g, initial=reuse, strict_labels=False)
            res = optimize_gate(prob, system=(ops, dressed))
            opt, best = res.error, res.best
        return SweepPoint(task.axis_value, unopt, opt, status, best, extra)
    except FluxchainError as exc:
        return SweepPoint(task.axis_value, float("nan"), float("nan"), f"failed: {exc}", None, extra)


def spectator_sweep(
    base: OptimizationProblem,
    ej_values,
    reuse_two_qubit_params: DriveSpec,
    optimize: bool = True,
    jobs: int = 1,
) -> SweepResult:
    """Gate error of SLMS' against the spectator Josephson energy.

    Each point gets the frozen two-qubit parameters and, with ``optimize``,
    a re-optimization started from them.
    """
    ej_values = [float(x) for x in ej_values]
    tasks = [
        _SweepTask(base, spectator_chain(base.chain, ej), ej, reuse_two_qubit_params, optimize) for ej in ej_values
    ]
    points = _map(_sweep_point, tasks, jobs)
    return SweepResult("spectator_ej_GHz", tuple(ej_values), tuple(points))


def area_scaled(drive: DriveSpec, t_g: float) -> DriveSpec:
    """Rescale epsilon to keep the envelope area fixed at a new gate time."""
    old = drive.t_g - drive.t_r
    new = t_g - drive.t_r
    if new <= 0:
        raise ParameterError(f"t_g={t_g} too short for t_r={drive.t_r}")
    return replace(drive, epsilon=drive.epsilon * old / new, t_g=t_g)


def gate_time_sweep(
    base: OptimizationProblem,
    t_g_values,
    reuse_two_qubit_params: DriveSpec,
    spectator_ej: float = 3.05,
    optimize: bool = True,
    jobs: int = 1,
) -> SweepResult:
    """Gate error of SLMS' against the gate time at a fixed spectator.

    The unoptimized branch reuses the two-qubit parameters with epsilon
    rescaled to conserve pulse area; the optimized branch starts there.
    """
    t_g_values = [float(x) for x in t_g_values]
    chain = spectator_chain(base.chain, spectator_ej)
    tasks = []
    for t_g in t_g_values:
        reuse = area_scaled(replace(reuse_two_qubit_params, t_r=base.t_r), t_g)
        tasks.append(_SweepTask(base, chain, t_g, reuse, optimize, t_g))
    points = _map(_sweep_point, tasks, jobs)
    return SweepResult("t_g_ns", tuple(t_g_values), tuple(points))


def row_pair(name: str) -> tuple[int, int]:
    """(control, target) for a table row name like ``HL*MH'`` or ``LM*``."""
    t = target_index(name)
    if t is None:
        raise ParameterError(f"row {name!r} has no target marker")
    n = len(name.replace("*", "").replace("'", ""))
    gate = (0, 1) if n == 2 else (1, 2)
    if t not in gate:
        raise ParameterError(f"target of {name!r} is not a central qubit")
    control = gate[0] if t == gate[1] else gate[1]
    return control, t


def _two_qubit_key(name: str) -> tuple:
    c, t = row_pair(name)
    tiers = name.replace("*", "").replace("'", "")
    if len(tiers) == 4:
        tiers = tiers[1:3]
        c, t = c - 1, t - 1
    return tiers, c, t


def reproduce_configuration_table(
    rows=TABLE2_ROWS,
    t_g: float = 100.0,
    t_r: float = 20.0,
    settings: PropagationSettings | None = None,
    chain_kwargs: dict | None = None,
    max_evals: int = 300,
) -> list[TableRow]:
    """Optimize every row; four-qubit rows also try the matching two-qubit optimum as a start."""
    settings = settings or PropagationSettings(check_convergence=False)
    chain_kwargs = chain_kwargs or {}
    two_qubit_best = {}
    out = []
    for name in rows:
        try:
            control, target = row_pair(name)
            spec = named_chain(name, **chain_kwargs)
            ops, dressed = build_system(spec)
            prob = OptimizationProblem(spec, control, target, t_g, t_r, settings=settings, max_evals=max_evals)
            guess = _clip_drive(initial_guess(dressed, ops, control, target, t_g, t_r, settings), prob.bounds)
            key = _two_qubit_key(name)
            if spec.n_qubits > 2 and key in two_qubit_best:
                alt = replace(two_qubit_best[key], control=control, target=target)
                sys_ = DrivenSystem.build(dressed, ops, control, target, settings.spectator_levels)
                e_guess = evaluate_gate(dressed, ops, guess, settings, sys_).error
                e_alt = evaluate_gate(dressed, ops, alt, settings, sys_).error
                if e_alt < e_guess:
                    guess = alt
            res = optimize_gate(replace(prob, initial=guess), system=(ops, dressed))
            if spec.n_qubits == 2:
                two_qubit_best[key] = res.best
            out.append(TableRow(name, spec.n_qubits, control, target, res.best, res.error, res.initial_error, res.evals, res.status))
        except FluxchainError as exc:
            out.append(TableRow(name, len(name.replace("*", "").replace("'", "")), -1, -1, None, float("nan"), float("nan"), 0, f"failed: {exc}"))
    return out
