"""Run configured experiments, persist CSV/JSON outputs and check them
against pinned reference values."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from fluxchain import __version__
from fluxchain.chain import build_system, computational_labels
from fluxchain.config import ExperimentConfig, serialize_config
from fluxchain.dynamics import (
    DriveSpec,
    evaluate_gate,
    population_trace,
    write_trace,
)
from fluxchain.errors import FluxchainError, VerificationError
from fluxchain.optimize import (
    OptimizationProblem,
    gate_time_sweep,
    initial_guess,
    optimize_gate,
    reproduce_configuration_table,
    row_pair,
    spectator_sweep,
)
from fluxchain.spectral import (
    ZZ_CSV_COLUMNS,
    table_row,
    zz_vs_coupling_sweep,
)

REFERENCE_SCHEMA = "fluxchain-reference/1"
DEFAULT_REFERENCE = Path(__file__).parent / "data" / "reference_values.yaml"

TABLE1_COLUMNS = ("config", "alpha", "beta", "quantity", "qubit", "bra", "ket", "value", "status")
TABLE2_COLUMNS = (
    "config", "n_qubits", "control", "target", "epsilon", "eta", "delta",
    "t_g_ns", "t_r_ns", "error", "initial_error", "evals", "status",
)
FIG3_COLUMNS = ("spectator_ej_GHz", "spectator_freq_GHz", "error_unoptimized", "error_optimized", "status")
FIG4_COLUMNS = ("t_g_ns", "error_unoptimized", "error_optimized", "status")
GATE_COLUMNS = (
    "config", "control", "target", "epsilon", "eta", "delta", "t_g_ns", "t_r_ns",
    "error", "error_uncorrected", "leakage", "status",
)


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    kind: str
    wall_time_s: float = 0.0
    tasks: list = field(default_factory=list)  # {"task", "status"}
    files: list = field(default_factory=list)
    out_dir: str = ""

    @property
    def success(self) -> bool:
        return all(t["status"] == "ok" for t in self.tasks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["success"] = self.success
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (tuple, list)):
        return "".join(str(x) for x in v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, tuple):
        return "".join(str(x) for x in v)
    return v


class _Writer:
    """Single writer for all outputs of a run; records every file it creates."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[str] = []

    def table(self, stem: str, columns, rows) -> None:
        rows = [list(r) for r in rows]
        path = self.out_dir / f"{stem}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(path.name)
        doc = {"columns": list(columns), "rows": [[_json_value(v) for v in r] for r in rows]}
        self.json(f"{stem}.json", doc)

    def json(self, name: str, doc) -> None:
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, allow_nan=False)
            fh.write("\n")
        self.files.append(path.name)

    def register(self, name: str) -> None:
        self.files.append(name)


def _run_table1(cfg, writer, tasks):
    rows = []
    for name in cfg.configurations:
        try:
            ops, dressed = build_system(cfg.chain_spec(name))
            n = dressed.n_qubits
            pair = (1, 2) if n == 4 else (0, 1)
            states = [(0, 0), (1, 1), (0, 1), (1, 0)] if n == 4 else [()]
            for spect in states:
                alpha, beta = (spect + ("", ""))[:2]
                row = table_row(dressed, ops, spect, pair)
                rows.append([name, alpha, beta, "zz_kHz", "", "", "", row["zz_kHz"], "ok"])
                for rec in row["elements"]:
                    bra = "".join(str(rec.bra_label[q]) for q in pair)
                    ket = "".join(str(rec.ket_label[q]) for q in pair)
                    rows.append([name, alpha, beta, "n_element", f"F{rec.operator_qubit + 1}", bra, ket, rec.value.real, "ok"])
            tasks.append({"task": name, "status": "ok"})
        except FluxchainError as exc:
            rows.append([name, "", "", "zz_kHz", "", "", "", float("nan"), f"failed: {exc}"])
            tasks.append({"task": name, "status": f"failed: {exc}"})
    writer.table("table1", TABLE1_COLUMNS, rows)


def _run_fig2(cfg, writer, tasks):
    records = []
    spect = tuple(cfg.sweep.spectator_states)
    for name in cfg.configurations:
        spec = cfg.chain_spec(name)
        recs = zz_vs_coupling_sweep(spec, cfg.sweep.j_ff, cfg.sweep.j_nn, spectators=spect, config=name)
        records.extend(recs)
        bad = [r for r in recs if r.status != "ok"]
        tasks.append({"task": name, "status": "ok" if not bad else f"{len(bad)} failed points"})
    rows = []
    for r in records:
        a, b = (tuple(r.spectator_state) + (0, 0))[:2]
        rows.append([r.config, float(r.j_ff), float(r.j_nn), a, b, float(r.value), r.status])
    writer.table("zz_sweep", ZZ_CSV_COLUMNS, rows)


def _run_table2(cfg, writer, tasks, jobs):
    from fluxchain.optimize import _map

    names = list(cfg.configurations)
    # a four-qubit row is seeded from the two-qubit row right before it
    groups, i = [], 0
    while i < len(names):
        if i + 1 < len(names) and "'" not in names[i] and "'" in names[i + 1]:
            groups.append(names[i : i + 2])
            i += 2
        else:
            groups.append(names[i : i + 1])
            i += 1
    fn = _Table2Group(cfg)
    results = [r for group in _map(fn, groups, jobs) for r in group]
    rows = []
    for r in results:
        b = r.best
        rows.append([
            r.config, r.n_qubits, r.control, r.target,
            b.epsilon if b else float("nan"), b.eta if b else float("nan"), b.delta if b else float("nan"),
            float(cfg.drive.t_g), float(cfg.drive.t_r), r.error, r.initial_error, r.evals, r.status,
        ])
        tasks.append({"task": r.config, "status": "ok" if r.status == "ok" else r.status})
    writer.table("table2", TABLE2_COLUMNS, rows)


class _Table2Group:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, names):
        cfg = self.cfg
        return reproduce_configuration_table(
            names,
            t_g=cfg.drive.t_g,
            t_r=cfg.drive.t_r,
            settings=cfg.propagation_settings(),
            chain_kwargs=_chain_kwargs(cfg),
            max_evals=cfg.numerics.max_evals,
        )


def _chain_kwargs(cfg) -> dict:
    return dict(
        e_c=cfg.circuit.e_c,
        e_l=cfg.circuit.e_l,
        phi_ext=cfg.circuit.phi_ext,
        j_ff=cfg.coupling.j_ff,
        j_nn=cfg.coupling.j_nn,
        levels_per_qubit=cfg.numerics.levels_per_qubit,
        basis_size=cfg.numerics.basis_size,
    )


def _base_problem(cfg, spectator_ej) -> OptimizationProblem:
    return OptimizationProblem(
        chain=cfg.chain_spec("SLMS'", spectator_ej=spectator_ej),
        control=1,
        target=2,
        t_g=cfg.drive.t_g,
        t_r=cfg.drive.t_r,
        tolerance=cfg.numerics.opt_tolerance,
        max_evals=cfg.numerics.max_evals,
        settings=cfg.propagation_settings(),
        vz_correct=cfg.numerics.vz_correct,
        strict_labels=False,
    )


def _sweep_tasks(points, tasks, label):
    for p in points:
        tasks.append({"task": f"{label}={p.axis_value!r}", "status": "ok" if p.status == "ok" else p.status})


def _run_fig3(cfg, writer, tasks, jobs):
    ej = cfg.sweep.spectator_ej
    base = _base_problem(cfg, ej[0])
    res = spectator_sweep(base, ej, cfg.reuse_drive(), optimize=cfg.sweep.optimize, jobs=jobs)
    rows = [
        [p.axis_value, p.extra.get("spectator_freq_GHz", float("nan")), p.error_unoptimized, p.error_optimized, p.status]
        for p in res.points
    ]
    # a hybridized point is still a computed point; only hard failures count
    for p in res.points:
        status = "ok" if not p.status.startswith("failed") else p.status
        tasks.append({"task": f"spectator_ej={p.axis_value!r}", "status": status})
    writer.table("fig3_sweep", FIG3_COLUMNS, rows)


def _run_fig4(cfg, writer, tasks, jobs):
    base = _base_problem(cfg, cfg.sweep.fixed_spectator_ej)
    res = gate_time_sweep(
        base, cfg.sweep.t_g, cfg.reuse_drive(), cfg.sweep.fixed_spectator_ej, optimize=cfg.sweep.optimize, jobs=jobs
    )
    rows = [[p.axis_value, p.error_unoptimized, p.error_optimized, p.status] for p in res.points]
    _sweep_tasks(res.points, tasks, "t_g")
    writer.table("fig4_sweep", FIG4_COLUMNS, rows)


def _run_custom(cfg, writer, tasks):
    name = cfg.configurations[0]
    control, target = row_pair(name)
    settings = cfg.propagation_settings()
    d = cfg.drive
    try:
        ops, dressed = build_system(cfg.chain_spec(name))
        if d.epsilon is not None and d.eta is not None:
            drive = DriveSpec(d.epsilon, d.eta, d.delta, d.t_g, d.t_r, control, target)
        else:
            drive = initial_guess(dressed, ops, control, target, d.t_g, d.t_r, settings)
        if cfg.optimize:
            prob = OptimizationProblem(
                cfg.chain_spec(name), control, target, d.t_g, d.t_r, initial=drive,
                tolerance=cfg.numerics.opt_tolerance, max_evals=cfg.numerics.max_evals,
                settings=settings, vz_correct=cfg.numerics.vz_correct,
            )
            drive = optimize_gate(prob, system=(ops, dressed)).best
        rep = evaluate_gate(dressed, ops, drive, settings, vz_correct=cfg.numerics.vz_correct)
        row = [name, control, target, drive.epsilon, drive.eta, drive.delta, d.t_g, d.t_r,
               rep.error, rep.error_uncorrected, rep.leakage, "ok"]
        status = "ok"
        if cfg.trace.enabled:
            n = dressed.n_qubits
            initial = tuple(cfg.trace.initial) if cfg.trace.initial else computational_labels(n)[0]
            times, env, pops = population_trace(dressed, ops, drive, initial, settings, cfg.trace.samples)
            write_trace(writer.out_dir / "trace.csv", times, env, pops, n)
            writer.register("trace.csv")
    except FluxchainError as exc:
        status = f"failed: {exc}"
        row = [name, control, target] + [float("nan")] * 8 + [status]
    tasks.append({"task": name, "status": status})
    writer.table("gate", GATE_COLUMNS, [row])


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> RunManifest:
    """Dispatch one configured experiment and write its outputs plus manifest."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config_hash(cfg), tool_version=__version__, kind=cfg.kind, out_dir=str(out))
    writer = _Writer(out)
    start = time.perf_counter()
    with open(out / "config.yaml", "w") as fh:
        fh.write(serialize_config(cfg))
    writer.register("config.yaml")
    tasks = manifest.tasks
    if cfg.kind == "table1":
        _run_table1(cfg, writer, tasks)
    elif cfg.kind == "fig2":
        _run_fig2(cfg, writer, tasks)
    elif cfg.kind == "table2":
        _run_table2(cfg, writer, tasks, jobs)
    elif cfg.kind == "fig3":
        _run_fig3(cfg, writer, tasks, jobs)
    elif cfg.kind == "fig4":
        _run_fig4(cfg, writer, tasks, jobs)
    else:
        _run_custom(cfg, writer, tasks)
    manifest.wall_time_s = time.perf_counter() - start
    writer.register("manifest.json")
    manifest.files = list(writer.files)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=1)
        fh.write("\n")
    missing = [f for f in manifest.files if not (out / f).exists()]
    if missing:
        raise FluxchainError(f"declared outputs missing: {missing}")
    return manifest


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    expected: float | None
    deviation: float
    passed: bool
    origin: str = ""
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple
    warnings: tuple = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            exp = "" if c.expected is None else f" expected {c.expected!r}"
            out.append(f"{tag} {c.name}: measured {c.measured!r}{exp} deviation {c.deviation:.3g} {c.detail}".rstrip())
        out.extend(f"WARNING {w}" for w in self.warnings)
        return out


def _load_table(run_dir: Path, name: str):
    path = run_dir / name
    if not path.exists():
        raise VerificationError(f"run output {name} not found in {run_dir}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _match_row(rows, match: dict, name: str):
    hits = [r for r in rows if all(r.get(k) == str(v) for k, v in match.items())]
    if not rows or any(k not in rows[0] for k in match):
        missing = [k for k in match if not rows or k not in rows[0]]
        raise VerificationError(f"{name}: output lacks column(s) {missing}")
    if len(hits) != 1:
        return None
    return hits[0]


def verify_against_reference(run_dir, reference) -> VerificationReport:
    """Compare run outputs to pinned values.

    Each reference entry names an output table, a row selector, a column and
    either an expected value with ``rel_tol``/``abs_tol`` or ``max``/``min``
    bounds; ``magnitude: true`` compares absolute values.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise VerificationError(f"run directory {run_dir} does not exist")
    try:
        with open(reference) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise VerificationError(f"cannot read reference {reference}: {exc.strerror}") from None
    if doc is None or doc == {}:
        return VerificationReport((), ("reference is empty; nothing verified",))
    if not isinstance(doc, dict) or doc.get("schema") != REFERENCE_SCHEMA:
        raise VerificationError(f"reference schema must be {REFERENCE_SCHEMA!r}")
    entries = doc.get("values") or []
    if not isinstance(entries, list):
        raise VerificationError("reference 'values' must be a list")
    tables = {}
    checks, warnings = [], []
    if not entries:
        warnings.append("reference lists no values; nothing verified")
    for i, ent in enumerate(entries):
        try:
            fname, column, match = ent["file"], ent["column"], dict(ent.get("match") or {})
        except (KeyError, TypeError):
            raise VerificationError(f"reference entry {i} needs file, column and match") from None
        label = ent.get("name") or f"{fname}[{','.join(f'{k}={v}' for k, v in match.items())}].{column}"
        if not (run_dir / fname).exists():
            warnings.append(f"{label}: {fname} not produced by this run; skipped")
            continue
        if fname not in tables:
            tables[fname] = _load_table(run_dir, fname)
        rows = tables[fname]
        if rows and column not in rows[0]:
            raise VerificationError(f"{label}: output lacks column {column!r}")
        row = _match_row(rows, match, label)
        origin = str(ent.get("origin", ""))
        if row is None:
            checks.append(Check(label, float("nan"), ent.get("expected"), math.inf, False, origin, "row not found"))
            continue
        try:
            measured = float(row[column])
        except ValueError:
            checks.append(Check(label, float("nan"), ent.get("expected"), math.inf, False, origin, "not a number"))
            continue
        value = abs(measured) if ent.get("magnitude") else measured
        checks.append(_evaluate_entry(label, value, ent, origin))
    return VerificationReport(tuple(checks), tuple(warnings))


def _evaluate_entry(label, value, ent, origin) -> Check:
    if math.isnan(value):
        return Check(label, value, ent.get("expected"), math.inf, False, origin, "nan")
    if "expected" in ent:
        exp = float(ent["expected"])
        dev = abs(value - exp)
        if "rel_tol" in ent:
            rel = dev / abs(exp) if exp else math.inf
            return Check(label, value, exp, rel, rel <= float(ent["rel_tol"]), origin, f"(rel_tol {ent['rel_tol']})")
        tol = float(ent.get("abs_tol", 0.0))
        return Check(label, value, exp, dev, dev <= tol, origin, f"(abs_tol {tol})")
    ok, dev, detail = True, 0.0, []
    if "max" in ent:
        hi = float(ent["max"])
        ok &= value < hi
        dev = max(dev, value - hi)
        detail.append(f"max {hi}")
    if "min" in ent:
        lo = float(ent["min"])
        ok &= value > lo
        dev = max(dev, lo - value)
        detail.append(f"min {lo}")
    if not detail:
        raise VerificationError(f"{label}: entry needs expected or max/min")
    return Check(label, value, None, max(dev, 0.0), bool(ok), origin, "(" + ", ".join(detail) + ")")

