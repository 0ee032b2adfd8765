"""YAML experiment configuration: parsing, validation and round-trip serialization."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from fluxchain.chain import (
    E_C_DEFAULT,
    E_L_DEFAULT,
    J_FF_DEFAULT,
    ChainSpec,
    named_chain,
    parse_tiers,
    tier_ej,
)
from fluxchain.dynamics import AMPLITUDE_CONVENTIONS, DriveSpec, PropagationSettings
from fluxchain.errors import ConfigError, FluxchainError
from fluxchain.optimize import TABLE2_ROWS, row_pair

KINDS = ("table1", "table2", "fig2", "fig3", "fig4", "custom")
TABLE1_CONFIGS = ("HLMH'", "LMHL'", "MLHM'")

# two-qubit LM optimum used as the frozen drive of the spectator sweeps
LM_REFERENCE_DRIVE = {"epsilon": 0.48790, "eta": -0.108846, "delta": 1.0000264}


@dataclass
class CircuitConfig:
    e_c: float = E_C_DEFAULT
    e_l: float = E_L_DEFAULT
    phi_ext: float = math.pi


@dataclass
class CouplingConfig:
    j_ff: float = J_FF_DEFAULT
    j_nn: float = 0.0


@dataclass
class DriveConfig:
    epsilon: float | None = None
    eta: float | None = None
    delta: float = 1.0
    t_g: float = 100.0
    t_r: float = 20.0
    convention: str = "h_half"


@dataclass
class SweepConfig:
    j_ff: list = field(default_factory=lambda: [0.001, 0.002, 0.003, 0.004, 0.005, 0.006])
    j_nn: list = field(default_factory=lambda: [0.0, -0.01])
    spectator_states: list = field(default_factory=lambda: [1, 1])
    spectator_ej: list = field(default_factory=lambda: [round(float(x), 6) for x in np.linspace(2.5, 5.2, 55)])
    t_g: list = field(default_factory=lambda: [50.0, 60.0, 70.0, 80.0, 90.0, 100.0])
    fixed_spectator_ej: float = 3.05
    optimize: bool = True
    reuse: dict = field(default_factory=lambda: dict(LM_REFERENCE_DRIVE))


@dataclass
class NumericsConfig:
    basis_size: int = 80
    levels_per_qubit: int = 5
    steps_per_period: int = 40
    step_tolerance: float = 1e-6
    max_halvings: int = 4
    check_convergence: bool = False
    spectator_levels: int | None = 2
    max_evals: int = 300
    opt_tolerance: float = 1e-9
    vz_correct: bool = True


@dataclass
class TraceConfig:
    enabled: bool = False
    initial: list | None = None
    samples: int = 201


@dataclass
class ExperimentConfig:
    kind: str
    name: str = ""
    output_dir: str = "runs"
    configurations: list = field(default_factory=list)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    drive: DriveConfig = field(default_factory=DriveConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    optimize: bool = False

    def chain_spec(self, name: str, spectator_ej: float | None = None, **overrides) -> ChainSpec:
        kw = dict(
            e_c=self.circuit.e_c,
            e_l=self.circuit.e_l,
            phi_ext=self.circuit.phi_ext,
            j_ff=self.coupling.j_ff,
            j_nn=self.coupling.j_nn,
            levels_per_qubit=self.numerics.levels_per_qubit,
            basis_size=self.numerics.basis_size,
        )
        kw.update(overrides)
        return named_chain(name, spectator_ej=spectator_ej, **kw)

    def propagation_settings(self) -> PropagationSettings:
        n = self.numerics
        return PropagationSettings(
            steps_per_period=n.steps_per_period,
            step_tolerance=n.step_tolerance,
            max_halvings=n.max_halvings,
            check_convergence=n.check_convergence,
            amplitude_convention=self.drive.convention,
            spectator_levels=n.spectator_levels,
        )

    def reuse_drive(self) -> DriveSpec:
        r = self.sweep.reuse
        return DriveSpec(r["epsilon"], r["eta"], r.get("delta", 1.0), self.drive.t_g, self.drive.t_r, 1, 2)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "circuit": CircuitConfig,
    "coupling": CouplingConfig,
    "drive": DriveConfig,
    "sweep": SweepConfig,
    "numerics": NumericsConfig,
    "trace": TraceConfig,
}

_DEFAULT_CONFIGS = {
    "table1": list(TABLE1_CONFIGS),
    "fig2": list(TABLE1_CONFIGS),
    "table2": list(TABLE2_ROWS),
    "fig3": ["SLMS'"],
    "fig4": ["SLMS'"],
}


class _LineLoader(yaml.SafeLoader):
    pass


# YAML 1.1 reads 1e-3 as a string; accept exponent floats without a dot
_LineLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.VERBOSE,
    ),
    list("-+0123456789."),
)


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    return out


def _where(lines, path) -> str:
    line = lines.get(tuple(path))
    dotted = ".".join(path)
    return f"{dotted} (line {line})" if line else dotted


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coerce(value, default, path, lines, problems):
    """Type-check a scalar or list against the default's type."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{_where(lines, path)}: expected true/false, got {value!r}")
        return value
    if isinstance(default, float) or (default is None and _is_number(value)):
        if not _is_number(value):
            problems.append(f"{_where(lines, path)}: expected a number, got {value!r}")
            return value
        return float(value) if isinstance(default, float) else value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            problems.append(f"{_where(lines, path)}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            problems.append(f"{_where(lines, path)}: expected a string, got {value!r}")
        return value
    if isinstance(default, list) or default is None and isinstance(value, list):
        if not isinstance(value, list):
            problems.append(f"{_where(lines, path)}: expected a list, got {value!r}")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            problems.append(f"{_where(lines, path)}: expected a mapping, got {value!r}")
        return value
    return value


def _build_section(cls, raw, path, lines, problems):
    obj = cls()
    if raw is None:
        return obj
    if not isinstance(raw, dict):
        problems.append(f"{_where(lines, path)}: expected a mapping")
        return obj
    names = {f.name for f in fields(cls)}
    for key, value in raw.items():
        p = path + (str(key),)
        if key not in names:
            problems.append(f"{_where(lines, p)}: unknown key")
            continue
        setattr(obj, key, _coerce(value, getattr(obj, key), p, lines, problems))
    return obj


def _validate(cfg: ExperimentConfig, lines, problems) -> None:
    def bad(path, msg):
        problems.append(f"{_where(lines, path)}: {msg}")

    c = cfg.circuit
    for name in ("e_c", "e_l"):
        v = getattr(c, name)
        if _is_number(v) and not v > 0:
            bad(("circuit", name), f"must be > 0, got {v}")
    if _is_number(c.phi_ext) and not math.isfinite(c.phi_ext):
        bad(("circuit", "phi_ext"), "must be finite")

    for name in cfg.configurations if isinstance(cfg.configurations, list) else []:
        try:
            if not isinstance(name, str):
                raise FluxchainError(f"expected a name, got {name!r}")
            parse_tiers(name)
            if cfg.kind == "table2":
                row_pair(name)
            if "S" not in name:
                tier_ej(name)
        except FluxchainError as exc:
            bad(("configurations",), f"{exc}")

    d = cfg.drive
    if _is_number(d.t_g) and _is_number(d.t_r) and not d.t_g > 2 * d.t_r > 0:
        bad(("drive", "t_g"), f"need t_g > 2 t_r > 0, got t_g={d.t_g}, t_r={d.t_r}")
    if d.epsilon is not None and (not _is_number(d.epsilon) or not d.epsilon > 0):
        bad(("drive", "epsilon"), f"must be > 0, got {d.epsilon}")
    if d.convention not in AMPLITUDE_CONVENTIONS:
        bad(("drive", "convention"), f"must be one of {sorted(AMPLITUDE_CONVENTIONS)}")

    n = cfg.numerics
    if isinstance(n.basis_size, int) and n.basis_size < 20:
        bad(("numerics", "basis_size"), "must be >= 20")
    if isinstance(n.levels_per_qubit, int) and n.levels_per_qubit < 3:
        bad(("numerics", "levels_per_qubit"), "must be >= 3")
    if (
        isinstance(n.basis_size, int)
        and isinstance(n.levels_per_qubit, int)
        and n.levels_per_qubit > n.basis_size / 4
    ):
        bad(("numerics", "levels_per_qubit"), "must not exceed basis_size / 4")
    if isinstance(n.steps_per_period, int) and n.steps_per_period < 40:
        bad(("numerics", "steps_per_period"), "must be >= 40")
    if isinstance(n.max_evals, int) and n.max_evals < 50:
        bad(("numerics", "max_evals"), "must be >= 50")
    if n.spectator_levels is not None and (not isinstance(n.spectator_levels, int) or n.spectator_levels < 2):
        bad(("numerics", "spectator_levels"), "must be an integer >= 2 or null")

    s = cfg.sweep
    for key in ("j_ff", "j_nn", "spectator_ej", "t_g"):
        vals = getattr(s, key)
        if not isinstance(vals, list) or not vals or not all(_is_number(v) for v in vals):
            bad(("sweep", key), "must be a nonempty list of numbers")
    for key in ("spectator_ej", "t_g"):
        vals = getattr(s, key)
        if isinstance(vals, list) and len(vals) > 1 and all(_is_number(v) for v in vals):
            diffs = np.diff(vals)
            if not (np.all(diffs > 0) or np.all(diffs < 0)):
                bad(("sweep", key), "must be strictly monotone")
    if isinstance(s.t_g, list) and _is_number(d.t_r):
        short = [t for t in s.t_g if _is_number(t) and not t > 2 * d.t_r]
        if short:
            bad(("sweep", "t_g"), f"gate times {short} not longer than 2 t_r = {2 * d.t_r}")
    if isinstance(s.reuse, dict):
        for key in s.reuse:
            if key not in ("epsilon", "eta", "delta"):
                bad(("sweep", "reuse", str(key)), "unknown key")
        for key in ("epsilon", "eta"):
            if not _is_number(s.reuse.get(key)):
                bad(("sweep", "reuse", key), "required number")
    if isinstance(s.spectator_states, list) and len(s.spectator_states) != 2:
        bad(("sweep", "spectator_states"), "must list two spectator levels")

    if cfg.kind == "custom":
        if len(cfg.configurations) != 1:
            bad(("configurations",), "custom runs need exactly one configuration")
        elif isinstance(cfg.configurations[0], str):
            try:
                row_pair(cfg.configurations[0])
            except FluxchainError as exc:
                bad(("configurations",), str(exc))
        if not cfg.optimize and (d.epsilon is None or d.eta is None):
            bad(("drive",), "custom runs without optimize need epsilon and eta")
    t = cfg.trace
    if t.enabled and cfg.kind != "custom":
        bad(("trace", "enabled"), "traces are only written for custom runs")
    if t.initial is not None and not (isinstance(t.initial, list) and all(v in (0, 1) for v in t.initial)):
        bad(("trace", "initial"), "must be a list of 0/1 levels")
    if isinstance(t.samples, int) and t.samples < 2:
        bad(("trace", "samples"), "must be >= 2")


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate YAML text; every problem found is reported at once."""
    try:
        node = yaml.compose(text, Loader=_LineLoader)
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"{source}: YAML syntax error{where}: {getattr(exc, 'problem', exc)}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{source}: top level must be a mapping"])
    lines = _line_index(node)
    problems: list[str] = []

    kind = raw.get("kind")
    if kind not in KINDS:
        problems.append(f"{_where(lines, ('kind',))}: must be one of {list(KINDS)}, got {kind!r}")
        kind = "custom"
    cfg = ExperimentConfig(kind=kind)
    top = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        p = (str(key),)
        if key not in top:
            problems.append(f"{_where(lines, p)}: unknown key")
        elif key == "kind":
            continue
        elif key in _SECTIONS:
            setattr(cfg, key, _build_section(_SECTIONS[key], value, p, lines, problems))
        else:
            setattr(cfg, key, _coerce(value, getattr(cfg, key), p, lines, problems))
    if not cfg.configurations:
        cfg.configurations = list(_DEFAULT_CONFIGS.get(kind, []))
    _validate(cfg, lines, problems)
    if problems:
        raise ConfigError([f"{source}: {p}" for p in problems])
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config: {exc.strerror}"]) from None
    return parse_config_text(text, str(path))


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
