"""Experiment configuration files.

One experiment per file, written in TOML.  Every table maps onto a
dataclass below; unknown tables or keys are rejected with the offending
key path and, when it can be located, its line number.

Example::

    [experiment]
    kind = "flow"            # "flow" or "homog"
    name = "torus_nonkahler_small"
    seed = 0

    [domain]
    type = "torus"           # or "algebra" with catalog = "sl2c"
    n = 2
    N = 12

    [initial]
    # (1,0)-form potential: [component (0-based), amplitude, [kx..], [ky..]]
    modes = [[0, 0.05, [0, 1], [0, 0]]]

    [integrator]
    safety = 0.2
    t_max = 3.0
    stop_tol = 1e-6

    [monitors]
    cadence = 10

    [output]
    dir = "runs/torus_nonkahler_small"
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    """Schema or parse error in an experiment file."""


@dataclass
class ExperimentSection:
    kind: str = "flow"
    name: str = "experiment"
    seed: int = 0


@dataclass
class DomainSection:
    type: str = "torus"
    n: int = 2
    N: int = 12
    catalog: str = ""


@dataclass
class InitialSection:
    # torus: potential modes, random potential, or Kahler potential modes
    modes: list = field(default_factory=list)
    random_amplitude: float = 0.0
    random_kmax: int = 1
    kahler_modes: list = field(default_factory=list)
    # algebra: "identity" or a list of rows; optional imaginary part
    metric: object = "identity"
    metric_imag: list = field(default_factory=list)


@dataclass
class IntegratorSection:
    dt: float = 0.0  # 0 selects the CFL step
    safety: float = 0.2
    t_max: float = 2.0
    stop_tol: float = 1e-6
    max_steps: int = 200_000
    wall_clock: float = 0.0  # seconds, 0 disables
    adaptive: bool = True
    reject_on_regress: bool = True
    dealias: bool = True
    stop_on_convergence: bool = True


@dataclass
class MonitorsSection:
    cadence: int = 10
    # "maximum_principle": monotone verdicts; "diagnostics": torsion, Ricci,
    # Hodge-form agreement, consistency and inequality margins per sample
    suites: list = field(default_factory=lambda: ["maximum_principle", "diagnostics"])
    p: int = 1
    slack: float = 1e-7
    error_estimate: bool = False
    kahler_factor: float = 10.0


@dataclass
class IdentitiesSection:
    horizon: float = 0.1
    n_coarse: int = 40
    min_order: float = 1.9
    calibration_samples: int = 5
    calibration_amplitude: float = 0.05
    calibration_tol: float = 1e-6
    passenger_wave: float = 0.1
    # test hooks: flipping a sign corrupts exactly one family of checks
    covariant_q_sign: float = -1.0
    contravariant_q_sign: float = 1.0


@dataclass
class ScanSection:
    n_starts: int = 100
    tol: float = 1e-10
    max_iter: int = 500
    log_diag_bound: float = 3.0
    offdiag_bound: float = 5.0


@dataclass
class OutputSection:
    dir: str = "pcflab_out"
    formats: list = field(default_factory=lambda: ["csv"])  # summary.json is always written
    snapshot: bool = True
    plot_script: bool = True


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    domain: DomainSection = field(default_factory=DomainSection)
    initial: InitialSection = field(default_factory=InitialSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    monitors: MonitorsSection = field(default_factory=MonitorsSection)
    identities: IdentitiesSection = field(default_factory=IdentitiesSection)
    scan: ScanSection = field(default_factory=ScanSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str = "<memory>"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source")
        return d


_SECTION_TYPES = {
    "experiment": ExperimentSection, "domain": DomainSection, "initial": InitialSection,
    "integrator": IntegratorSection, "monitors": MonitorsSection,
    "identities": IdentitiesSection, "scan": ScanSection, "output": OutputSection,
}
_CHOICES = {
    ("experiment", "kind"): ("flow", "homog"),
    ("domain", "type"): ("torus", "algebra"),
}
_SUITES = ("maximum_principle", "diagnostics")
_FORMATS = ("csv", "json")


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*\[?\s*{re.escape(key)}\s*[\]=]", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text, source, key):
    line = _line_of(text, key.split(".")[-1])
    return f"{source}:{line}" if line else source


def _coerce(value, default, path, text, source):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{_where(text, source, path)}: {path} must be true/false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{_where(text, source, path)}: {path} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{_where(text, source, path)}: {path} must be a number")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{_where(text, source, path)}: {path} must be a string")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{_where(text, source, path)}: {path} must be a list")
    return value


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = ExperimentConfig(source=source)
    for section, table in data.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"{_where(text, source, section)}: unknown table [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"{_where(text, source, section)}: [{section}] must be a table")
        obj = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(obj)}
        for key, value in table.items():
            path = f"{section}.{key}"
            if key not in names:
                raise ConfigError(f"{_where(text, source, key)}: unknown key {path}")
            value = _coerce(value, getattr(obj, key), path, text, source)
            choices = _CHOICES.get((section, key))
            if choices and value not in choices:
                raise ConfigError(f"{_where(text, source, key)}: {path} must be one of {choices}")
            setattr(obj, key, value)
    _validate(cfg, text, source)
    return cfg


def _validate(cfg: ExperimentConfig, text: str, source: str):
    def fail(key, msg):
        raise ConfigError(f"{_where(text, source, key)}: {msg}")

    if cfg.domain.type == "torus":
        if cfg.domain.N < 8 or cfg.domain.N % 2:
            fail("N", "domain.N must be even and >= 8")
        if cfg.domain.n < 1:
            fail("n", "domain.n must be >= 1")
        for m in cfg.initial.modes:
            if not (isinstance(m, list) and len(m) == 4 and len(m[2]) == len(m[3]) == cfg.domain.n):
                fail("modes", "initial.modes entries are [component, amplitude, [kx..], [ky..]]")
        for m in cfg.initial.kahler_modes:
            if not (isinstance(m, list) and len(m) == 3 and len(m[1]) == len(m[2]) == cfg.domain.n):
                fail("kahler_modes", "initial.kahler_modes entries are [amplitude, [kx..], [ky..]]")
        if cfg.initial.kahler_modes and (cfg.initial.modes or cfg.initial.random_amplitude):
            fail("kahler_modes", "Kahler modes cannot be combined with a (1,0)-form potential")
    else:
        if not cfg.domain.catalog:
            fail("catalog", "domain.catalog is required for algebra domains")
        if cfg.experiment.kind != "homog":
            fail("kind", "algebra domains need experiment.kind = \"homog\"")
    if cfg.experiment.kind == "homog" and cfg.domain.type != "algebra":
        fail("type", "homogeneous experiments need domain.type = \"algebra\"")
    for s in cfg.monitors.suites:
        if s not in _SUITES:
            fail("suites", f"monitors.suites entries must be among {_SUITES}")
    for f in cfg.output.formats:
        if f not in _FORMATS:
            fail("formats", f"output.formats entries must be among {_FORMATS}")
    if cfg.monitors.error_estimate and "diagnostics" not in cfg.monitors.suites:
        fail("error_estimate", "monitors.error_estimate needs the \"diagnostics\" suite")
    if cfg.monitors.cadence < 1:
        fail("cadence", "monitors.cadence must be >= 1")
    if cfg.integrator.t_max <= 0:
        fail("t_max", "integrator.t_max must be positive")


def bundled_configs() -> list[str]:
    root = Path(str(resources.files("pcflab") / "data" / "configs"))
    return sorted(p.name for p in root.glob("*.cfg"))


def resolve_config_path(name_or_path) -> Path:
    """A path on disk, or the name of a bundled config."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = Path(str(resources.files("pcflab") / "data" / "configs")) / p.name
    if bundled.exists():
        return bundled
    raise ConfigError(f"config file not found: {name_or_path} (bundled: {bundled_configs()})")


def load_config(name_or_path) -> ExperimentConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(path.read_text(), str(path))
