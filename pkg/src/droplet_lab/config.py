"""Run configuration: sectioned INI files mapped onto dataclasses."""
from __future__ import annotations

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is ``section.key``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class PotentialSection:
    family: str = "GaussianWell"
    amplitude: float = 1.0
    width: float = 1.0
    expression: str = ""


@dataclass
class SystemSection:
    n_particles: int = 2
    dim: int = 1
    delta: float = 0.5


@dataclass
class SimulationSection:
    beta: tuple = (8.0,)
    dt: float = 1e-3
    t_max: float = 20.0
    n_paths: int = 10000
    seed: int = 0
    store_stride: int = 10
    n_trajectories: int = 5
    allow_large_dt: bool = False


@dataclass
class SpectralSection:
    n_points: int = 0          # 0 selects the default for the dimension
    n_eigs: int = 2
    discretization: str = "weighted"
    penalized: bool = False


@dataclass
class QsdSection:
    n_copies: int = 5000
    burn_in: float = 0.0       # 0 selects 10/λ₂ from the spectral solve
    horizon: float = 20.0
    dt: float = 1e-3
    bins: int = 50
    sample_every: int = 20


@dataclass
class VerifySection:
    identity_dt: float = 2.5e-5
    identity_paths: int = 10000
    identity_times: tuple = (1.0, 3.0, 10.0)
    tv_dt: float = 2e-4
    tv_paths: int = 100000
    tv_times: tuple = (0.25, 0.5, 0.75, 1.0, 1.25)
    window_beta: tuple = (6.0, 9.0, 12.0)
    window_dt: float = 5e-4
    window_paths: int = 200000
    n_modes: int = 6


SECTIONS = {
    "potential": PotentialSection,
    "system": SystemSection,
    "simulation": SimulationSection,
    "spectral": SpectralSection,
    "qsd": QsdSection,
    "verify": VerifySection,
}


@dataclass
class Config:
    potential: PotentialSection = field(default_factory=PotentialSection)
    system: SystemSection = field(default_factory=SystemSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    qsd: QsdSection = field(default_factory=QsdSection)
    verify: VerifySection = field(default_factory=VerifySection)

    def override(self, section: str, **values) -> "Config":
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        sec = getattr(self, section)
        for k, v in values.items():
            _coerce(f"{section}.{k}", _field_type(type(sec), k), v)
        return replace(self, **{section: replace(sec, **values)})

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _format(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def potential_spec(self):
        from .potential import PotentialSpec

        p = self.potential
        if p.family == "GaussianWell":
            return PotentialSpec.gaussian_well(p.amplitude, p.width)
        if p.family == "UserRadial":
            if not p.expression:
                raise ConfigError("potential.expression", "UserRadial needs an expression in r")
            return PotentialSpec.from_expression(p.expression)
        raise ConfigError("potential.family", f"unknown family {p.family!r}")

    def validate(self) -> "Config":
        s = self.system
        if s.n_particles < 2:
            raise ConfigError("system.n_particles", "need at least 2 particles")
        if s.dim < 1:
            raise ConfigError("system.dim", "dimension must be positive")
        if not s.delta > 0:
            raise ConfigError("system.delta", "delta must be positive")
        sim = self.simulation
        if not sim.beta or any(b <= 0 for b in sim.beta):
            raise ConfigError("simulation.beta", "beta values must be positive")
        if not sim.dt > 0:
            raise ConfigError("simulation.dt", "dt must be positive")
        if sim.n_paths < 1:
            raise ConfigError("simulation.n_paths", "need at least one path")
        if not 0 <= sim.seed < 2**64:
            raise ConfigError("simulation.seed", "seed must be an unsigned 64-bit integer")
        if self.spectral.discretization not in ("weighted", "witten"):
            raise ConfigError("spectral.discretization", "must be 'weighted' or 'witten'")
        if self.qsd.n_copies < 2:
            raise ConfigError("qsd.n_copies", "need at least two copies")
        return self


def _field_type(cls, name):
    hints = typing.get_type_hints(cls)
    if name not in hints:
        raise ConfigError(f"{cls.__name__}.{name}", "unknown key")
    return hints[name]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _coerce(path: str, typ, raw):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            low = str(raw).strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            if isinstance(raw, (tuple, list)):
                return tuple(float(x) for x in raw)
            return parse_list(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_list(text: str) -> tuple:
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def from_ini(text: str) -> Config:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    kwargs = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown section")
    for name, cls in SECTIONS.items():
        values = {}
        if cp.has_section(name):
            for key, raw in cp[name].items():
                values[key] = _coerce(f"{name}.{key}", _field_type(cls, key), raw)
        kwargs[name] = cls(**values)
    return Config(**kwargs)


def load(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return from_ini(fh.read())
