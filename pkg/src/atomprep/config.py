"""Experiment configuration: YAML with an explicit schema version.

Unknown keys anywhere in the document are errors.  Every section is parsed
and validated (atom, form factor, schedule) before any computation runs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, ParameterError
from .model import AtomModel, CouplingSchedule, FormFactor

SCHEMA_VERSION = 1
KINDS = ("validate", "lindblad", "dyson-compare", "prepare", "thermal", "kp-check",
         "cluster-demo", "grid")


def _strict(section: str, data: Any, allowed: set[str]) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(data).__name__}")
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {sorted(extra)}; allowed {sorted(allowed)}")
    return dict(data)


def _complex_matrix(section: str, rows) -> np.ndarray:
    try:
        out = [[complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x) for x in r]
               for r in rows]
        return np.array(out, dtype=complex)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{section}: malformed matrix entry ({exc})") from None


@dataclass(frozen=True)
class AtomSpec:
    preset: str | None = "sigma_x"
    energies: tuple | None = None
    coupling: tuple | None = None
    random_n: int | None = None
    random_seed: int = 0

    @classmethod
    def parse(cls, data) -> "AtomSpec":
        d = _strict("atom", data, {"preset", "energies", "coupling", "random"})
        if "random" in d:
            r = _strict("atom.random", d["random"], {"n", "seed"})
            return cls(preset=None, random_n=int(r.get("n", 2)), random_seed=int(r.get("seed", 0)))
        if "energies" in d:
            e = tuple(float(x) for x in d["energies"])
            g = d.get("coupling")
            if g is None:
                raise ConfigError("atom: 'coupling' is required with 'energies'")
            G = _complex_matrix("atom.coupling", g)
            return cls(preset=None, energies=e,
                       coupling=tuple(tuple((z.real, z.imag) for z in row) for row in G))
        preset = d.get("preset", "sigma_x")
        if preset not in ("sigma_x", "ladder3"):
            raise ConfigError(f"atom: unknown preset {preset!r}")
        return cls(preset=preset)

    def build(self) -> AtomModel:
        if self.random_n is not None:
            return AtomModel.random(self.random_n, np.random.default_rng(self.random_seed))
        if self.energies is not None:
            G = np.array([[complex(a, b) for a, b in row] for row in self.coupling])
            return AtomModel(np.array(self.energies), G)
        if self.preset == "ladder3":
            return AtomModel.ladder([0.0, 1.0, 2.3])
        return AtomModel.two_level_sigma_x()


@dataclass(frozen=True)
class FormFactorSpec:
    kind: str = "exponential"
    c: float = 1.0
    a: float = 1.0
    mu: float = 0.0
    K: float = 1.0
    path: str | None = None

    @classmethod
    def parse(cls, data) -> "FormFactorSpec":
        d = _strict("form_factor", data, {"kind", "c", "a", "mu", "K", "path"})
        kind = d.pop("kind", "exponential")
        if kind not in ("exponential", "power-law", "tabulated"):
            raise ConfigError(f"form_factor: unknown kind {kind!r}")
        if kind == "tabulated" and "path" not in d:
            raise ConfigError("form_factor: tabulated kind needs 'path'")
        try:
            vals = {k: (str(v) if k == "path" else float(v)) for k, v in d.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"form_factor: {exc}") from None
        return cls(kind=kind, **vals)

    def build(self, base: Path | None = None) -> FormFactor:
        if self.kind == "exponential":
            return FormFactor.exponential(self.c, self.a)
        if self.kind == "power-law":
            return FormFactor.power_law(self.c, self.mu, self.K)
        p = Path(self.path)
        if base is not None and not p.is_absolute():
            p = base / p
        return FormFactor.from_file(p)


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "decaying"
    lambda0: float = 0.1
    gamma: float = -0.25

    @classmethod
    def parse(cls, data) -> "ScheduleSpec":
        d = _strict("schedule", data, {"kind", "lambda0", "gamma"})
        kind = d.get("kind", "decaying")
        if kind not in ("decaying", "constant"):
            raise ConfigError(f"schedule: unknown kind {kind!r}")
        return cls(kind, float(d.get("lambda0", 0.1)), float(d.get("gamma", -0.25)))

    def build(self) -> CouplingSchedule:
        if self.kind == "constant":
            return CouplingSchedule.constant(self.lambda0)
        return CouplingSchedule.decaying(self.lambda0, self.gamma)


@dataclass(frozen=True)
class Params:
    tau: float = 0.05
    eps0: float = 0.05
    k_max: int = 2
    M: int | None = None
    r_max: float = 8.0
    n_max: int = 2
    t_end: float = 50.0
    dt: float = 0.5
    beta: float = 1.0
    lambdas: tuple = (0.1, 0.05)
    s: float = 0.0
    N: int = 10
    level: int | None = None
    photon: bool = False
    truncation_gate: bool = False
    ground_threshold: float = 0.95
    lindblad_method: str = "closed"
    weights: tuple = (0.1, 0.1)
    n_random: int = 0
    series_order: int = 8
    dyson_horizon: float = 5.0
    tau_end: float = 5.0
    seed: int = 0

    @classmethod
    def parse(cls, data) -> "Params":
        names = {f.name for f in fields(cls)}
        d = _strict("params", data, names)
        out = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            default = f.default
            try:
                if isinstance(default, tuple):
                    v = tuple(float(x) for x in v)
                elif isinstance(default, bool):
                    if not isinstance(v, bool):
                        raise ValueError("expected true/false")
                elif isinstance(default, int) or f.name in ("M", "level"):
                    v = None if v is None else int(v)
                elif isinstance(default, float):
                    v = float(v)
                elif isinstance(default, str):
                    v = str(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"params.{f.name}: {exc}") from None
            out[f.name] = v
        if out.get("lindblad_method", "closed") not in ("closed", "direct"):
            raise ConfigError("params.lindblad_method must be 'closed' or 'direct'")
        return cls(**out)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    atom: AtomSpec = field(default_factory=AtomSpec)
    form_factor: FormFactorSpec = field(default_factory=FormFactorSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    params: Params = field(default_factory=Params)
    output: str | None = None
    base_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict, kind: str | None = None, base_dir: Path | None = None) -> "ExperimentConfig":
        d = _strict("config", data, {"schema_version", "kind", "atom", "form_factor", "schedule",
                                     "params", "output"})
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        k = d.get("kind", kind)
        if kind is not None and k != kind:
            raise ConfigError(f"config kind {k!r} does not match subcommand {kind!r}")
        if k not in KINDS:
            raise ConfigError(f"unknown experiment kind {k!r}; expected one of {KINDS}")
        cfg = cls(k, AtomSpec.parse(d.get("atom")), FormFactorSpec.parse(d.get("form_factor")),
                  ScheduleSpec.parse(d.get("schedule")), Params.parse(d.get("params")),
                  d.get("output"), str(base_dir) if base_dir else None)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: YAML parse error: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        return cls.from_dict(data, kind, p.parent)

    @classmethod
    def default(cls, kind: str) -> "ExperimentConfig":
        return cls.from_dict({"schema_version": SCHEMA_VERSION, "kind": kind})

    def validate(self) -> None:
        """Build every referenced object once so bad specs fail before any run."""
        try:
            self.atom.build()
            self.form_factor.build(Path(self.base_dir) if self.base_dir else None)
            self.schedule.build()
        except ParameterError as exc:
            raise ConfigError(f"invalid specification: {exc}") from None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, params=replace(self.params, seed=int(seed)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()
