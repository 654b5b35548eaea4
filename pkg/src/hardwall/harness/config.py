"""Flat ``key = value`` experiment configuration.

Values are Python literals (numbers, lists, quoted strings); an unquoted
token that is not a literal is read as a bare string.  Blank lines and
``#`` comments are ignored.  Unknown keys are errors.
"""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigurationError

SUITES = ("geometry", "invariant-measures", "dynamics", "convergence")


@dataclass
class ExperimentConfig:
    suite: str = "geometry"
    N_list: list = field(default_factory=lambda: [2, 4, 8])
    M: int = 256
    c: float = 1.0
    potential: str = "gaussian"
    variance: float = 1.0
    coefficient: float = 1.0
    macro_T: float = 0.01
    dt: float | None = None
    ensemble: int = 1000
    observers: list = field(default_factory=lambda: [1])
    master_seed: int = 0
    output_dir: str = "out"
    # number of random fields (geometry) or samples per measure (invariant-measures)
    samples: int = 10000
    # microscopic site-steps allowed for one convergence sweep
    step_budget: float = 2e11
    # horizon of the reference run in the convergence sweep
    ref_macro_T: float | None = None
    # number of records per trajectory in the dynamics suites
    records: int = 8

    def validate(self) -> "ExperimentConfig":
        if self.suite not in SUITES:
            raise ConfigurationError(f"suite must be one of {SUITES}, got {self.suite!r}")
        if not (isinstance(self.N_list, (list, tuple)) and self.N_list):
            raise ConfigurationError("N_list must be a non-empty list")
        self.N_list = [int(n) for n in self.N_list]
        if any(n < 1 for n in self.N_list):
            raise ConfigurationError("every N must be >= 1")
        if self.suite in ("dynamics", "convergence") and any(n < 2 for n in self.N_list):
            raise ConfigurationError("dynamics suites need N >= 2")
        if self.suite == "convergence":
            if self.N_list != sorted(self.N_list):
                raise ConfigurationError("N_list must be ascending for the convergence sweep")
            if not self.M > max(self.N_list):
                raise ConfigurationError("M must exceed max(N_list)")
        if not self.c > 0:
            raise ConfigurationError(f"c must be positive, got {self.c}")
        if self.ensemble < 1:
            raise ConfigurationError("ensemble must be >= 1")
        if not (isinstance(self.observers, (list, tuple)) and self.observers):
            raise ConfigurationError("observers must be a non-empty list of mode indices")
        self.observers = [int(k) for k in self.observers]
        if any(k < 0 for k in self.observers):
            raise ConfigurationError("mode indices must be >= 0")
        if self.potential not in ("gaussian", "quartic"):
            raise ConfigurationError(f"unknown potential {self.potential!r}")
        if not self.macro_T > 0:
            raise ConfigurationError("macro_T must be positive")
        if self.records < 1:
            raise ConfigurationError("records must be >= 1")
        return self


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = _literal(val)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return ExperimentConfig(**values).validate()


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in dataclasses.asdict(cfg).items())
