"""Run configuration: one JSON document describing a full simulated experiment."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .detector import config_hash
from .reconstruction import SolverConfig
from .simulator import DEFAULT_SAMPLES, PROBE_SET_KINDS, SpdcConfig, build_probe_set
from .states import (
    Fock,
    NoiseParams,
    QuadratureGrid,
    Spacs,
    StateModel,
    state_from_dict,
    state_to_dict,
)


class ConfigError(ValueError):
    """Input document failed schema validation; the message names file and field."""


@dataclass(frozen=True)
class ProbeSetConfig:
    kind: str = "reduced_25"
    amplitudes: tuple[float, ...] | None = None
    phases: tuple[float, ...] | None = None

    def build(self, n_samples: int):
        return build_probe_set(self.kind, self.amplitudes, self.phases, n_samples)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "custom":
            d["amplitudes"] = list(self.amplitudes or ())
            d["phases"] = list(self.phases or (0.0,))
        return d


@dataclass(frozen=True)
class ValidationConfig:
    states: tuple[StateModel, ...] = (Fock(1), Spacs(0.5, 0.91))
    n_samples: int = 100_000
    phase: float = 0.0

    def to_dict(self) -> dict:
        return {
            "states": [state_to_dict(s) for s in self.states],
            "n_samples": self.n_samples,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class SweepConfig:
    amplitude_range: float = 3.0
    spacings: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.4, 1.5)

    def to_dict(self) -> dict:
        return {"amplitude_range": self.amplitude_range, "spacings": list(self.spacings)}


_DEFAULT_GRID = QuadratureGrid(-2.0, 2.0, 81)


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 20160101
    outcome_grid: QuadratureGrid = _DEFAULT_GRID
    basis_grid: QuadratureGrid = _DEFAULT_GRID
    truth: NoiseParams = NoiseParams(0.81, 0.005)
    probe_set: ProbeSetConfig = ProbeSetConfig()
    samples_per_probe: int = DEFAULT_SAMPLES
    solver: SolverConfig = SolverConfig()
    spdc: SpdcConfig = SpdcConfig()
    validation: ValidationConfig = ValidationConfig()
    sweep: SweepConfig = SweepConfig()
    output_dir: str = "run"
    write_samples: bool = False

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "outcome_grid": self.outcome_grid.to_dict(),
            "basis_grid": self.basis_grid.to_dict(),
            "truth": self.truth.to_dict(),
            "probe_set": self.probe_set.to_dict(),
            "samples_per_probe": self.samples_per_probe,
            "solver": self.solver.to_dict(),
            "spdc": self.spdc.to_dict(),
            "validation": self.validation.to_dict(),
            "sweep": self.sweep.to_dict(),
            "output_dir": self.output_dir,
            "write_samples": self.write_samples,
        }

    def experiment_dict(self) -> dict:
        """Everything except ``output_dir``: where a run is written does not change it."""
        d = self.to_dict()
        del d["output_dir"]
        return d

    def hash(self) -> str:
        return config_hash(self.experiment_dict())

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, master_seed=int(seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    @classmethod
    def from_dict(cls, d: dict, source: str = "<config>") -> "RunConfig":
        return _parse(d, source)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return _parse(doc, str(path))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _parse(d, source: str) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{source}: top level must be an object")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{source}: unknown field(s) {sorted(unknown)}")

    def section(name, parse):
        if name not in d:
            return getattr(RunConfig, name) if name in RunConfig.__dict__ else None
        try:
            return parse(d[name])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: field {name!r}: {exc}") from exc

    def integer(v):
        if isinstance(v, bool) or int(v) != v:
            raise ValueError(f"expected an integer, got {v!r}")
        return int(v)

    def probe_set(v):
        kind = v["kind"]
        if kind not in PROBE_SET_KINDS:
            raise ValueError(f"kind must be one of {PROBE_SET_KINDS}")
        amps = v.get("amplitudes")
        phases = v.get("phases")
        cfg = ProbeSetConfig(kind, None if amps is None else tuple(float(a) for a in amps),
                             None if phases is None else tuple(float(p) for p in phases))
        cfg.build(1)  # validates custom sets
        return cfg

    def validation(v):
        states = tuple(state_from_dict(s) for s in v.get("states", []))
        return ValidationConfig(states or ValidationConfig.states,
                                integer(v.get("n_samples", 100_000)), float(v.get("phase", 0.0)))

    def sweep(v):
        spacings = tuple(float(s) for s in v.get("spacings", SweepConfig.spacings))
        if any(s <= 0 for s in spacings):
            raise ValueError("spacings must be positive")
        return SweepConfig(float(v.get("amplitude_range", 3.0)), spacings)

    def samples(v):
        v = integer(v)
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    def flag(v):
        if not isinstance(v, bool):
            raise ValueError("expected true or false")
        return v

    defaults = RunConfig()
    kwargs = {
        "master_seed": section("master_seed", integer),
        "outcome_grid": section("outcome_grid", QuadratureGrid.from_dict),
        "basis_grid": section("basis_grid", QuadratureGrid.from_dict),
        "truth": section("truth", NoiseParams.from_dict),
        "probe_set": section("probe_set", probe_set),
        "samples_per_probe": section("samples_per_probe", samples),
        "solver": section("solver", SolverConfig.from_dict),
        "spdc": section("spdc", SpdcConfig.from_dict),
        "validation": section("validation", validation),
        "sweep": section("sweep", sweep),
        "output_dir": section("output_dir", str),
        "write_samples": section("write_samples", flag),
    }
    kwargs = {k: (getattr(defaults, k) if v is None else v) for k, v in kwargs.items()}
    return RunConfig(**kwargs)
