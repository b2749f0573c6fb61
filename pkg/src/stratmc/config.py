"""Run configuration: a YAML document with nested sections.

Example::

    system:
      kind: maier_stein      # or: discrete
      beta: 10.0
      epsilon: 0.01
      h: 0.001
    strata: vertical5        # preset name, or {psi_mode: hard, regions: [...]}
    version: eigen
    N: 30
    M: 1000
    eta: {lo: 0.05, hi: 0.05}
    seed: 1
    runs_to_average: 1
    grid: null               # default grid for the system
    benchmark: {steps: 1000000, starts: [[1.0, 0.0], [-1.0, 0.0]]}

A discrete system names a preset (``two_state``, ``nine_state``,
``random:<seed>``) or gives ``P`` and ``partition`` explicitly; its strata
are the partition.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .estimator import Axis, Grid
from .injection import VERSIONS
from .kernels import MaierSteinParams, maier_stein_kernel
from .strata import KappaDistribution, StrataDef, build_fig2_setup

PRESET_DIR = Path(__file__).resolve().parent / "presets"


@dataclass
class RunConfig:
    system: dict = field(default_factory=lambda: {"kind": "discrete", "preset": "two_state"})
    strata: Any = None
    version: str = "eigen"
    N: int = 20
    M: int = 10_000
    eta: dict = field(default_factory=lambda: {"lo": 1.0, "hi": 1.0})
    seed: int = 0
    runs_to_average: int = 1
    grid: Any = None
    max_steps: int | None = None
    threads: int = 1
    out: str | None = None
    laziness: float = 1.0
    benchmark: dict = field(default_factory=lambda: {"steps": 1_000_000,
                                                      "starts": [[1.0, 0.0], [-1.0, 0.0]]})

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------------
    def validate(self) -> "RunConfig":
        kind = self.system.get("kind") if isinstance(self.system, dict) else None
        if kind not in ("maier_stein", "discrete"):
            raise ConfigError("system.kind must be 'maier_stein' or 'discrete'")
        if kind == "maier_stein":
            for key in ("beta", "epsilon", "h"):
                v = self.system.get(key, {"beta": 10.0, "epsilon": 0.01, "h": 1e-3}[key])
                if not (isinstance(v, (int, float)) and v > 0):
                    raise ConfigError(f"system.{key} must be a positive number")
            if self.strata is None:
                raise ConfigError("strata is required for maier_stein systems")
        if kind == "discrete" and "preset" not in self.system and "P" not in self.system:
            raise ConfigError("system needs either 'preset' or 'P' and 'partition'")
        if self.version not in VERSIONS:
            raise ConfigError(f"version must be one of {VERSIONS}")
        if not (isinstance(self.N, int) and self.N >= 0):
            raise ConfigError("N must be an integer >= 0")
        if not (isinstance(self.M, int) and self.M >= 1):
            raise ConfigError("M must be an integer >= 1")
        if not (isinstance(self.runs_to_average, int) and self.runs_to_average >= 1):
            raise ConfigError("runs_to_average must be an integer >= 1")
        if not (isinstance(self.threads, int) and self.threads >= 1):
            raise ConfigError("threads must be an integer >= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        try:
            KappaDistribution(float(self.eta["lo"]), float(self.eta["hi"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"eta: {e}") from None
        if not 0 < self.laziness <= 1:
            raise ConfigError("laziness must lie in (0, 1]")
        if self.max_steps is not None and not (isinstance(self.max_steps, int) and self.max_steps >= 1):
            raise ConfigError("max_steps must be a positive integer or null")
        return self

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config document must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        return cls(**copy.deepcopy(d))

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config: {e}") from None
        return cls.from_dict(d or {})

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.exists() and (PRESET_DIR / f"{path}.yaml").exists():
            p = PRESET_DIR / f"{path}.yaml"
        return cls.loads(p.read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    # -- builders -------------------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.system["kind"] == "discrete"

    def finite_chain(self):
        from . import oracle
        if not self.is_discrete:
            raise ConfigError("not a discrete system")
        s = self.system
        if "P" in s:
            if "partition" not in s:
                raise ConfigError("system.partition is required with system.P")
            return oracle.FiniteStratifiedChain.from_matrix(s["P"], s["partition"])
        name = str(s["preset"])
        if name == "two_state":
            return oracle.two_state()
        if name == "nine_state":
            return oracle.nine_state()
        if name.startswith("random:"):
            return oracle.random_instance(int(name.split(":", 1)[1]))
        raise ConfigError(f"unknown discrete preset {name!r}")

    def kernel(self):
        if self.is_discrete:
            return self.finite_chain().chain
        p = MaierSteinParams(float(self.system.get("beta", 10.0)), float(self.system.get("epsilon", 0.01)))
        return maier_stein_kernel(p, float(self.system.get("h", 1e-3)))

    def strata_def(self) -> StrataDef:
        if self.strata is None:
            if self.is_discrete:
                return self.finite_chain().strata_def()
            raise ConfigError("strata is required")
        if isinstance(self.strata, str):
            return build_fig2_setup(self.strata)
        if isinstance(self.strata, dict):
            if "preset" in self.strata:
                return build_fig2_setup(self.strata["preset"], self.strata.get("psi_mode", "hard"))
            try:
                return StrataDef.from_dict(self.strata)
            except (KeyError, ValueError) as e:
                raise ConfigError(f"strata: {e}") from None
        raise ConfigError("strata must be a preset name or a mapping")

    def kappa(self) -> KappaDistribution:
        return KappaDistribution(float(self.eta["lo"]), float(self.eta["hi"]))

    def build_grid(self) -> Grid:
        if self.grid is None:
            if self.is_discrete:
                return Grid.for_states(self.finite_chain().n)
            return Grid.maier_stein()
        try:
            return Grid(tuple(Axis(str(a[0]), float(a[1]), float(a[2]), int(a[3])) for a in self.grid))
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"grid: {e}") from None

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)


def a_reference(cfg: RunConfig):
    """Exact strata weights for discrete systems, else ``None``."""
    if not cfg.is_discrete:
        return None
    from .oracle import exact_fixed_point
    return exact_fixed_point(cfg.finite_chain()).a_star


def as_float_list(x) -> list[float]:
    return [float(v) for v in np.asarray(x).ravel()]
