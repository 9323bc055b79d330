"""Experiment configuration: one JSON document per run."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError

COMMANDS = ("theorem2", "theorem1", "proof-chain", "lemma", "proposition", "transport-selftest")
FAMILIES = ("sine", "random", "bump")

# per-command defaults for keys the user leaves out
_DEFAULTS = {
    "theorem2": {"family": "sine", "m": [2, 4, 8], "p": [1.0], "resolution": 256},
    "theorem1": {"family": "sine", "m": [2, 4, 8, 16], "n": [16, 64, 256], "resolution": 256},
    "proof-chain": {"family": "sine", "m": [4], "p": [1.0, 2.0], "resolution": 256},
    "lemma": {},
    "proposition": {"n": [200], "t_grid": [5e-7, 1e-6, 2e-6, 5e-6], "resolution": 0},
    "transport-selftest": {"m": [2, 4, 8], "resolution": 256},
}
_RANDOM_RESOLUTION = 128


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    domain: dict = field(default_factory=lambda: {"kind": "torus"})
    resolution: int = 0
    basis_size: int = 0
    family: str = ""
    m: list = field(default_factory=list)
    n: list = field(default_factory=list)
    p: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    bandwidth: int = 0
    t_grid: list = field(default_factory=list)
    regime_c: float = 4.0
    lemma_levels: int = 6
    solver: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out: str = "nlab-out"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict) or not d:
            raise ConfigError(["config is empty; it needs at least a 'command'"])
        known = {f.name for f in fields(cls)}
        problems = [f"unknown key {k!r}" for k in sorted(set(d) - known)]
        if "command" not in d:
            problems.append("missing 'command'")
        if problems:
            raise ConfigError(problems)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        text = text.strip()
        if not text:
            raise ConfigError(["config is empty; it needs at least a 'command'"])
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([f"invalid JSON: {e}"]) from None
        return cls.from_dict(d)

    def with_defaults(self) -> "ExperimentConfig":
        """Fill keys left empty with the defaults of the command."""
        base = dict(_DEFAULTS.get(self.command, {}))
        fam = self.family or base.get("family", "")
        if fam == "random":
            base["resolution"] = _RANDOM_RESOLUTION
            base.setdefault("n", [16, 64, 256])
        updates = {}
        for k, v in base.items():
            cur = getattr(self, k)
            if cur in ("", 0, [], None):
                updates[k] = v
        return replace(self, **updates)

    def validate(self) -> None:
        problems = []
        if self.command not in COMMANDS:
            problems.append(f"command must be one of {', '.join(COMMANDS)}; got {self.command!r}")
        if self.family and self.family not in FAMILIES:
            problems.append(f"family must be one of {', '.join(FAMILIES)}; got {self.family!r}")
        kind = self.domain.get("kind") if isinstance(self.domain, dict) else None
        if kind not in ("torus", "square", "sphere"):
            problems.append(f"domain.kind must be torus, square or sphere; got {kind!r}")
        for name in ("resolution", "basis_size", "bandwidth", "lemma_levels"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                problems.append(f"{name} must be a nonnegative integer; got {v!r}")
        for name in ("m", "n", "seeds"):
            v = getattr(self, name)
            if not isinstance(v, list) or not all(isinstance(x, int) and x >= 0 for x in v):
                problems.append(f"{name} must be a list of nonnegative integers; got {v!r}")
        if not isinstance(self.p, list) or not all(isinstance(x, (int, float)) and x >= 1 for x in self.p):
            problems.append(f"p must be a list of numbers >= 1; got {self.p!r}")
        if not isinstance(self.t_grid, list) or not all(
            isinstance(x, (int, float)) and x > 0 and math.isfinite(x) for x in self.t_grid
        ):
            problems.append(f"t_grid must be a list of positive numbers; got {self.t_grid!r}")
        if not (isinstance(self.regime_c, (int, float)) and self.regime_c > 0):
            problems.append(f"regime_c must be positive; got {self.regime_c!r}")
        allowed_solver = {"max_support", "cap", "reg", "max_iter"}
        if not isinstance(self.solver, dict) or set(self.solver) - allowed_solver:
            problems.append(f"solver keys must be among {sorted(allowed_solver)}")
        if not isinstance(self.tolerances, dict):
            problems.append("tolerances must be an object")
        if problems:
            raise ConfigError(problems)
