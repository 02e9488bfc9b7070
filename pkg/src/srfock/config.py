"""INI run configurations for the command line tools.

Two configuration kinds exist: counting statistics (source sweep plus two
detector trees) and wavepacket generation (one or more parameter sets).
Each loader returns a frozen dataclass that also round-trips through a
plain dict, which is what the run manifest stores.

Statistics example::

    [source]
    p_values = 0.02, 0.05, 0.1        # or p_min/p_max/points for a log grid

    [field1]
    leaves = 2
    efficiency = 0.4
    dark_prob = 0.0

    [field2]
    leaves = 4
    efficiency = 0.35
    dark_prob = 0.0

    [run]
    trials = 1000000
    seed = 20260818

Wavepacket example (several ``[wavepacket:<label>]`` sections overlay)::

    [wavepacket:full_power]
    omega0 = 0.4e9      # rad/s
    chi = 4.0
    dt_ns = 0.5
    t_max_ns = 100
    samples = 200000

    [run]
    seed = 20260818
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .detection import DetectionTree
from .wavepacket import ATOM_LINEWIDTH

__all__ = [
    "ConfigError",
    "TreeSpec",
    "StatisticsConfig",
    "WavepacketSet",
    "WavepacketConfig",
    "load_statistics_config",
    "load_wavepacket_config",
]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class TreeSpec:
    """Balanced detector tree description as it appears in configs."""

    leaves: int
    efficiency: float
    dark_prob: float = 0.0
    throughput: float = 1.0

    def to_tree(self) -> DetectionTree:
        try:
            return DetectionTree.balanced(
                self.leaves, self.efficiency, self.dark_prob, self.throughput
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class StatisticsConfig:
    p_values: tuple[float, ...]
    field1: TreeSpec
    field2: TreeSpec
    trials: int
    seed: int

    def __post_init__(self):
        if not self.p_values:
            raise ConfigError("no excitation probabilities configured")
        for p in self.p_values:
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"excitation probability out of range: {p}")
        if self.trials < 1:
            raise ConfigError(f"trials must be positive, got {self.trials}")

    def to_dict(self) -> dict:
        return {
            "p_values": list(self.p_values),
            "field1": asdict(self.field1),
            "field2": asdict(self.field2),
            "trials": self.trials,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StatisticsConfig":
        try:
            return cls(
                p_values=tuple(float(p) for p in data["p_values"]),
                field1=TreeSpec(**data["field1"]),
                field2=TreeSpec(**data["field2"]),
                trials=int(data["trials"]),
                seed=int(data["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad statistics config dict: {exc}") from exc


@dataclass(frozen=True)
class WavepacketSet:
    """One wavepacket parameter set; all times in seconds, rates in rad/s."""

    label: str
    omega0: float
    chi: float
    gamma: float = ATOM_LINEWIDTH
    dt: float = 0.5e-9
    t_max: float = 100e-9
    samples: int = 0
    background: float = 0.0
    window: float = 190e-9

    def __post_init__(self):
        if not self.label:
            raise ConfigError("wavepacket set needs a label")
        if self.t_max <= 0 or self.dt <= 0:
            raise ConfigError(f"{self.label}: dt and t_max must be positive")
        if self.t_max < 4 * self.dt:
            raise ConfigError(f"{self.label}: t_max shorter than four bins")
        if self.samples < 0:
            raise ConfigError(f"{self.label}: samples must be non-negative")
        if not 0.0 <= self.background < 1.0:
            raise ConfigError(f"{self.label}: background must be in [0, 1)")
        if self.window <= 0:
            raise ConfigError(f"{self.label}: window must be positive")


@dataclass(frozen=True)
class WavepacketConfig:
    sets: tuple[WavepacketSet, ...]
    seed: int

    def __post_init__(self):
        if not self.sets:
            raise ConfigError("no [wavepacket:...] sections configured")
        labels = [s.label for s in self.sets]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate wavepacket labels: {labels}")

    def to_dict(self) -> dict:
        return {"sets": [asdict(s) for s in self.sets], "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "WavepacketConfig":
        try:
            return cls(
                sets=tuple(WavepacketSet(**s) for s in data["sets"]),
                seed=int(data["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad wavepacket config dict: {exc}") from exc


def _read_ini(path: str | Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


def _get(section, key, conv, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{section.name}] is missing required key {key!r}")
        return default
    try:
        return conv(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {section[key]!r}: {exc}") from exc


def _tree_spec(parser: configparser.ConfigParser, name: str) -> TreeSpec:
    if name not in parser:
        raise ConfigError(f"missing [{name}] section")
    section = parser[name]
    return TreeSpec(
        leaves=_get(section, "leaves", int, required=True),
        efficiency=_get(section, "efficiency", float, required=True),
        dark_prob=_get(section, "dark_prob", float, default=0.0),
        throughput=_get(section, "throughput", float, default=1.0),
    )


def load_statistics_config(path: str | Path) -> StatisticsConfig:
    """Load a counting-statistics run configuration from an INI file."""
    parser = _read_ini(path)
    if "source" not in parser:
        raise ConfigError(f"{path}: missing [source] section")
    source = parser["source"]
    if "p_values" in source:
        try:
            p_values = tuple(float(tok) for tok in source["p_values"].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad p_values: {source['p_values']!r}") from exc
    else:
        p_min = _get(source, "p_min", float, required=True)
        p_max = _get(source, "p_max", float, required=True)
        points = _get(source, "points", int, required=True)
        if not (0.0 < p_min <= p_max < 1.0) or points < 1:
            raise ConfigError(
                f"bad log grid: p_min={p_min}, p_max={p_max}, points={points}"
            )
        if points == 1:
            p_values = (p_min,)
        else:
            step = (math.log(p_max) - math.log(p_min)) / (points - 1)
            p_values = tuple(
                math.exp(math.log(p_min) + step * k) for k in range(points)
            )
    if "run" not in parser:
        raise ConfigError(f"{path}: missing [run] section")
    run = parser["run"]
    try:
        return StatisticsConfig(
            p_values=p_values,
            field1=_tree_spec(parser, "field1"),
            field2=_tree_spec(parser, "field2"),
            trials=_get(run, "trials", int, required=True),
            seed=_get(run, "seed", int, required=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_wavepacket_config(path: str | Path) -> WavepacketConfig:
    """Load a wavepacket run configuration from an INI file."""
    parser = _read_ini(path)
    sets = []
    for name in parser.sections():
        if not name.startswith("wavepacket"):
            continue
        _, _, label = name.partition(":")
        label = label.strip() or "default"
        section = parser[name]
        try:
            sets.append(
                WavepacketSet(
                    label=label,
                    omega0=_get(section, "omega0", float, required=True),
                    chi=_get(section, "chi", float, required=True),
                    gamma=_get(section, "gamma", float, default=ATOM_LINEWIDTH),
                    dt=_get(section, "dt_ns", float, default=0.5) * 1e-9,
                    t_max=_get(section, "t_max_ns", float, default=100.0) * 1e-9,
                    samples=_get(section, "samples", int, default=0),
                    background=_get(section, "background", float, default=0.0),
                    window=_get(section, "window_ns", float, default=190.0) * 1e-9,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    if "run" not in parser:
        raise ConfigError(f"{path}: missing [run] section")
    seed = _get(parser["run"], "seed", int, required=True)
    return WavepacketConfig(sets=tuple(sets), seed=seed)
