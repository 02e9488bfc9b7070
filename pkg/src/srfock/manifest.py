"""Reproducibility manifest written next to every command-line run.

The manifest records the command, package version, seed, engine, output
format, the fully resolved configuration, and the list of data files the
run produced.  ``srfock rerun MANIFEST`` re-executes the run from this
record alone; data outputs are byte-identical because every source of
randomness is seeded and every float is serialized exactly.  Plot files
are listed separately: rendering is backend-dependent and exempt from the
byte-identical guarantee.  ``duration_s`` is informational and never
compared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

__all__ = ["RunManifest"]


@dataclass
class RunManifest:
    command: str
    seed: int | None
    engine: str | None
    out_format: str
    config: dict
    outputs: list[str] = field(default_factory=list)
    plots: list[str] = field(default_factory=list)
    duration_s: float | None = None
    version: str = __version__

    def to_json_dict(self) -> dict:
        return {
            "schema": "srfock-run-manifest",
            "schema_version": 1,
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "engine": self.engine,
            "out_format": self.out_format,
            "config": self.config,
            "outputs": list(self.outputs),
            "plots": list(self.plots),
            "duration_s": self.duration_s,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("schema") != "srfock-run-manifest":
            raise ValueError(f"{path}: not a run manifest")
        return cls(
            command=data["command"],
            seed=data["seed"],
            engine=data["engine"],
            out_format=data["out_format"],
            config=data["config"],
            outputs=list(data.get("outputs", [])),
            plots=list(data.get("plots", [])),
            duration_s=data.get("duration_s"),
            version=data.get("version", "unknown"),
        )
