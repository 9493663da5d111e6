"""Run manifests: every CLI run records its command, config snapshot,
input/output paths, and content hashes of its inputs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str]  # path -> sha256
    outputs: list[str]
    timestamp: str
    tool_version: str

    @classmethod
    def create(cls, command: str, config: dict, inputs: list[str | Path],
               outputs: list[str | Path]) -> "RunManifest":
        hashes = {}
        for p in inputs:
            p = Path(p)
            if p.is_file():
                hashes[str(p)] = sha256_file(p)
            elif p.is_dir():
                for f in sorted(p.rglob("*")):
                    if f.is_file():
                        hashes[str(f)] = sha256_file(f)
        return cls(
            command=command,
            config=config,
            inputs=hashes,
            outputs=[str(p) for p in outputs],
            timestamp=datetime.now(timezone.utc).isoformat(),
            tool_version=__version__,
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "command": self.command,
                    "config": self.config,
                    "inputs": self.inputs,
                    "outputs": self.outputs,
                    "timestamp": self.timestamp,
                    "tool_version": self.tool_version,
                },
                indent=2,
                ensure_ascii=False,
            )
            + "\n",
            encoding="utf-8",
        )
