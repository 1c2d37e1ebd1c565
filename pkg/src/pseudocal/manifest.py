"""Run manifests: every command records its config, seed, and output digests."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import __version__


def digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Mapping[str, object]
    seed: int | None
    started: float
    finished: float | None = None
    outputs: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def start(command: str, config: Mapping[str, object], seed: int | None) -> "RunManifest":
        return RunManifest(command, dict(config), seed, time.time())

    def record_output(self, path: Path) -> None:
        self.outputs[str(path)] = digest_file(path)

    def write(self, path: Path) -> None:
        self.finished = time.time()
        payload = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": __version__,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def verify_manifest(path: Path) -> tuple[bool, list[str]]:
    """Recompute output digests; returns (ok, mismatched paths)."""
    data = json.loads(path.read_text())
    bad = []
    for out_path, digest in data.get("outputs", {}).items():
        p = Path(out_path)
        if not p.exists() or digest_file(p) != digest:
            bad.append(out_path)
    return not bad, bad
