"""Run manifests and CSV emission.

Every output file records the manifest (command, config digest, seed) that
produced it, so identical manifests reproduce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

from . import __version__


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    out_dir: str = "."
    version: str = __version__
    started_at: str = ""

    def __post_init__(self):
        if not self.started_at:
            self.started_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def digest(self) -> str:
        """Digest of the reproducibility-relevant fields (no wall clock)."""
        payload = json.dumps(
            {"command": self.command, "config": self.config, "seed": self.seed, "version": self.version},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def header_comment(self) -> str:
        return f"# rydparity {self.version} | command={self.command} | seed={self.seed} | manifest={self.digest()}"

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "version": self.version,
            "started_at": self.started_at,
            "digest": self.digest(),
        }


def format_number(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_csv(path, header, rows, manifest: RunManifest) -> None:
    """CSV with a manifest comment line and a header row; stable float format."""
    with open(path, "w") as fh:
        fh.write(manifest.header_comment() + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_number(x) for x in row) + "\n")


def load_json(path) -> dict:
    from .errors import InputError

    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc


def dump_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
