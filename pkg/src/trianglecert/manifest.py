"""Run manifests: every CLI run snapshots its command, configuration and
seeds, and every output file embeds the manifest hash so results are
traceable and byte-reproducible."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    output_options: dict = field(default_factory=dict)  # paths etc., unhashed
    inputs: dict = field(default_factory=dict)    # path -> sha256
    outputs: dict = field(default_factory=dict)   # path -> sha256
    timings: dict = field(default_factory=dict)
    version: str = __version__
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    @property
    def hash(self) -> str:
        """Hash of the deterministic portion (command, config, seeds,
        inputs, version): identical manifests must mean identical outputs."""
        doc = {
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "version": self.version,
        }
        return hashlib.sha256(_canonical(doc).encode()).hexdigest()[:16]

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def record_output(self, path):
        self.outputs[str(path)] = file_sha256(path)

    def stop_clock(self, label: str = "total_s"):
        self.timings[label] = round(time.perf_counter() - self._t0, 3)

    def write(self, directory) -> Path:
        self.stop_clock()
        path = Path(directory) / "manifest.json"
        doc = {
            "manifest_hash": self.hash,
            "command": self.command,
            "config": self.config,
            "output_options": self.output_options,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
            "version": self.version,
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True))
        return path


def stamp_json(text: str, manifest: RunManifest) -> str:
    """Embed the manifest hash into a JSON document."""
    doc = json.loads(text)
    doc["manifest_hash"] = manifest.hash
    return json.dumps(doc, indent=1)


def stamp_csv(text: str, manifest: RunManifest) -> str:
    """Embed the manifest hash as a leading comment line."""
    return f"# manifest_hash={manifest.hash}\n{text}"
