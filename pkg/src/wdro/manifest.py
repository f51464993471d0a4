"""Run manifests: every CLI command records its full config, seed, and the
sha256 of every artifact it wrote, so a run can be replayed and checked
byte for byte."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone

MANIFEST_NAME = "manifest.json"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, config, output_names, seed=None):
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "created": datetime.now(timezone.utc).isoformat(),
        "out_dir": str(out_dir),
        "outputs": {name: file_sha256(os.path.join(out_dir, name)) for name in output_names},
    }
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def verify_outputs(manifest: dict, out_dir) -> list:
    """Names whose bytes differ from (or are missing against) the manifest."""
    bad = []
    for name, digest in manifest["outputs"].items():
        p = os.path.join(out_dir, name)
        if not os.path.exists(p) or file_sha256(p) != digest:
            bad.append(name)
    return bad
