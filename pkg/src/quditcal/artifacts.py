"""Canonical file formats: CSV tables, pulse JSON, run manifests.

Floats are written with repr (shortest round-trip form) and files use '\n'
newlines unconditionally, so rerunning a stage from its manifest reproduces
every artifact byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import PulseSet

TOOL_VERSION = "0.1.0"
PULSE_FORMAT = "quditcal-pulse-v1"
MANIFEST_KEY = "quditcal_manifest"


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", newline="\n")


def pulse_to_doc(pulse: PulseSet, meta: dict | None = None) -> dict:
    doc = {
        "format": PULSE_FORMAT,
        "n_slices": pulse.n_slices,
        "dt": pulse.dt,
        "amp_bound": pulse.amp_bound,
        "channels": [list(map(float, ch)) for ch in pulse.channels],
    }
    if meta:
        doc["meta"] = meta
    return doc


def pulse_from_doc(doc: dict) -> PulseSet:
    if doc.get("format") != PULSE_FORMAT:
        raise ValueError(f"not a {PULSE_FORMAT} document")
    return PulseSet(
        dt=float(doc["dt"]),
        channels=np.array(doc["channels"], dtype=float),
        amp_bound=float(doc["amp_bound"]),
    )


def save_pulse(path: Path, pulse: PulseSet, meta: dict | None = None) -> None:
    write_json(path, pulse_to_doc(pulse, meta))


def load_pulse(path: Path) -> PulseSet:
    return pulse_from_doc(json.loads(Path(path).read_text()))


def write_manifest(path: Path, command: str, args: dict, config_doc: dict) -> None:
    write_json(
        path,
        {
            MANIFEST_KEY: 1,
            "tool_version": TOOL_VERSION,
            "command": command,
            "args": args,
            "config": config_doc,
        },
    )


def maybe_manifest(doc: dict) -> bool:
    return isinstance(doc, dict) and MANIFEST_KEY in doc
