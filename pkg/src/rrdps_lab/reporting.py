"""Result envelopes and canonical serialisation.

Every experiment returns one envelope: config echo, artifact version,
wall-clock duration, the command payload, per-round or per-trial sample
rows, and pass/fail verdicts for any claims checked.  JSON output is
canonical (sorted keys, floats at 17 significant digits) so identical
configurations produce identical bytes, duration aside; files are
written atomically via a temp file and rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ParameterError

ENVELOPE_VERSION = 1


@dataclass
class ResultEnvelope:
    command: str
    parameters: dict
    seed: int
    threads: int
    duration_seconds: float
    payload: dict
    samples: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "artifact": {"name": "rrdps-lab", "version": __version__,
                         "envelope_version": ENVELOPE_VERSION},
            "command": self.command,
            "parameters": dict(self.parameters),
            "seed": self.seed,
            "threads": self.threads,
            "duration_seconds": self.duration_seconds,
            "payload": self.payload,
            "samples": list(self.samples),
            "verdicts": list(self.verdicts),
        }

    @property
    def all_claims_pass(self) -> bool:
        return all(v["pass"] for v in self.verdicts)


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ParameterError(f"cannot serialise non-finite float {x!r}")
    return format(x, ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, (int,)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        inner = ", ".join(f"{json.dumps(str(k), ensure_ascii=False)}: {canonical_json(v)}"
                          for k, v in items)
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(canonical_json(v) for v in obj) + "]"
    # numpy scalars and other number-likes
    if hasattr(obj, "item"):
        return canonical_json(obj.item())
    raise ParameterError(f"cannot serialise {type(obj).__name__}")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return _format_float(value)
    if hasattr(value, "item"):
        return _csv_cell(value.item())
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def samples_csv(samples: list) -> str:
    """Header plus one row per sample, columns sorted by name."""
    if not samples:
        return "\n"
    columns = sorted(samples[0].keys())
    lines = [",".join(columns)]
    for row in samples:
        lines.append(",".join(_csv_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit(envelope: ResultEnvelope, fmt: str, path) -> Path:
    """Write the envelope (json) or its sample rows (csv) atomically."""
    if fmt not in ("json", "csv"):
        raise ParameterError(f"unknown format {fmt!r}")
    path = Path(path)
    if fmt == "json":
        text = canonical_json(envelope.to_dict()) + "\n"
    else:
        text = samples_csv(envelope.samples)
    _atomic_write(path, text)
    return path
