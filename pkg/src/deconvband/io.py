"""File formats: deterministic JSON, observation CSV, run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import platform
from pathlib import Path
from typing import Sequence

import numpy as np

MANIFEST_SUFFIX = ".manifest.json"


class FileFormatError(Exception):
    """An input file exists but its content cannot be used."""


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Sorted keys, fixed indentation, shortest round-trip floats, no NaN."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------- observations CSV

def write_observations(path, y: np.ndarray, timedep: bool = False) -> None:
    """Rows ``k1..kd[,j],y`` in C order, indices running from -n (and -m)."""
    y = np.asarray(y, dtype=float)
    d = y.ndim - (1 if timedep else 0)
    header = [f"k{i + 1}" for i in range(d)] + (["j"] if timedep else []) + ["y"]
    half = [(s - 1) // 2 for s in y.shape]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for idx in np.ndindex(*y.shape):
            w.writerow([i - h for i, h in zip(idx, half)] + [repr(float(y[idx]))])


def read_observations(path) -> tuple[np.ndarray, bool]:
    """Array indexed ``y[k1 + n, ..., (j + m)]`` and whether a time column is present."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[-1] != "y":
        raise FileFormatError(f"{path}: header must be k1..kd[,j],y, got {header}")
    timedep = header[-2] == "j"
    d = len(header) - 1 - (1 if timedep else 0)
    if header[:d] != [f"k{i + 1}" for i in range(d)] or d < 1:
        raise FileFormatError(f"{path}: header must be k1..kd[,j],y, got {header}")
    try:
        idx = np.array([[int(c) for c in r[:-1]] for r in rows[1:]], dtype=int)
        vals = np.array([float(r[-1]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise FileFormatError(f"{path}: malformed row ({exc})") from None
    if idx.size == 0:
        raise FileFormatError(f"{path}: no observations")
    half = np.max(np.abs(idx), axis=0)
    shape = tuple(2 * half + 1)
    if len(vals) != int(np.prod(shape)):
        raise FileFormatError(f"{path}: expected {int(np.prod(shape))} rows for a full grid, "
                              f"got {len(vals)}")
    y = np.full(shape, np.nan)
    y[tuple((idx + half).T)] = vals
    if np.isnan(y).any():
        raise FileFormatError(f"{path}: grid has missing or duplicated indices")
    return y, timedep


# ---------------------------------------------------------------- manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {"deconvband": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_path, command: str, config: dict, inputs: Sequence = (),
                   outputs: Sequence = (), seed: int | None = None,
                   started: str | None = None) -> Path:
    """Write ``<out>.manifest.json`` next to the primary output file."""
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": versions(),
        "started": started or _now(),
        "finished": _now(),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    path = Path(str(out_path) + MANIFEST_SUFFIX)
    write_json(path, manifest)
    return path


def verify_manifest(path) -> dict:
    """Recompute every recorded digest; returns ``{file: ok}``."""
    manifest = read_json(path)
    out = {}
    for group in ("inputs", "outputs"):
        for name, digest in manifest.get(group, {}).items():
            out[name] = Path(name).exists() and sha256_file(name) == digest
    return out
