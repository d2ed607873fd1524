"""File formats: CSV inputs, JSON artifacts and analysis manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .persistence import PersistenceDiagram
from .spectral import HKEmbedding

__all__ = [
    "read_points_csv",
    "read_matrix_csv",
    "read_group_file",
    "write_json",
    "read_json",
    "dumps",
    "sha256_file",
    "AnalysisManifest",
    "load_diagram",
    "load_embedding",
]


def _rows(path):
    """Numeric rows of a CSV with their 1-based line numbers; one header line is tolerated."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    rows = []
    for lineno, fields in enumerate(csv.reader(text.splitlines()), start=1):
        if not fields or all(not f.strip() for f in fields) or fields[0].lstrip().startswith("#"):
            continue
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if not rows and lineno == 1:
                continue  # header
            raise InvalidInputError(f"{path}:{lineno}: non-numeric field in {fields!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"{path}:{lineno}: non-finite value")
        rows.append((lineno, values))
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return rows


def read_points_csv(path) -> np.ndarray:
    """``x,y`` per line."""
    rows = _rows(path)
    for lineno, values in rows:
        if len(values) != 2:
            raise InvalidInputError(f"{path}:{lineno}: expected 2 columns, got {len(values)}")
    return np.array([v for _, v in rows], dtype=np.float64)


def read_matrix_csv(path) -> np.ndarray:
    """Square weight matrix, one row per line."""
    rows = _rows(path)
    n = len(rows)
    for lineno, values in rows:
        if len(values) != n:
            raise InvalidInputError(f"{path}:{lineno}: expected {n} columns for a square matrix, got {len(values)}")
    return np.array([v for _, v in rows], dtype=np.float64)


def read_group_file(path) -> list[tuple[Path, str]]:
    """``(embedding path, label)`` rows; relative paths resolve against the group file's folder."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    base = path.parent
    out = []
    for lineno, fields in enumerate(csv.reader(text.splitlines()), start=1):
        if not fields or all(not f.strip() for f in fields) or fields[0].lstrip().startswith("#"):
            continue
        if len(fields) != 2:
            raise InvalidInputError(f"{path}:{lineno}: expected 'path,label', got {fields!r}")
        p, label = fields[0].strip(), fields[1].strip()
        if lineno == 1 and (p.lower(), label.lower()) in {("path", "label"), ("embedding", "group")}:
            continue
        target = Path(p) if os.path.isabs(p) else base / p
        if not target.is_file():
            raise InvalidInputError(f"{path}:{lineno}: embedding file {target} not found")
        out.append((target, label))
    if not out:
        raise InvalidInputError(f"{path}: no group entries")
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class AnalysisManifest:
    """Provenance of one analysis step; its hash is stamped into every output."""

    command: str
    inputs: list = field(default_factory=list)
    M: int | None = None
    sigma: float | None = None
    domain_map: dict | None = None
    seeds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @classmethod
    def for_inputs(cls, command: str, paths, **kw) -> "AnalysisManifest":
        inputs = [{"path": str(p), "sha256": sha256_file(p)} for p in paths]
        return cls(command=command, inputs=inputs, **kw)

    def to_dict(self) -> dict:
        from . import __version__

        return {
            "command": self.command,
            "inputs": self.inputs,
            "M": self.M,
            "sigma": self.sigma,
            "domain_map": self.domain_map,
            "seeds": self.seeds,
            "params": self.params,
            "tool_version": __version__,
        }

    @property
    def sha256(self) -> str:
        return hashlib.sha256(dumps(self.to_dict()).encode("utf-8")).hexdigest()


def load_diagram(path) -> PersistenceDiagram:
    d = read_json(path)
    try:
        return PersistenceDiagram.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: not a persistence diagram ({exc})") from exc


def load_embedding(path) -> HKEmbedding:
    d = read_json(path)
    try:
        return HKEmbedding.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: not an embedding ({exc})") from exc
