"""Path files (CSV and the compact ``HPL1`` binary record) and config loading."""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .pathgen import Method, SamplePath

MAGIC = b"HPL1"
_HEADER = struct.Struct("<4sIQB")


def write_path_csv(path: SamplePath, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in enumerate(path.values, start=1):
            w.writerow([t, repr(float(v))])


def read_path_csv(src) -> SamplePath:
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{src}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    body = rows[1:] if header and header[0] == "t" else rows
    col = 1 if len(body[0]) > 1 else 0
    values = np.array([float(r[col]) for r in body if r])
    return SamplePath(values, 0, Method.EXTERNAL)


def write_path_binary(path: SamplePath, dest) -> None:
    with open(dest, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, path.T, int(path.seed) & 0xFFFFFFFFFFFFFFFF, int(path.method)))
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_path_binary(src) -> SamplePath:
    blob = Path(src).read_bytes()
    if len(blob) < _HEADER.size:
        raise DomainError(f"{src}: truncated header")
    magic, T, seed, method = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DomainError(f"{src}: bad magic {magic!r}")
    body = blob[_HEADER.size:]
    if len(body) != 8 * T:
        raise DomainError(f"{src}: expected {T} values, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return SamplePath(values, seed, Method(method))


def load_config(src) -> dict:
    """Read a YAML or JSON key-value config file."""
    try:
        text = Path(src).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {src}: {exc}") from exc
    try:
        data = json.loads(text) if str(src).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {src}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {src} must be a mapping")
    return data
