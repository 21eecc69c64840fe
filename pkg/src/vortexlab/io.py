"""On-disk formats: field snapshots, profile CSV + sidecar, chart CSV + descriptor, reports."""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fields import FieldConfiguration, grid_from_description
from .radial import RadialProfile

MAGIC = "vortexlab-snapshot"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    """Deterministic JSON: sorted keys, fixed indentation, NaN written as null."""
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from exc
    return rows[0], data.reshape(-1, len(rows[0]))


# ------------------------------------------------------------ snapshots
#
# layout: 8-byte little-endian header length, UTF-8 JSON header, then the
# arrays back to back as little-endian float64 (complex as re/im pairs).

def save_snapshot(path, config: FieldConfiguration, metadata: dict | None = None) -> Path:
    arrays = {"u": np.ascontiguousarray(config.u).view(np.float64), "A": np.ascontiguousarray(config.A)}
    fields = []
    offset = 0
    for name, arr in arrays.items():
        fields.append({"name": name, "offset": offset, "count": int(arr.size),
                       "complex": name == "u"})
        offset += arr.size * 8
    header = {"format": MAGIC, "version": 1, "encoding": "<f8", "grid": config.grid.describe(),
              "epsilon": config.epsilon, "fields": fields, "metadata": metadata or {}}
    blob = json.dumps(_jsonable(header), sort_keys=True).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.astype("<f8").tobytes())
    return path


def load_snapshot(path) -> tuple[FieldConfiguration, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValidationError(f"{path}: truncated snapshot")
    (n,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8:8 + n])
    except ValueError as exc:
        raise ValidationError(f"{path}: corrupt snapshot header") from exc
    if header.get("format") != MAGIC:
        raise ValidationError(f"{path}: not a snapshot file")
    grid = grid_from_description(header["grid"])
    body = raw[8 + n:]
    out = {}
    for fd in header["fields"]:
        end = fd["offset"] + 8 * fd["count"]
        if end > len(body):
            raise ValidationError(f"{path}: truncated field {fd['name']}")
        arr = np.frombuffer(body[fd["offset"]:end], dtype="<f8").astype(np.float64)
        out[fd["name"]] = arr.view(np.complex128) if fd["complex"] else arr
    u = out["u"].reshape(grid.shape)
    A = out["A"].reshape((grid.ndim,) + grid.shape)
    return FieldConfiguration(u, A, header["epsilon"], grid), header.get("metadata", {})


def export_snapshot_csv(path, config: FieldConfiguration, max_nodes: int = 1_000_000) -> Path:
    """Per-node values: coordinates, Re u, Im u, A components."""
    if config.u.size > max_nodes:
        raise ValidationError(f"grid has {config.u.size} nodes; CSV export is limited to {max_nodes}")
    d = config.grid.ndim
    X = [x.ravel() for x in config.grid.mesh()]
    cols = X + [config.u.real.ravel(), config.u.imag.ravel()] + [config.A[k].ravel() for k in range(d)]
    header = [f"x{k + 1}" for k in range(d)] + ["re_u", "im_u"] + [f"A{k + 1}" for k in range(d)]
    return write_csv(path, header, zip(*cols))


# ------------------------------------------------------------- profiles

def save_profile(csv_path, profile: RadialProfile) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    write_csv(csv_path, ["r", "f", "a", "f_prime", "a_prime"],
              zip(profile.r, profile.f, profile.a, profile.f_prime, profile.a_prime))
    side = csv_path.with_suffix(".json")
    write_json(side, {"alpha": profile.shoot_slope, "tol": profile.tol, "r_max": profile.r_max,
                      "splice_radius": profile.splice_radius})
    return csv_path, side


def load_profile(csv_path) -> RadialProfile:
    csv_path = Path(csv_path)
    header, data = read_csv(csv_path)
    if header != ["r", "f", "a", "f_prime", "a_prime"]:
        raise ValidationError(f"{csv_path}: unexpected columns {header}")
    side = json.loads(csv_path.with_suffix(".json").read_text())
    nan = float("nan")
    return RadialProfile(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4],
                         float(side["alpha"]),
                         nan if side.get("tol") is None else float(side["tol"]),
                         nan if side.get("splice_radius") is None else float(side["splice_radius"]))


# --------------------------------------------------------------- charts

def save_chart(csv_path, chart) -> tuple[Path, Path]:
    """Graph samples as CSV (tangential coordinates, h1, h2) plus a JSON descriptor."""
    csv_path = Path(csv_path)
    n = chart.tangential_dim
    Y = np.meshgrid(*([chart.tangential_axis] * n), indexing="ij")
    cols = [y.ravel() for y in Y] + [chart.h[0].ravel(), chart.h[1].ravel()]
    write_csv(csv_path, [f"y{k + 1}" for k in range(n)] + ["h1", "h2"], zip(*cols))
    side = csv_path.with_suffix(".json")
    write_json(side, chart.describe())
    return csv_path, side


def load_chart(csv_path):
    from .fermi import FermiChart
    csv_path = Path(csv_path)
    desc = json.loads(csv_path.with_suffix(".json").read_text())
    n = int(desc["tangential_dim"])
    ax = desc["tangential_axis"]
    y = float(ax["start"]) + float(ax["spacing"]) * np.arange(int(ax["count"]))
    header, data = read_csv(csv_path)
    if len(header) != n + 2:
        raise ValidationError(f"{csv_path}: expected {n + 2} columns")
    shape = (y.size,) * n
    if data.shape[0] != y.size ** n:
        raise ValidationError(f"{csv_path}: expected {y.size ** n} rows, found {data.shape[0]}")
    h = np.stack([data[:, n].reshape(shape), data[:, n + 1].reshape(shape)])
    return FermiChart.from_samples(n, y, h, float(desc["tube_radius"]))
