"""Artifact I/O: ".tfs" lattice snapshots, CSV tables and JSON summaries.

Every writer goes through a temporary file in the target directory followed by
``os.replace``, so readers never see a half-written artifact.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .field import GridSpec, MetricField, sym_pairs

TFS_VERSION = 1
TFS_ORDER = "row-major, axis 0 slowest"


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# ------------------------------------------------------------ .tfs


def write_tfs(path, grid: GridSpec, components: dict[str, np.ndarray], extra: dict | None = None) -> Path:
    names = list(components)
    header = {
        "version": TFS_VERSION,
        "dim": grid.dim,
        "N": grid.n,
        "L": grid.length,
        "components": names,
        "dtype": "f64le",
        "order": TFS_ORDER,
    }
    if extra:
        header.update(extra)
    buf = _io.BytesIO()
    buf.write(json.dumps(header, sort_keys=True).encode("utf-8"))
    buf.write(b"\n")
    for name in names:
        arr = np.asarray(components[name], dtype="<f8")
        if arr.shape != grid.shape:
            raise ValueError(f"component {name} has shape {arr.shape}, expected {grid.shape}")
        buf.write(np.ascontiguousarray(arr).tobytes(order="C"))
    return atomic_write_bytes(path, buf.getvalue())


def read_tfs(path) -> tuple[dict, GridSpec, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("version") != TFS_VERSION or header.get("dtype") != "f64le":
        raise ValueError(f"unsupported snapshot header {header}")
    grid = GridSpec(int(header["dim"]), int(header["N"]), float(header["L"]))
    size = int(np.prod(grid.shape))
    body = np.frombuffer(raw, dtype="<f8", offset=nl + 1)
    names = header["components"]
    if body.size != size * len(names):
        raise ValueError(f"snapshot body has {body.size} values, expected {size * len(names)}")
    comps = {name: body[k * size : (k + 1) * size].reshape(grid.shape).astype(float) for k, name in enumerate(names)}
    return header, grid, comps


def metric_components(g: MetricField) -> dict[str, np.ndarray]:
    return {f"g{i}{j}": g.components[..., c] for c, (i, j) in enumerate(sym_pairs(g.grid.dim))}


def write_metric(path, g: MetricField, extra: dict | None = None) -> Path:
    return write_tfs(path, g.grid, metric_components(g), extra)


def read_metric(path) -> MetricField:
    _, grid, comps = read_tfs(path)
    packed = np.stack([comps[f"g{i}{j}"] for i, j in sym_pairs(grid.dim)], axis=-1)
    return MetricField(grid, packed)


# ------------------------------------------------------------ tables


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v) or np.isinf(v):
            return str(v)
        return v
    return obj


def write_json(path, data) -> Path:
    return atomic_write_text(path, json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
