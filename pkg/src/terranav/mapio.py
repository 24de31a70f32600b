"""Grid map and point-cloud file formats.

CSV grids are row-major starting at the minimum-y row, with ``nan`` for vacant
cells, and are written with shortest round-trip float formatting so a
write/read cycle is bit-exact. PGM maps are 16-bit binary (P5) where 0 marks a
vacant cell and value ``v >= 1`` decodes to ``z_offset + (v - 1) * z_scale``.
Both formats carry a JSON sidecar (``<file>.meta.json``) with the grid
geometry.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MapFormatError
from .gridmap import GridSpec, HeightMap


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_sidecar(path, spec: GridSpec, **extra) -> None:
    meta = {"resolution": spec.resolution, "origin": list(spec.origin),
            "height_cells": spec.height_cells, "width_cells": spec.width_cells}
    meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict | None:
    p = sidecar_path(path)
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"bad sidecar {p}: {exc}") from exc


def _format(v: float) -> str:
    return "nan" if np.isnan(v) else repr(float(v))


def write_grid_csv(path, values: np.ndarray, spec: GridSpec | None = None) -> None:
    """Write a 2-D array as CSV (plus a sidecar when ``spec`` is given)."""
    arr = np.asarray(values, dtype=float)
    lines = [",".join(_format(v) for v in row) for row in arr]
    Path(path).write_text("\n".join(lines) + "\n")
    if spec is not None:
        write_sidecar(path, spec)


def read_grid_csv(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MapFormatError(f"cannot read {path}: {exc}") from exc
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise MapFormatError(f"{path}: empty grid")
    try:
        data = [[float(tok) for tok in row.split(",")] for row in rows]
    except ValueError as exc:
        raise MapFormatError(f"{path}: {exc}") from exc
    width = len(data[0])
    if any(len(r) != width for r in data):
        raise MapFormatError(f"{path}: ragged rows")
    arr = np.array(data, dtype=float)
    if np.isinf(arr).any():
        raise MapFormatError(f"{path}: infinite value")
    return arr


def _spec_from(path, shape, resolution=None, origin=None) -> GridSpec:
    meta = read_sidecar(path) or {}
    res = meta.get("resolution", resolution)
    org = meta.get("origin", origin if origin is not None else (0.0, 0.0))
    if res is None:
        raise MapFormatError(f"{path}: no resolution (missing sidecar)")
    return GridSpec(shape[0], shape[1], float(res), tuple(org))


def write_heightmap_csv(path, hmap: HeightMap) -> None:
    write_grid_csv(path, hmap.cells, hmap.spec)


def read_heightmap_csv(path, resolution=None, origin=None) -> HeightMap:
    arr = read_grid_csv(path)
    return HeightMap(_spec_from(path, arr.shape, resolution, origin), arr)


def write_heightmap_pgm(path, hmap: HeightMap, z_scale: float = 1e-4, z_offset: float | None = None) -> None:
    cells = hmap.cells
    present = ~np.isnan(cells)
    if z_offset is None:
        z_offset = float(np.min(cells[present])) if present.any() else 0.0
    q = np.zeros(cells.shape, dtype=np.int64)
    q[present] = np.rint((cells[present] - z_offset) / z_scale).astype(np.int64) + 1
    if (q > 65535).any() or (q[present] < 1).any():
        raise MapFormatError("elevation range does not fit 16 bits at this z_scale/z_offset")
    header = f"P5\n{hmap.spec.width_cells} {hmap.spec.height_cells}\n65535\n".encode()
    Path(path).write_bytes(header + q.astype(">u2").tobytes())
    write_sidecar(path, hmap.spec, z_scale=z_scale, z_offset=z_offset)


def read_heightmap_pgm(path) -> HeightMap:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise MapFormatError(f"cannot read {path}: {exc}") from exc
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapFormatError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise MapFormatError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 65535:
        raise MapFormatError(f"{path}: expected 16-bit PGM")
    body = raw[pos:pos + 2 * width * height]
    if len(body) != 2 * width * height:
        raise MapFormatError(f"{path}: truncated pixel data")
    q = np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.int64)
    meta = read_sidecar(path)
    if meta is None:
        raise MapFormatError(f"{path}: PGM requires a sidecar")
    cells = np.full(q.shape, np.nan)
    present = q > 0
    cells[present] = meta["z_offset"] + (q[present] - 1) * meta["z_scale"]
    return HeightMap(_spec_from(path, q.shape), cells)


def read_heightmap(path, resolution=None, origin=None) -> HeightMap:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_heightmap_pgm(path)
    return read_heightmap_csv(path, resolution, origin)


def read_point_cloud(path) -> np.ndarray:
    """Whitespace-separated ``x y z`` lines; blank lines and ``#`` comments skipped."""
    pts = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise MapFormatError(f"cannot read {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MapFormatError(f"{path}:{n}: expected 3 columns, got {len(parts)}")
        try:
            pts.append([float(p) for p in parts])
        except ValueError as exc:
            raise MapFormatError(f"{path}:{n}: {exc}") from exc
    return np.array(pts, dtype=float).reshape(-1, 3)
