"""Plain-text and image serialization of grids, fields and reports.

All writers are deterministic: floats are written with ``repr`` (shortest
round-trip form), JSON keys are sorted, and nothing depends on the clock.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .geometry import CLASS_NAMES, Grid


class FieldIOError(ValueError):
    pass


def _f(v: float) -> str:
    return repr(float(v))


def grid_csv(grid: Grid, eps: float | None = None) -> str:
    d = grid.dimension
    cls = grid.classify(eps)
    lines = ["node_id," + ",".join(f"x{i + 1}" for i in range(d)) + ",class,dist_gammaD"]
    for i in range(grid.n_nodes):
        xs = ",".join(_f(v) for v in grid.coords[i])
        lines.append(f"{i},{xs},{CLASS_NAMES[int(cls[i])]},{_f(grid.dist_dirichlet[i])}")
    return "\n".join(lines) + "\n"


def field_csv(grid: Grid, values: np.ndarray) -> str:
    values = np.asarray(values, float)
    if values.shape != (grid.n_nodes,):
        raise FieldIOError(f"field has shape {values.shape}, grid has {grid.n_nodes} nodes")
    lines = [f"# grid_hash={grid.grid_hash()}", "node_id,value"]
    lines.extend(f"{i},{_f(v)}" for i, v in enumerate(values))
    return "\n".join(lines) + "\n"


def read_field_csv(text: str, grid: Grid | None = None) -> np.ndarray:
    """Parse a field CSV; if ``grid`` is given, its hash must match the header."""
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not rows or not rows[0].startswith("# grid_hash="):
        raise FieldIOError("field CSV must start with a '# grid_hash=' line")
    file_hash = rows[0].split("=", 1)[1].strip()
    if grid is not None and file_hash != grid.grid_hash():
        raise FieldIOError(f"grid hash mismatch: file {file_hash}, grid {grid.grid_hash()}")
    if len(rows) < 2 or rows[1].replace(" ", "") != "node_id,value":
        raise FieldIOError("missing 'node_id,value' header")
    ids, vals = [], []
    for lineno, row in enumerate(rows[2:], start=3):
        try:
            a, b = row.split(",")
            ids.append(int(a))
            vals.append(float(b))
        except ValueError:
            raise FieldIOError(f"line {lineno}: expected 'node_id,value', got {row!r}") from None
    n = len(ids)
    if sorted(ids) != list(range(n)):
        raise FieldIOError("node ids must be exactly 0..n-1")
    if grid is not None and n != grid.n_nodes:
        raise FieldIOError(f"field has {n} values, grid has {grid.n_nodes} nodes")
    out = np.empty(n)
    out[ids] = vals
    return out


def profile_csv(grid: Grid, values: np.ndarray) -> str:
    """Two-column ``x,u`` dump for one-dimensional grids, sorted by x."""
    if grid.dimension != 1:
        raise FieldIOError("profile CSV is for one-dimensional grids")
    order = np.argsort(grid.coords[:, 0], kind="stable")
    lines = ["x,u"]
    lines.extend(f"{_f(grid.coords[i, 0])},{_f(values[i])}" for i in order)
    return "\n".join(lines) + "\n"


def _lattice_image(grid: Grid, values: np.ndarray, axes: tuple[int, int], mask: np.ndarray) -> np.ndarray:
    """Values on a dense (rows = second axis, flipped so it increases upward) image; NaN where absent."""
    idx = grid.index[mask][:, list(axes)]
    vals = np.asarray(values, float)[mask]
    lo = idx.min(axis=0)
    shape = idx.max(axis=0) - lo + 1
    img = np.full((shape[1], shape[0]), np.nan)
    img[shape[1] - 1 - (idx[:, 1] - lo[1]), idx[:, 0] - lo[0]] = vals
    return img


def heatmap_pgm(grid: Grid, values: np.ndarray) -> tuple[bytes, dict[str, Any]]:
    """8-bit binary PGM of a two-dimensional field plus its value scale.

    Gray level 0 marks lattice points outside the domain; levels 1..255 map
    linearly onto ``[vmin, vmax]``.
    """
    if grid.dimension != 2:
        raise FieldIOError("heatmaps are for two-dimensional grids")
    img = _lattice_image(grid, values, (0, 1), np.ones(grid.n_nodes, bool))
    finite = np.isfinite(img)
    vmin, vmax = float(np.nanmin(img)), float(np.nanmax(img))
    span = vmax - vmin
    levels = np.zeros(img.shape, np.uint8)
    scaled = (img[finite] - vmin) / span if span > 0 else np.zeros(finite.sum())
    levels[finite] = (1 + np.rint(254 * scaled)).astype(np.uint8)
    h, w = img.shape
    data = f"P5\n{w} {h}\n255\n".encode() + levels.tobytes()
    scale = {"vmin": vmin, "vmax": vmax, "width": w, "height": h, "background_level": 0,
             "level_min": 1, "level_max": 255, "delta": grid.delta, "grid_hash": grid.grid_hash(),
             "origin": "lower-left pixel is the smallest (x1, x2)"}
    return data, scale


def slice_csv(grid: Grid, values: np.ndarray, axis: int, value: float) -> str:
    """Nodes of a three-dimensional field on the lattice plane nearest to ``x_axis = value``."""
    if grid.dimension != 3:
        raise FieldIOError("slices are for three-dimensional grids")
    if axis not in (0, 1, 2):
        raise FieldIOError("slice axis must be 0, 1 or 2")
    levels = np.unique(grid.coords[:, axis])
    level = levels[int(np.argmin(np.abs(levels - value)))]
    sel = np.flatnonzero(grid.coords[:, axis] == level)
    other = [i for i in range(3) if i != axis]
    lines = [f"# axis=x{axis + 1} level={_f(level)}", f"node_id,x{other[0] + 1},x{other[1] + 1},value"]
    lines.extend(f"{i},{_f(grid.coords[i, other[0]])},{_f(grid.coords[i, other[1]])},{_f(values[i])}" for i in sel)
    return "\n".join(lines) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_text(path: Path, text: str | bytes, partial: bool = False) -> Path:
    """Write ``text``; with ``partial`` the file gets a ``.partial`` suffix."""
    path = Path(path)
    if partial:
        path = path.with_name(path.name + ".partial")
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text)
    return path
