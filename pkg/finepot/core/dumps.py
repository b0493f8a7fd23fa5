"""
Plot-ready dumps: CSV (``node_index,x0[,x1,x2],value``, row-major), flat float64
binary, 8-bit PGM with the min/max normalisation in a header comment, and JSON
with non-finite numbers mapped to strings.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from finepot.classes.errors import ConfigError, PreconditionError
from finepot.core.grid_domain import GridDomain, NodeSet, ScalarField

_LOGGER = logging.getLogger(__name__)


def _header(domain: GridDomain, column: str) -> str:
    return ",".join(["node_index"] + [f"x{a}" for a in range(domain.dim)] + [column])


def write_field_csv(path: str | Path, u: ScalarField, column: str = "value") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    domain = u.domain
    table = np.column_stack([np.arange(domain.n_nodes), domain.coords, u.values])
    np.savetxt(path, table, fmt=["%d"] + ["%.17g"] * (domain.dim + 1), delimiter=",",
               header=_header(domain, column), comments="")
    return path


def write_nodeset_csv(path: str | Path, nodes: NodeSet, column: str = "member") -> Path:
    return write_field_csv(path, ScalarField(nodes.domain, nodes.mask.astype(float)), column)


def read_field_csv(path: str | Path, domain: GridDomain) -> ScalarField:
    """Read a CSV with a ``node_index`` column and a last value column; unlisted nodes are NaN."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"field file {path} does not exist")
    with path.open() as handle:
        header = handle.readline().strip().split(",")
    if header[0] != "node_index":
        raise ConfigError(f"{path}: first column must be node_index")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    values = np.full(domain.n_nodes, np.nan)
    if table.size == 0:
        return ScalarField(domain, values)
    index = table[:, 0].astype(np.int64)
    outside = (index < 0) | (index >= domain.n_nodes) | (index != table[:, 0])
    if np.any(outside):
        raise ConfigError(f"{path}: node index {table[np.argmax(outside), 0]:g} outside the grid")
    values[index] = table[:, -1]
    return ScalarField(domain, values)


def write_binary(path: str | Path, u: ScalarField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(u.values, dtype="<f8").tofile(path)
    return path


def read_binary(path: str | Path, domain: GridDomain) -> ScalarField:
    values = np.fromfile(Path(path), dtype="<f8")
    return ScalarField(domain, values)


def _image(domain: GridDomain, values: np.ndarray) -> np.ndarray:
    grid = domain.grid_view(values)
    if domain.dim == 1:
        return grid[None, :]
    if domain.dim == 3:
        grid = grid[:, :, domain.shape[2] // 2]
    # rows top to bottom = decreasing x1
    return grid.T[::-1, :]


def write_pgm(path: str | Path, u: ScalarField) -> Path:
    """Grey levels 0..255 from the finite min..max; non-finite nodes are 0."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = _image(u.domain, u.values)
    finite = np.isfinite(image)
    lo = float(np.min(image[finite])) if np.any(finite) else 0.0
    hi = float(np.max(image[finite])) if np.any(finite) else 0.0
    span = hi - lo if hi > lo else 1.0
    grey = np.zeros(image.shape, dtype=np.uint8)
    grey[finite] = np.rint(255 * (image[finite] - lo) / span).astype(np.uint8)
    _write_pgm_bytes(path, grey, f"finepot min={lo:.17g} max={hi:.17g}")
    return path


def write_classification_pgm(path: str | Path, domain: GridDomain, labels: np.ndarray) -> Path:
    """Labels already in 0 (outside) / 128 (inconclusive) / 255 (inside)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = _image(domain, np.asarray(labels, dtype=float)).astype(np.uint8)
    _write_pgm_bytes(path, image, "finepot classes 0=outside 128=inconclusive 255=inside")
    return path


def _write_pgm_bytes(path: Path, grey: np.ndarray, comment: str) -> None:
    rows, cols = grey.shape
    with path.open("wb") as handle:
        handle.write(f"P5\n# {comment}\n{cols} {rows}\n255\n".encode("ascii"))
        handle.write(np.ascontiguousarray(grey).tobytes())


def read_pgm(path: str | Path) -> tuple[np.ndarray, str]:
    data = Path(path).read_bytes()
    lines = data.split(b"\n", 4)
    if lines[0] != b"P5":
        raise PreconditionError(f"{path} is not a binary PGM")
    comment = lines[1].decode("ascii").lstrip("# ")
    cols, rows = (int(v) for v in lines[2].split())
    pixels = np.frombuffer(lines[4], dtype=np.uint8, count=rows * cols)
    return pixels.reshape(rows, cols), comment


def to_jsonable(value):
    """Recursively convert numpy types; NaN becomes null and ±inf the strings "inf"/"-inf"."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        json.dump(to_jsonable(data), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
