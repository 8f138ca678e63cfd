"""Raster grids, ESRI ASCII I/O and predictor-layer derivations.

Grids are stored north row first, as in the ASCII grid format. A point
``(x, y)`` belongs to the cell whose half-open interval
``[x_min + col * cell_size, x_min + (col + 1) * cell_size)`` contains ``x``
(and analogously for ``y``, counted from the southern edge).
"""

from __future__ import annotations

import ast
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ConfigError,
    DegenerateBandError,
    ExpressionError,
    FeatureMismatchError,
    FormatError,
    OutOfBoundsError,
    ParseError,
    ValidationError,
)

DEFAULT_NODATA = -9999.0
HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class RasterGrid:
    values: np.ndarray
    x_min: float
    y_min: float
    cell_size: float
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"grid values must be a non-empty 2-D array, got shape {values.shape}")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValidationError(f"cell size must be positive, got {self.cell_size}")
        # NaN cells are normalised to the sentinel.
        bad = ~np.isfinite(values) | (values == self.nodata)
        values[bad] = self.nodata
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "y_min", float(self.y_min))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "nodata", float(self.nodata))

    @classmethod
    def from_masked(cls, data: np.ndarray, template: "RasterGrid", mask=None) -> "RasterGrid":
        """Grid with ``template``'s geometry; NaN or masked cells become NODATA."""
        data = np.array(data, dtype=float)
        if mask is not None:
            data[mask] = np.nan
        return cls(data, template.x_min, template.y_min, template.cell_size, template.nodata)

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def x_max(self) -> float:
        return self.x_min + self.ncols * self.cell_size

    @property
    def y_max(self) -> float:
        return self.y_min + self.nrows * self.cell_size

    @property
    def mask(self) -> np.ndarray:
        """True where the cell is NODATA."""
        return self.values == self.nodata

    def is_nodata(self, value) -> bool:
        return bool(value == self.nodata)

    def masked(self) -> np.ndarray:
        """Values as a float array with NaN at NODATA cells."""
        out = self.values.copy()
        out[self.mask] = np.nan
        return out

    def geometry(self) -> tuple:
        return (self.nrows, self.ncols, self.x_min, self.y_min, self.cell_size)

    def same_geometry(self, other: "RasterGrid") -> bool:
        return self.geometry() == other.geometry()

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        col = math.floor((x - self.x_min) / self.cell_size)
        row_from_south = math.floor((y - self.y_min) / self.cell_size)
        if not (0 <= col < self.ncols and 0 <= row_from_south < self.nrows):
            raise OutOfBoundsError(f"point ({x}, {y}) outside grid extent")
        return self.nrows - 1 - row_from_south, col

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Center coordinate vectors: x per column, y per row (north first)."""
        cs = self.cell_size
        xs = self.x_min + (np.arange(self.ncols) + 0.5) * cs
        ys = self.y_min + (self.nrows - np.arange(self.nrows) - 0.5) * cs
        return xs, ys


@dataclass(frozen=True, eq=False)
class RasterStack:
    bands: tuple = field(default_factory=tuple)

    def __post_init__(self):
        bands = tuple((str(n), g) for n, g in self.bands)
        if not bands:
            raise ValidationError("a raster stack needs at least one band")
        names = [n for n, _ in bands]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate band names in stack: {names}")
        ref = bands[0][1]
        for name, grid in bands[1:]:
            if not grid.same_geometry(ref):
                raise ValidationError(f"band {name!r} does not share the stack geometry")
        object.__setattr__(self, "bands", bands)

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.bands)

    @property
    def grids(self) -> tuple:
        return tuple(g for _, g in self.bands)

    @property
    def template(self) -> RasterGrid:
        return self.bands[0][1]

    def __getitem__(self, name: str) -> RasterGrid:
        for n, g in self.bands:
            if n == name:
                return g
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.bands)

    def cell_index(self, x, y):
        return self.template.cell_index(x, y)

    def merge(self, other: "RasterStack") -> "RasterStack":
        return RasterStack(self.bands + other.bands)

    def select(self, names: Sequence[str]) -> "RasterStack":
        return RasterStack(tuple((n, self[n]) for n in names))


# -- ESRI ASCII grid ---------------------------------------------------------


def read_ascii_grid(path) -> RasterGrid:
    text = Path(path).read_text()
    tokens = text.split()
    header: dict = {}
    pos = 0
    while pos + 1 < len(tokens) and re.match(r"^[A-Za-z_]+$", tokens[pos]):
        key = tokens[pos].lower()
        try:
            header[key] = float(tokens[pos + 1])
        except ValueError:
            raise ParseError(f"{path}: header {tokens[pos]!r}: cannot parse {tokens[pos + 1]!r}") from None
        pos += 2
    if "xllcenter" in header and "xllcorner" not in header and "cellsize" in header:
        header["xllcorner"] = header.pop("xllcenter") - header["cellsize"] / 2
    if "yllcenter" in header and "yllcorner" not in header and "cellsize" in header:
        header["yllcorner"] = header.pop("yllcenter") - header["cellsize"] / 2
    header.setdefault("nodata_value", DEFAULT_NODATA)
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"{path}: missing header keys {missing}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    body = tokens[pos:]
    if len(body) != ncols * nrows:
        raise FormatError(f"{path}: header declares {nrows}x{ncols}={ncols * nrows} values, found {len(body)}")
    values = np.empty(len(body))
    for i, tok in enumerate(body):
        try:
            values[i] = float(tok)
        except ValueError:
            raise ParseError(
                f"{path}: cannot parse value {tok!r} at row {i // ncols}, column {i % ncols}"
            ) from None
    return RasterGrid(
        values.reshape(nrows, ncols),
        header["xllcorner"],
        header["yllcorner"],
        header["cellsize"],
        header["nodata_value"],
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_ascii_grid(grid: RasterGrid, path) -> None:
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {_fmt(grid.x_min)}",
        f"yllcorner {_fmt(grid.y_min)}",
        f"cellsize {_fmt(grid.cell_size)}",
        f"NODATA_value {_fmt(grid.nodata)}",
    ]
    lines.extend(" ".join(_fmt(v) for v in row) for row in grid.values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_stack_manifest(path) -> RasterStack:
    """Read a ``band_name = path.asc`` manifest; paths are relative to it."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"stack manifest not found: {path}")
    bands = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'name = file'")
        name, file = (s.strip() for s in line.split("=", 1))
        grid_path = Path(file)
        if not grid_path.is_absolute():
            grid_path = path.parent / grid_path
        if not grid_path.is_file():
            raise FormatError(f"{path}:{lineno}: band file not found: {grid_path}")
        bands.append((name, read_ascii_grid(grid_path)))
    return RasterStack(tuple(bands))


def write_stack(stack: RasterStack, directory, manifest_name: str = "stack.txt") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, grid in stack.bands:
        write_ascii_grid(grid, directory / f"{name}.asc")
        lines.append(f"{name} = {name}.asc")
    manifest = directory / manifest_name
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# -- band math ---------------------------------------------------------------

_ALLOWED_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _compile_expression(expression: str, names: Iterable[str]):
    try:
        tree = ast.parse(expression.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error in {expression!r} at offset {exc.offset}") from None
    names = set(names)
    used = []

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name):
            if node.id not in names:
                raise ExpressionError(f"unknown band {node.id!r} at offset {node.col_offset}")
            used.append(node.id)
        else:
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__} at offset {getattr(node, 'col_offset', 0)}"
            )

    check(tree)
    return tree.body, sorted(set(used))


def _evaluate(node, env):
    if isinstance(node, ast.BinOp):
        return _ALLOWED_BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        value = _evaluate(node.operand, env)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.Constant):
        return float(node.value)
    return env[node.id]


def band_math(stack: RasterStack, expression: str) -> RasterGrid:
    """Evaluate an arithmetic expression over band names cell by cell.

    Supports ``+ - * /``, parentheses, unary minus and numeric literals.
    Cells where any referenced band is NODATA, or where the result is not
    finite (e.g. division by zero), are NODATA in the output.
    """
    body, used = _compile_expression(expression, stack.names)
    template = stack.template
    env = {name: stack[name].masked() for name in used}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        result = _evaluate(body, env)
    result = np.broadcast_to(np.asarray(result, dtype=float), template.shape).copy()
    result[~np.isfinite(result)] = np.nan
    return RasterGrid.from_masked(result, template)


def read_expression_presets(path=None) -> dict:
    """Parse a ``name = expression`` preset file (``#`` starts a comment)."""
    if path is None:
        path = Path(__file__).with_name("data") / "indices.txt"
    presets = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'name = expression'")
        name, expr = (s.strip() for s in line.split("=", 1))
        presets[name] = expr
    return presets


# -- focal statistics, PCA, terrain -----------------------------------------


def focal_sd(grid: RasterGrid, window: int) -> RasterGrid:
    """Moving-window sample standard deviation (divisor n - 1).

    Windows are truncated at the grid edge; NODATA cells are ignored and a
    cell whose window holds fewer than two valid values is NODATA.
    """
    if not isinstance(window, (int, np.integer)) or window < 3 or window % 2 == 0:
        raise ConfigError(f"window must be an odd integer >= 3, got {window!r}")
    half = window // 2
    padded = np.pad(grid.masked(), half, mode="constant", constant_values=np.nan)
    win = sliding_window_view(padded, (window, window))
    count = np.sum(np.isfinite(win), axis=(2, 3))
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NODATA windows
        mean = np.nanmean(win, axis=(2, 3))
        dev = win - mean[:, :, None, None]
        ss = np.nansum(dev * dev, axis=(2, 3))
        sd = np.sqrt(ss / (count - 1))
    sd[count < 2] = np.nan
    return RasterGrid.from_masked(sd, grid)


def pca_loadings(stack: RasterStack) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Correlation-matrix PCA over cells valid in every band.

    Returns ``(eigenvalues, eigenvectors, means, sds)``, eigenvalues
    descending; each eigenvector's first nonzero coefficient is positive.
    """
    if len(stack) < 2:
        raise ConfigError("PCA needs at least two bands")
    data = np.column_stack([g.masked().ravel() for g in stack.grids])
    valid = np.all(np.isfinite(data), axis=1)
    if valid.sum() < 2:
        raise ConfigError("PCA needs at least two cells valid in all bands")
    x = data[valid]
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    for name, sd in zip(stack.names, sds):
        if not sd > 0:
            raise DegenerateBandError(f"band {name!r} has zero variance")
    z = (x - means) / sds
    corr = z.T @ z / len(z)
    evals, evecs = np.linalg.eigh(corr)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    for j in range(evecs.shape[1]):
        nz = np.flatnonzero(np.abs(evecs[:, j]) > 1e-12)
        if len(nz) and evecs[nz[0], j] < 0:
            evecs[:, j] = -evecs[:, j]
    return evals, evecs, means, sds


def pca_first_component(stack: RasterStack) -> RasterGrid:
    _, evecs, means, sds = pca_loadings(stack)
    data = np.column_stack([g.masked().ravel() for g in stack.grids])
    pc1 = ((data - means) / sds) @ evecs[:, 0]
    return RasterGrid.from_masked(pc1.reshape(stack.template.shape), stack.template)


def slope_aspect(dem: RasterGrid) -> tuple[RasterGrid, RasterGrid]:
    """Slope and aspect in radians from Horn's 3x3 gradient.

    Aspect is the downslope azimuth, clockwise from north, in ``[0, 2*pi)``.
    Border cells, cells next to NODATA and (for aspect) flat cells are
    NODATA.
    """
    if dem.nrows < 3 or dem.ncols < 3:
        raise ConfigError("slope/aspect need a DEM of at least 3x3 cells")
    z = dem.masked()
    cs = dem.cell_size
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    # rows run north to south, so the northward gradient is top minus bottom
    dz_east = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * cs)
    dz_north = ((a + 2 * b + c) - (g + 2 * h + i)) / (8 * cs)
    mag = np.hypot(dz_east, dz_north)
    slope = np.full(z.shape, np.nan)
    aspect = np.full(z.shape, np.nan)
    slope[1:-1, 1:-1] = np.arctan(mag)
    with np.errstate(invalid="ignore"):
        asp = np.mod(np.arctan2(-dz_east, -dz_north), 2 * np.pi)
    asp[~(mag >= 1e-12)] = np.nan
    asp[asp >= 2 * np.pi] = 0.0
    aspect[1:-1, 1:-1] = asp
    return RasterGrid.from_masked(slope, dem), RasterGrid.from_masked(aspect, dem)


def coordinate_layers(template: RasterGrid) -> RasterStack:
    xs, ys = template.cell_centers()
    gx = np.broadcast_to(xs[None, :], template.shape)
    gy = np.broadcast_to(ys[:, None], template.shape)
    return RasterStack(
        (
            ("coord_x", RasterGrid(gx, template.x_min, template.y_min, template.cell_size, template.nodata)),
            ("coord_y", RasterGrid(gy, template.x_min, template.y_min, template.cell_size, template.nodata)),
        )
    )


def stack_matrix(stack: RasterStack, names: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Cell-by-feature matrix for ``names`` plus a validity mask per cell."""
    missing = [n for n in names if n not in stack]
    if missing:
        raise FeatureMismatchError(f"stack lacks model features: {missing}")
    data = np.column_stack([stack[n].masked().ravel() for n in names]) if names else np.empty((stack.template.values.size, 0))
    valid = np.all(np.isfinite(data), axis=1)
    return data, valid


def predict_surface(model, stack: RasterStack, jobs: int = 1) -> RasterGrid:
    """Per-cell model prediction (class index for classification).

    Any cell with NODATA in a band the model uses is NODATA.
    """
    data, valid = stack_matrix(stack, model.feature_names)
    out = np.full(len(data), np.nan)
    if valid.any():
        out[valid] = model.predict_values(data[valid], jobs=jobs)
    return RasterGrid.from_masked(out.reshape(stack.template.shape), stack.template)
