"""Georeferenced grids, speckle filtering and ground-point sampling.

Rasters are read from and written to ESRI ASCII grids (``.asc``) with a
six-key header (``ncols``, ``nrows``, ``xllcorner``, ``yllcorner``,
``cellsize``, ``NODATA_value``) followed by ``nrows`` lines of ``ncols``
values, north row first. Windows are specified in metres and converted to
an odd number of cells: ``ceil(window_m / cellsize)`` rounded up to odd,
at least 1.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .exceptions import BoundsError, FormatError, GridError

__all__ = [
    "Raster",
    "SamplePoint",
    "read_asc",
    "write_asc",
    "window_cells",
    "moving_average",
    "window_mean",
    "read_samples",
    "write_samples",
    "check_same_grid",
    "DEFAULT_NODATA",
]

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass
class Raster:
    values: np.ndarray
    xll: float = 0.0
    yll: float = 0.0
    cellsize: float = 1.0
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float, ndmin=2)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise GridError("raster values must be a non-empty 2-D grid")
        if not self.cellsize > 0:
            raise GridError("cellsize must be > 0")

    @property
    def nrows(self):
        return self.values.shape[0]

    @property
    def ncols(self):
        return self.values.shape[1]

    @property
    def valid(self):
        """Boolean mask of cells holding data."""
        return (self.values != self.nodata) & np.isfinite(self.values)

    def masked(self):
        """Values with NODATA replaced by NaN."""
        return np.where(self.valid, self.values, np.nan)

    @classmethod
    def like(cls, template, values, nodata=None):
        """New raster on ``template``'s grid; NaN in ``values`` becomes NODATA."""
        nodata = template.nodata if nodata is None else nodata
        values = np.asarray(values, dtype=float)
        return cls(np.where(np.isfinite(values), values, nodata),
                   template.xll, template.yll, template.cellsize, nodata)

    def same_grid(self, other):
        return (
            self.values.shape == other.values.shape
            and self.xll == other.xll
            and self.yll == other.yll
            and self.cellsize == other.cellsize
        )

    def cell_of(self, x, y):
        """``(row, col)`` of the cell containing ``(x, y)``; row 0 is north."""
        width = self.ncols * self.cellsize
        height = self.nrows * self.cellsize
        dx, dy = x - self.xll, y - self.yll
        if not (0 <= dx <= width and 0 <= dy <= height):
            raise BoundsError(f"point ({x}, {y}) outside raster extent")
        col = min(int(math.floor(dx / self.cellsize)), self.ncols - 1)
        row_from_south = min(int(math.floor(dy / self.cellsize)), self.nrows - 1)
        return self.nrows - 1 - row_from_south, col

    def value_at(self, x, y):
        r, c = self.cell_of(x, y)
        return self.values[r, c]


def check_same_grid(rasters):
    """Raise :class:`GridError` naming the first raster off the reference grid.

    ``rasters`` maps names to rasters; None entries are skipped.
    """
    items = [(k, r) for k, r in rasters.items() if r is not None]
    if not items:
        return
    ref_name, ref = items[0]
    for name, r in items[1:]:
        if not r.same_grid(ref):
            raise GridError(f"raster {name!r} does not share the grid of {ref_name!r}")


def _fmt(v):
    return repr(float(v))


def write_asc(raster, path):
    lines = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {_fmt(raster.xll)}",
        f"yllcorner {_fmt(raster.yll)}",
        f"cellsize {_fmt(raster.cellsize)}",
        f"NODATA_value {_fmt(raster.nodata)}",
    ]
    vals = np.where(raster.valid, raster.values, raster.nodata)
    lines.extend(" ".join(_fmt(v) for v in row) for row in vals)
    Path(path).write_text("\n".join(lines) + "\n")


def read_asc(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    header = {}
    for lineno in range(1, 7):
        if lineno > len(lines):
            raise FormatError("truncated header", lineno, path=path)
        parts = lines[lineno - 1].split()
        if len(parts) != 2:
            raise FormatError("header lines must be 'key value'", lineno, path=path)
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            raise FormatError(f"unknown header key {parts[0]!r}", lineno, 1, path)
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise FormatError(f"bad header value {parts[1]!r}", lineno, 2, path) from None
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"missing header keys {missing}", 7, path=path)
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise FormatError("ncols and nrows must be positive integers", path=path)
    ncols, nrows = int(ncols), int(nrows)
    body = lines[6:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != nrows:
        raise FormatError(f"expected {nrows} data rows, found {len(body)}",
                          7 + min(len(body), nrows), path=path)
    values = np.empty((nrows, ncols))
    for i, line in enumerate(body):
        lineno = 7 + i
        tokens = line.split()
        if len(tokens) != ncols:
            raise FormatError(f"expected {ncols} values, found {len(tokens)}", lineno, path=path)
        for j, tok in enumerate(tokens):
            try:
                values[i, j] = float(tok)
            except ValueError:
                raise FormatError(f"not a number: {tok!r}", lineno, j + 1, path) from None
    return Raster(values, header["xllcorner"], header["yllcorner"], header["cellsize"],
                  header["nodata_value"])


def window_cells(window_m, cellsize):
    """Odd cell count covering ``window_m`` metres (minimum 1)."""
    if not window_m > 0:
        raise ValueError("window must be > 0")
    n = max(1, int(math.ceil(window_m / cellsize - 1e-9)))
    return n if n % 2 else n + 1


def moving_average(raster, window_m, edge="shrink"):
    """Mean over a centred square window, skipping NODATA cells.

    ``edge="shrink"`` averages the in-bounds cells only; ``edge="wrap"``
    treats the grid as a torus. NODATA cells stay NODATA.
    """
    n = window_cells(window_m, raster.cellsize)
    valid = raster.valid
    data = np.where(valid, raster.values, 0.0)
    if n == 1:
        return Raster.like(raster, np.where(valid, raster.values, np.nan))
    mode = {"shrink": "constant", "wrap": "wrap"}[edge]
    total = uniform_filter(data, size=n, mode=mode, cval=0.0)
    count = uniform_filter(valid.astype(float), size=n, mode=mode, cval=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count
    return Raster.like(raster, np.where(valid, mean, np.nan))


def window_mean(raster, x, y, window_m):
    """Mean of valid cells in a ``window_m`` square centred on the cell holding ``(x, y)``.

    Returns ``raster.nodata`` when the window holds no valid cell.
    """
    row, col = raster.cell_of(x, y)
    half = window_cells(window_m, raster.cellsize) // 2
    block = raster.values[max(0, row - half):row + half + 1, max(0, col - half):col + half + 1]
    ok = (block != raster.nodata) & np.isfinite(block)
    if not ok.any():
        return raster.nodata
    return float(block[ok].mean())


@dataclass
class SamplePoint:
    id: str
    x: float
    y: float
    mv: float
    height: float
    sigma: dict = field(default_factory=dict)  # band letter -> dB; absent bands omitted


_SAMPLE_BASE = ("id", "x", "y", "mv", "height")
_SAMPLE_SIGMA = ("sigma_p_db", "sigma_l_db", "sigma_c_db")


def read_samples(path):
    """Read a ground-sample CSV into a list of :class:`SamplePoint`."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty file", 1, path=path) from None
        if tuple(header[:5]) != _SAMPLE_BASE or any(h not in _SAMPLE_SIGMA for h in header[5:]):
            raise FormatError(
                "header must be id,x,y,mv,height[,sigma_p_db,sigma_l_db,sigma_c_db]", 1, path=path
            )
        points, seen = [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not t.strip() for t in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(row)}", lineno, path=path)
            pid = row[0].strip()
            if not pid:
                raise FormatError("empty id", lineno, 1, path)
            if pid in seen:
                raise FormatError(f"duplicate id {pid!r}", lineno, 1, path)
            seen.add(pid)
            nums = {}
            for col, (name, tok) in enumerate(zip(header[1:], row[1:]), start=2):
                tok = tok.strip()
                if name in _SAMPLE_SIGMA and tok in ("", "NA"):
                    continue
                try:
                    nums[name] = float(tok)
                except ValueError:
                    raise FormatError(f"not a number: {tok!r}", lineno, col, path) from None
            if not (math.isfinite(nums["x"]) and math.isfinite(nums["y"])):
                raise FormatError("coordinates must be finite", lineno, path=path)
            sigma = {k[6].upper(): v for k, v in nums.items() if k in _SAMPLE_SIGMA}
            points.append(SamplePoint(pid, nums["x"], nums["y"], nums["mv"], nums["height"], sigma))
    return points


def write_samples(points, path):
    bands = [b for b in "PLC" if any(b in p.sigma for p in points)]
    header = list(_SAMPLE_BASE) + [f"sigma_{b.lower()}_db" for b in bands]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for p in points:
            row = [p.id, _fmt(p.x), _fmt(p.y), _fmt(p.mv), _fmt(p.height)]
            row += [_fmt(p.sigma[b]) if b in p.sigma else "NA" for b in bands]
            writer.writerow(row)
