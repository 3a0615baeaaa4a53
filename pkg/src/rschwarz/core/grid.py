"""Structured rectangular grid, grid functions and the media coefficient."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, NamedTuple

import numpy as np

from rschwarz.core.errors import (
    NonConformingGrid,
    NonPositiveMedia,
    OutOfDomain,
    ParseError,
)
from rschwarz.core.logging.logging import get_logger
from rschwarz.core.util.serializable import Serializable

logger = get_logger("grid")

CONFORMITY_RTOL = 1e-12


def cells_along(length: float, h: float, what: str = "length") -> int:
    """Number of grid cells spanning `length`.

    Raises:
        NonConformingGrid: If `length / h` is not an integer within 1e-12
            relative.
    """
    ratio = length / h
    n = round(ratio)
    if abs(ratio - n) > CONFORMITY_RTOL * max(1.0, abs(ratio)):
        raise NonConformingGrid(
            f"{what}={length!r} is not an integer multiple of h={h!r}"
        )
    return int(n)


class Rect(NamedTuple):
    """Inclusive node-index subrectangle: columns i0..i1, rows j0..j1."""

    i0: int
    i1: int
    j0: int
    j1: int

    @property
    def nx(self) -> int:
        return self.i1 - self.i0 + 1

    @property
    def ny(self) -> int:
        return self.j1 - self.j0 + 1

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def contains(self, other: "Rect") -> bool:
        return (
            self.i0 <= other.i0
            and other.i1 <= self.i1
            and self.j0 <= other.j0
            and other.j1 <= self.j1
        )

    def local_index(self, i, j):
        """Row-major position of global node (i, j) inside this rectangle."""
        return (np.asarray(j) - self.j0) * self.nx + (np.asarray(i) - self.i0)

    def node_columns_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Global (i, j) of every node, row-major."""
        jj, ii = np.meshgrid(
            np.arange(self.j0, self.j1 + 1),
            np.arange(self.i0, self.i1 + 1),
            indexing="ij",
        )
        return ii.ravel(), jj.ravel()


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over [0, lx] x [0, ly]; node (i, j) sits at (i*h, j*h)."""

    lx: float
    ly: float
    h: float
    nx: int
    ny: int

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def full_rect(self) -> Rect:
        return Rect(0, self.nx - 1, 0, self.ny - 1)

    def x_coords(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    def y_coords(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    def node_index(self, i, j):
        """Global row-major node index."""
        return np.asarray(j) * self.nx + np.asarray(i)

    def on_boundary(self, i, j) -> np.ndarray:
        i = np.asarray(i)
        j = np.asarray(j)
        return (i == 0) | (i == self.nx - 1) | (j == 0) | (j == self.ny - 1)

    def boundary_node_ids(self) -> np.ndarray:
        """Global indices of the nodes on the domain boundary, counterclockwise."""
        ii, jj = rect_boundary_nodes(self.full_rect)
        return self.node_index(ii, jj)


def rect_boundary_nodes(rect: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Boundary nodes of `rect` in canonical counterclockwise order.

    Starts at the lower-left corner: bottom row left to right, right column
    bottom to top, top row right to left, left column top to bottom. Each
    corner appears once.
    """
    i0, i1, j0, j1 = rect
    bottom_i = np.arange(i0, i1)
    right_j = np.arange(j0, j1)
    top_i = np.arange(i1, i0, -1)
    left_j = np.arange(j1, j0, -1)
    ii = np.concatenate(
        [bottom_i, np.full(right_j.size, i1), top_i, np.full(left_j.size, i0)]
    )
    jj = np.concatenate(
        [np.full(bottom_i.size, j0), right_j, np.full(top_i.size, j1), left_j]
    )
    return ii, jj


def build_grid(lx: float, ly: float, h: float) -> GridSpec:
    """Build the grid over [0, lx] x [0, ly] with spacing h.

    Raises:
        NonConformingGrid: If a length is not an integer multiple of h, or
            the grid has fewer than three nodes per direction.
    """
    if lx <= 0 or ly <= 0 or h <= 0:
        raise NonConformingGrid(
            f"grid lengths and spacing must be positive (lx={lx}, ly={ly}, h={h})"
        )
    nx = cells_along(lx, h, "lx") + 1
    ny = cells_along(ly, h, "ly") + 1
    if nx < 3 or ny < 3:
        raise NonConformingGrid(
            f"grid needs at least 3 nodes per direction, got {nx}x{ny}"
        )
    return GridSpec(lx=lx, ly=ly, h=h, nx=nx, ny=ny)


@dataclass(eq=False)
class GridFunction(Serializable):
    """Node values over a subrectangle, row-major (x fastest)."""

    rect: Rect
    values: np.ndarray

    def __post_init__(self):
        self.rect = Rect(*self.rect)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.rect.size,):
            raise ValueError(
                f"expected {self.rect.size} values for {self.rect}, "
                f"got shape {self.values.shape}"
            )

    def as_array(self) -> np.ndarray:
        """Values reshaped to (rows, columns)."""
        return self.values.reshape(self.rect.ny, self.rect.nx)

    def to_dict(self) -> dict[str, Any]:
        return {"rect": list(self.rect), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GridFunction":
        return cls(Rect(*data["rect"]), np.asarray(data["values"]))


MediaKind = Literal["builtin-oscillatory", "raster"]


@dataclass(frozen=True, eq=False)
class MediaField:
    """The coefficient a(x, y), analytic or piecewise constant on a raster.

    `extent` is (x0, y0, x1, y1): the domain for the builtin kind, the raster
    footprint otherwise. `raster` has shape (cells_y, cells_x) with row 0 at
    the bottom.
    """

    kind: MediaKind
    alpha: float
    beta: float
    extent: tuple[float, float, float, float]
    epsilon: float | None = None
    raster: np.ndarray | None = field(default=None, repr=False)

    def evaluate(self, x, y) -> np.ndarray:
        """Vectorized evaluation without extent checks."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "builtin-oscillatory":
            return oscillatory_coefficient(x, y, self.epsilon)
        return self._raster_lookup(x, y)

    def _raster_lookup(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x0, y0, x1, y1 = self.extent
        cells_y, cells_x = self.raster.shape
        dx = (x1 - x0) / cells_x
        dy = (y1 - y0) / cells_y
        # ceil - 1 puts points on a cell boundary into the lower-index cell
        ix = np.clip(np.ceil((x - x0) / dx).astype(int) - 1, 0, cells_x - 1)
        iy = np.clip(np.ceil((y - y0) / dy).astype(int) - 1, 0, cells_y - 1)
        return self.raster[iy, ix]

    def covers(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        ex0, ey0, ex1, ey1 = self.extent
        tol = CONFORMITY_RTOL * max(1.0, abs(ex1 - ex0), abs(ey1 - ey0))
        return (
            ex0 - tol <= x0
            and ey0 - tol <= y0
            and x1 <= ex1 + tol
            and y1 <= ey1 + tol
        )

    def fingerprint_payload(self) -> bytes:
        """Canonical bytes identifying this coefficient for hashing."""
        head = f"{self.kind}|{self.epsilon!r}|{self.extent!r}".encode()
        if self.raster is None:
            return head
        cells = np.ascontiguousarray(self.raster, dtype="<f8")
        return head + f"|{cells.shape!r}|".encode() + cells.tobytes()


def oscillatory_coefficient(x, y, epsilon: float) -> np.ndarray:
    """The two-scale coefficient used by the benchmark problem."""
    return (2.0 + 1.8 * np.sin(np.pi * x / epsilon)) / (
        2.0 + 1.8 * np.cos(np.pi * y / epsilon)
    ) + (2.0 + np.sin(np.pi * y / epsilon)) / (2.0 + 1.8 * np.sin(np.pi * x))


def media_eval(m: MediaField, x: float, y: float) -> float:
    """Evaluate a(x, y) at a single point.

    Raises:
        OutOfDomain: If (x, y) is outside the media extent.
    """
    if not m.covers(x, y, x, y):
        raise OutOfDomain(f"point ({x}, {y}) outside media extent {m.extent}")
    return float(m.evaluate(x, y))


def edge_coefficient_fields(
    m: MediaField, grid: GridSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient at every edge midpoint of the grid.

    Returns:
        (horizontal, vertical): horizontal[j, i] belongs to the edge between
        nodes (i, j) and (i+1, j), shape (ny, nx-1); vertical[j, i] to the
        edge between (i, j) and (i, j+1), shape (ny-1, nx).

    Raises:
        OutOfDomain: If the media does not cover the grid.
    """
    if not m.covers(0.0, 0.0, grid.lx, grid.ly):
        raise OutOfDomain(
            f"media extent {m.extent} does not cover [0, {grid.lx}] x [0, {grid.ly}]"
        )
    xs = grid.x_coords()
    ys = grid.y_coords()
    x_mid = 0.5 * (xs[:-1] + xs[1:])
    y_mid = 0.5 * (ys[:-1] + ys[1:])
    hx, hy = np.meshgrid(x_mid, ys)
    vx, vy = np.meshgrid(xs, y_mid)
    return m.evaluate(hx, hy), m.evaluate(vx, vy)


def edge_coefficient(
    m: MediaField,
    grid: GridSpec,
    edge: tuple[tuple[int, int], tuple[int, int]],
) -> float:
    """Coefficient of the edge joining two adjacent nodes, at its midpoint."""
    (ia, ja), (ib, jb) = edge
    if abs(ia - ib) + abs(ja - jb) != 1:
        raise ValueError(f"nodes {edge[0]} and {edge[1]} are not adjacent")
    xs = grid.x_coords()
    ys = grid.y_coords()
    xm = 0.5 * (xs[min(ia, ib)] + xs[max(ia, ib)])
    ym = 0.5 * (ys[min(ja, jb)] + ys[max(ja, jb)])
    return float(m.evaluate(xm, ym))


def _bounded(
    kind: MediaKind,
    samples: np.ndarray,
    extent: tuple[float, float, float, float],
    **kwargs,
) -> MediaField:
    alpha = float(np.min(samples))
    beta = float(np.max(samples))
    if not alpha > 0.0 or not math.isfinite(beta):
        raise NonPositiveMedia(
            f"media values must be positive and finite, found range [{alpha}, {beta}]"
        )
    return MediaField(kind=kind, alpha=alpha, beta=beta, extent=extent, **kwargs)


def builtin_media(grid: GridSpec, epsilon: float = 1.0 / 16.0) -> MediaField:
    """The oscillatory benchmark media with bounds sampled on `grid`.

    alpha and beta are the extremes over every edge midpoint of the grid.
    """
    if epsilon <= 0:
        raise NonPositiveMedia(f"epsilon must be positive, got {epsilon}")
    extent = (0.0, 0.0, grid.lx, grid.ly)
    probe = MediaField(
        kind="builtin-oscillatory",
        alpha=1.0,
        beta=1.0,
        extent=extent,
        epsilon=epsilon,
    )
    horizontal, vertical = edge_coefficient_fields(probe, grid)
    samples = np.concatenate([horizontal.ravel(), vertical.ravel()])
    media = _bounded(
        "builtin-oscillatory", samples, extent, epsilon=epsilon
    )
    logger.debug(
        "Sampled builtin media bounds",
        epsilon=epsilon,
        alpha=media.alpha,
        beta=media.beta,
    )
    return media


def raster_media(
    cells: np.ndarray, extent: tuple[float, float, float, float]
) -> MediaField:
    """Piecewise-constant media from a (cells_y, cells_x) array, bottom row first."""
    cells = np.array(cells, dtype=float, ndmin=2)
    x0, y0, x1, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise ParseError(f"raster extent {extent} is empty")
    cells.setflags(write=False)
    return _bounded("raster", cells, (x0, y0, x1, y1), raster=cells)


def constant_media(value: float, grid: GridSpec) -> MediaField:
    """a(x, y) = value everywhere, as a single raster cell."""
    return raster_media(np.full((1, 1), value), (0.0, 0.0, grid.lx, grid.ly))


def load_raster(path: str | Path) -> MediaField:
    """Read a raster media file.

    Format: a header `RASTER <cells_x> <cells_y> <x0> <y0> <x1> <y1>` followed
    by cells_x*cells_y whitespace-separated values, row-major, bottom row
    first.

    Raises:
        ParseError: On a malformed header or value count.
        NonPositiveMedia: If any cell is <= 0.
    """
    try:
        tokens = Path(path).read_text().split()
    except OSError as e:
        raise ParseError(f"cannot read raster file {path}: {e}") from e
    if len(tokens) < 7 or tokens[0] != "RASTER":
        raise ParseError(f"{path}: missing 'RASTER' header")
    try:
        cells_x, cells_y = int(tokens[1]), int(tokens[2])
        x0, y0, x1, y1 = (float(t) for t in tokens[3:7])
        values = np.array([float(t) for t in tokens[7:]])
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
    if cells_x < 1 or cells_y < 1 or values.size != cells_x * cells_y:
        raise ParseError(
            f"{path}: header declares {cells_x}x{cells_y} cells, "
            f"found {values.size} values"
        )
    media = raster_media(values.reshape(cells_y, cells_x), (x0, y0, x1, y1))
    logger.info(
        "Loaded raster media",
        path=str(path),
        cells=values.size,
        alpha=media.alpha,
        beta=media.beta,
    )
    return media
