"""Overlapping strip decomposition, trace exchange and global assembly.

Patches are vertical strips spanning the full height of the domain. All
geometry is kept in integer grid columns; lengths in x are column * h.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np

from rschwarz.core.errors import (
    ConfigError,
    InvalidPatch,
    MissingOwner,
    NonConformingGrid,
    NonConformingLayout,
    ParseError,
)
from rschwarz.core.grid import (
    GridFunction,
    GridSpec,
    Rect,
    cells_along,
    rect_boundary_nodes,
)
from rschwarz.core.local_solver import BoundaryTrace, InteriorField
from rschwarz.core.logging.logging import get_logger

logger = get_logger("decomp")

Side = Literal["left", "right"]


class EdgeTransfer(NamedTuple):
    """Trace positions of one patch edge and where their values come from."""

    owner: int
    side: Side
    positions: np.ndarray  # boundary positions in the receiving patch
    sources: np.ndarray  # rows of the owner's confined field


@dataclass(frozen=True, eq=False)
class Layout:
    """Strip cover of the grid: patch i spans columns [i*stride, i*stride + width]."""

    grid: GridSpec
    n_patches: int
    width_cols: int
    stride_cols: int
    patch_rects: tuple[Rect, ...]
    confine_rects: tuple[Rect, ...]
    neighbor_sets: tuple[frozenset[int], ...]
    edge_owner: dict[tuple[int, Side], int]

    @property
    def overlap_cols(self) -> int:
        return self.width_cols - self.stride_cols if self.n_patches > 1 else 0

    @property
    def overlap(self) -> float:
        return self.overlap_cols * self.grid.h

    @property
    def intervals(self) -> list[tuple[float, float]]:
        h = self.grid.h
        return [(r.i0 * h, r.i1 * h) for r in self.patch_rects]

    @property
    def interior_intervals(self) -> list[tuple[float, float]]:
        h = self.grid.h
        return [(r.i0 * h, r.i1 * h) for r in self.confine_rects]

    def check_patch(self, patch_id: int) -> int:
        if not 0 <= patch_id < self.n_patches:
            raise InvalidPatch(
                f"patch {patch_id} out of range, valid ids are 0..{self.n_patches - 1}"
            )
        return patch_id

    @cached_property
    def node_ids(self) -> tuple[np.ndarray, ...]:
        """Global node indices of every patch rectangle, row-major."""
        return tuple(
            self.grid.node_index(*rect.node_columns_rows())
            for rect in self.patch_rects
        )

    @cached_property
    def boundary_node_ids(self) -> tuple[np.ndarray, ...]:
        """Global node indices of every patch boundary, canonical order."""
        return tuple(
            self.grid.node_index(*rect_boundary_nodes(rect))
            for rect in self.patch_rects
        )

    @cached_property
    def pinned(self) -> tuple[np.ndarray, ...]:
        """Per patch, a mask of boundary positions lying on the domain boundary."""
        masks = []
        for rect in self.patch_rects:
            ii, jj = rect_boundary_nodes(rect)
            masks.append(self.grid.on_boundary(ii, jj))
        return tuple(masks)

    @cached_property
    def transfers(self) -> tuple[tuple[EdgeTransfer, ...], ...]:
        """Per receiving patch, the edges it reads from its neighbors.

        Raises:
            MissingOwner: If an edge inside the domain has no owning neighbor.
        """
        result = []
        for j, rect in enumerate(self.patch_rects):
            ii, jj = rect_boundary_nodes(rect)
            free = ~self.pinned[j]
            edges = []
            for side, column in (("left", rect.i0), ("right", rect.i1)):
                positions = np.flatnonzero(free & (ii == column))
                if positions.size == 0:
                    continue
                owner = self.edge_owner.get((j, side))
                if owner is None:
                    raise MissingOwner(
                        f"{side} edge of patch {j} (column {column}) has no owner"
                    )
                source_rect = self.confine_rects[owner]
                if not source_rect.i0 <= column <= source_rect.i1:
                    raise MissingOwner(
                        f"patch {owner} does not contain the {side} edge of patch {j}"
                    )
                sources = source_rect.local_index(ii[positions], jj[positions])
                edges.append(EdgeTransfer(owner, side, positions, sources))
            result.append(tuple(edges))
        return tuple(result)

    def outgoing_rows(self, patch_id: int) -> np.ndarray:
        """Rows of the patch's confined field that its neighbors read."""
        rows = [
            edge.sources
            for edges in self.transfers
            for edge in edges
            if edge.owner == patch_id
        ]
        if not rows:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate(rows))

    def fingerprint_payload(self) -> bytes:
        return (
            f"{self.n_patches}|{self.width_cols}|{self.stride_cols}|"
            f"{self.grid.nx}|{self.grid.ny}"
        ).encode()


def _columns(length: float, h: float, what: str) -> int:
    try:
        return cells_along(length, h, what)
    except NonConformingGrid as e:
        raise NonConformingLayout(str(e)) from e


def build_layout(
    gridspec: GridSpec,
    n_patches: int,
    patch_width: float,
    stride: float | None = None,
) -> Layout:
    """Build the strip cover of the grid.

    Args:
        gridspec: The global grid.
        n_patches: Number of strips.
        patch_width: Strip width, a multiple of h.
        stride: Offset between consecutive strips, a multiple of h. Ignored
            for a single strip.

    Raises:
        NonConformingLayout: If the strips are misaligned, do not cover the
            domain exactly, do not overlap, or overlap beyond their direct
            neighbors.
    """
    if n_patches < 1:
        raise NonConformingLayout(f"need at least one patch, got {n_patches}")
    last = gridspec.nx - 1
    width = _columns(patch_width, gridspec.h, "patch_width")
    if n_patches == 1:
        if width != last:
            raise NonConformingLayout(
                f"a single patch must span the domain: width {patch_width} != lx {gridspec.lx}"
            )
        step = width
    else:
        if stride is None:
            raise NonConformingLayout("stride is required for more than one patch")
        step = _columns(stride, gridspec.h, "stride")
        if (n_patches - 1) * step + width != last:
            raise NonConformingLayout(
                f"{n_patches - 1}*{stride} + {patch_width} does not equal lx={gridspec.lx}"
            )
        if not 0 < step < width:
            raise NonConformingLayout(
                f"stride {stride} must be positive and below patch_width {patch_width}"
            )
        if 2 * step <= width:
            raise NonConformingLayout(
                f"patches {patch_width} wide with stride {stride} overlap non-neighbors"
            )
    if width < 2:
        raise NonConformingLayout(f"patch_width {patch_width} leaves no interior nodes")

    overlap = width - step if n_patches > 1 else 0
    top = gridspec.ny - 1
    patch_rects, confine_rects, neighbor_sets = [], [], []
    edge_owner: dict[tuple[int, Side], int] = {}
    for i in range(n_patches):
        lo, hi = i * step, i * step + width
        neighbors = frozenset(n for n in (i - 1, i + 1) if 0 <= n < n_patches)
        # both overlap bands are cut, also at the domain ends
        inner_lo, inner_hi = lo + overlap, hi - overlap
        patch_rects.append(Rect(lo, hi, 0, top))
        confine_rects.append(Rect(inner_lo, inner_hi, 0, top))
        neighbor_sets.append(neighbors)
        if i - 1 in neighbors:
            edge_owner[(i, "left")] = i - 1
        if i + 1 in neighbors:
            edge_owner[(i, "right")] = i + 1

    layout = Layout(
        grid=gridspec,
        n_patches=n_patches,
        width_cols=width,
        stride_cols=step,
        patch_rects=tuple(patch_rects),
        confine_rects=tuple(confine_rects),
        neighbor_sets=tuple(neighbor_sets),
        edge_owner=edge_owner,
    )
    logger.debug(
        "Built layout",
        patches=n_patches,
        width_cols=width,
        stride_cols=step,
        overlap_cols=overlap,
    )
    return layout


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Per-patch weights sampled over each patch rectangle, row-major."""

    layout: Layout
    weights: tuple[np.ndarray, ...]

    def global_weights(self) -> np.ndarray:
        """(n_patches, n_nodes) weights, zero outside each patch."""
        out = np.zeros((self.layout.n_patches, self.layout.grid.n_nodes))
        for i, (ids, w) in enumerate(zip(self.layout.node_ids, self.weights)):
            out[i, ids] = w
        return out


def build_pou(layout: Layout, gridspec: GridSpec | None = None) -> PartitionOfUnity:
    """Piecewise-linear partition of unity in x.

    Each weight ramps from 0 to 1 across an overlap band shared with a
    neighbor and is 1 elsewhere on its patch. Both sharers of a band use the
    same ramp parameter t, as t and 1 - t.
    """
    if gridspec is not None and gridspec != layout.grid:
        raise ValueError(f"layout was built for {layout.grid}, not {gridspec}")
    ov = layout.overlap_cols
    weights = []
    for i, rect in enumerate(layout.patch_rects):
        cols = np.arange(rect.i0, rect.i1 + 1)
        eta = np.ones(cols.size)
        if i - 1 in layout.neighbor_sets[i]:
            band = cols <= rect.i0 + ov
            eta[band] = (cols[band] - rect.i0) / ov
        if i + 1 in layout.neighbor_sets[i]:
            start = rect.i1 - ov
            band = cols >= start
            eta[band] = 1.0 - (cols[band] - start) / ov
        weights.append(np.tile(eta, rect.ny))
    return PartitionOfUnity(layout=layout, weights=tuple(weights))


BoundaryKind = Literal["builtin-sine", "from-file", "affine", "function"]


@dataclass(frozen=True, eq=False)
class DirichletData:
    """Global Dirichlet datum b, stored over all nodes; only ∂Ω entries are used."""

    kind: BoundaryKind
    grid: GridSpec
    values: np.ndarray

    def on_boundary(self) -> np.ndarray:
        """Values at `grid.boundary_node_ids()`."""
        return self.values[self.grid.boundary_node_ids()]


def sine_value(x, y) -> np.ndarray:
    """The benchmark boundary datum."""
    return np.sin(np.pi / 3.0 * (x - 1.0 / 3.0)) * np.sin(3.0 * np.pi * (y - 0.25))


def function_boundary(
    gridspec: GridSpec,
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    kind: BoundaryKind = "function",
) -> DirichletData:
    """Sample `fn(x, y)` at the domain boundary nodes."""
    ids = gridspec.boundary_node_ids()
    xs, ys = gridspec.x_coords(), gridspec.y_coords()
    sampled = np.broadcast_to(
        np.asarray(fn(xs[ids % gridspec.nx], ys[ids // gridspec.nx]), dtype=float),
        ids.shape,
    )
    if not np.all(np.isfinite(sampled)):
        raise ConfigError(f"boundary function {kind} is not finite on the boundary")
    values = np.zeros(gridspec.n_nodes)
    values[ids] = sampled
    return DirichletData(kind=kind, grid=gridspec, values=values)


def sine_boundary(gridspec: GridSpec) -> DirichletData:
    return function_boundary(gridspec, sine_value, kind="builtin-sine")


def affine_boundary(
    gridspec: GridSpec, c0: float, cx: float = 0.0, cy: float = 0.0
) -> DirichletData:
    """b = c0 + cx*x + cy*y, reproduced exactly by the discrete solvers for constant media."""
    return function_boundary(
        gridspec, lambda x, y: c0 + cx * x + cy * y, kind="affine"
    )


def load_boundary(path: str | Path, gridspec: GridSpec) -> DirichletData:
    """Read a `BND <n>` file of global-node-index/value pairs.

    Raises:
        ParseError: On a malformed file, or if the pairs do not cover every
            domain boundary node exactly once.
    """
    try:
        tokens = Path(path).read_text().split()
    except OSError as e:
        raise ParseError(f"cannot read boundary file {path}: {e}") from e
    if len(tokens) < 2 or tokens[0] != "BND":
        raise ParseError(f"{path}: missing 'BND <n>' header")
    try:
        count = int(tokens[1])
        pairs = tokens[2:]
        ids = np.array([int(t) for t in pairs[0::2]])
        vals = np.array([float(t) for t in pairs[1::2]])
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
    if len(pairs) != 2 * count or ids.size != count:
        raise ParseError(f"{path}: header declares {count} pairs, found {len(pairs) / 2:g}")

    expected = gridspec.boundary_node_ids()
    if np.unique(ids).size != ids.size:
        raise ParseError(f"{path}: duplicate node indices")
    outside = np.setdiff1d(ids, expected)
    if outside.size:
        raise ParseError(f"{path}: node {outside[0]} is not on the domain boundary")
    missing = np.setdiff1d(expected, ids)
    if missing.size:
        raise ParseError(
            f"{path}: {missing.size} boundary nodes missing, first is {missing[0]}"
        )
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"{path}: non-finite boundary values")
    values = np.zeros(gridspec.n_nodes)
    values[ids] = vals
    logger.info("Loaded boundary data", path=str(path), nodes=count)
    return DirichletData(kind="from-file", grid=gridspec, values=values)


def write_boundary(b: DirichletData, path: str | Path) -> None:
    """Write `b` in the `BND` format read by `load_boundary`."""
    ids = b.grid.boundary_node_ids()
    lines = [f"BND {ids.size}"]
    lines.extend(f"{i} {v!r}" for i, v in zip(ids.tolist(), b.values[ids].tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(eq=False)
class BoundaryState:
    """The Schwarz unknown: one boundary trace per patch at iteration t."""

    traces: list[BoundaryTrace]
    iteration: int = 0

    def stacked(self) -> np.ndarray:
        return np.concatenate([t.values for t in self.traces])


def init_state(layout: Layout, b: DirichletData) -> BoundaryState:
    """b on domain-boundary nodes of each patch boundary, zero elsewhere."""
    traces = []
    for i, ids in enumerate(layout.boundary_node_ids):
        values = np.zeros(ids.size)
        pinned = layout.pinned[i]
        values[pinned] = b.values[ids[pinned]]
        traces.append(BoundaryTrace(i, values))
    return BoundaryState(traces=traces, iteration=0)


def restrict_state(layout: Layout, u: GridFunction, iteration: int = 0) -> BoundaryState:
    """Traces of a global field on every patch boundary."""
    if u.rect != layout.grid.full_rect:
        raise ValueError(f"field over {u.rect} is not a global field")
    traces = [
        BoundaryTrace(i, u.values[ids])
        for i, ids in enumerate(layout.boundary_node_ids)
    ]
    return BoundaryState(traces=traces, iteration=iteration)


def exchange(
    layout: Layout,
    interior_fields: Sequence[InteriorField],
    state: BoundaryState,
) -> BoundaryState:
    """Jacobi trace update: every free edge node reads its owner's confined field.

    Raises:
        MissingOwner: If an edge inside the domain has no owner.
    """
    if len(interior_fields) != layout.n_patches:
        raise ValueError(
            f"expected {layout.n_patches} interior fields, got {len(interior_fields)}"
        )
    traces = []
    for j, edges in enumerate(layout.transfers):
        values = state.traces[j].values.copy()
        for edge in edges:
            values[edge.positions] = interior_fields[edge.owner].values[edge.sources]
        traces.append(BoundaryTrace(j, values))
    return BoundaryState(traces=traces, iteration=state.iteration + 1)


def assemble_global(
    layout: Layout,
    pou: PartitionOfUnity,
    patch_fields: Sequence[GridFunction],
) -> GridFunction:
    """u = sum_i eta_i u_i over the whole grid."""
    if len(patch_fields) != layout.n_patches:
        raise ValueError(
            f"expected {layout.n_patches} patch fields, got {len(patch_fields)}"
        )
    out = np.zeros(layout.grid.n_nodes)
    for ids, weights, u in zip(layout.node_ids, pou.weights, patch_fields):
        out[ids] += weights * u.values
    return GridFunction(layout.grid.full_rect, out)
