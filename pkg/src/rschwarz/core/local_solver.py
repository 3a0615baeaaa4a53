"""Local elliptic problems on one patch.

The patch stiffness is the 5-point divergence-form stencil with edge-midpoint
coefficients, `L = sum_e a_e / h^2 (e_p - e_q)(e_p - e_q)^T` over the edges
inside the patch. Its interior rows split into `A` (interior x interior, SPD)
and `B` (interior x boundary). With this sign convention `A` discretizes
`-div(a grad .)`:

- Dirichlet solve: `A u_int = -B f`, `u = f` on the boundary.
- Sourced solve:   `A v_int = R^T g`, `v = 0` on the boundary.
- Confined map S~: boundary data -> solution values on the confined rectangle.
- Adjoint S~^T:    `-B^T A^{-1} R_int^T g + R_bnd^T g`, the exact transpose.
  The second term is present only when the confined rectangle touches the
  patch boundary (it does on the top and bottom edges of a strip).
"""

import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.sparse as sp
from opentelemetry import trace
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from rschwarz.core.errors import FactorizationFailure
from rschwarz.core.grid import (
    GridFunction,
    GridSpec,
    MediaField,
    Rect,
    edge_coefficient_fields,
    rect_boundary_nodes,
)
from rschwarz.core.logging.logging import get_logger

if TYPE_CHECKING:
    from rschwarz.core.decomp import Layout

logger = get_logger("local_solver")
tracer = trace.get_tracer(__name__)


class BandedCholesky:
    """Cached banded Cholesky factor of an SPD block on a node rectangle.

    The unknowns are the nodes of a `rows` x `cols` block in row-major order.
    If the rows are longer than the columns the block is renumbered
    column-major first, so the bandwidth is min(rows, cols).
    """

    def __init__(self, matrix: sp.spmatrix, cols: int, rows: int):
        n = matrix.shape[0]
        a = sp.csr_matrix(matrix)
        self.order = None
        if cols > rows:
            self.order = np.arange(n).reshape(rows, cols).T.ravel()
            a = a[self.order][:, self.order]
        self.bandwidth = min(min(rows, cols), max(n - 1, 0))
        upper = sp.triu(a).tocoo()
        ab = np.zeros((self.bandwidth + 1, n))
        ab[self.bandwidth + upper.row - upper.col, upper.col] = upper.data
        try:
            self._factor = cholesky_banded(ab, lower=False, check_finite=False)
        except LinAlgError as e:
            raise FactorizationFailure(
                f"banded Cholesky failed on a {n}x{n} block: {e}"
            ) from e
        self.n = n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one right-hand side (n,) or a block (n, k)."""
        if self.order is not None:
            rhs = rhs[self.order]
        x = cho_solve_banded((self._factor, False), rhs, check_finite=False)
        if self.order is None:
            return x
        out = np.empty_like(x)
        out[self.order] = x
        return out


@dataclass(eq=False)
class BoundaryTrace:
    """Values on a patch boundary, aligned with `PatchOperator.boundary_idx`."""

    patch_id: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass(eq=False)
class InteriorField:
    """Values on the confined rectangle, aligned with `PatchOperator.confine_idx`."""

    patch_id: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass(eq=False)
class PatchOperator:
    """Assembled discrete elliptic operator of one patch.

    Index arrays hold row-major positions of nodes inside `rect`. The operator
    is read-only after assembly; the solve counter is the only mutable state
    and is guarded by a lock.
    """

    patch_id: int
    rect: Rect
    confine_rect: Rect
    A: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    interior_idx: np.ndarray = field(repr=False)
    boundary_idx: np.ndarray = field(repr=False)
    confine_idx: np.ndarray = field(repr=False)
    factorization: BandedCholesky = field(repr=False)

    def __post_init__(self):
        n_nodes = self.rect.size
        dof_of_node = np.full(n_nodes, -1)
        dof_of_node[self.interior_idx] = np.arange(self.interior_idx.size)
        pos_of_node = np.full(n_nodes, -1)
        pos_of_node[self.boundary_idx] = np.arange(self.boundary_idx.size)
        conf_dofs = dof_of_node[self.confine_idx]
        is_interior = conf_dofs >= 0
        self._conf_int_rows = np.flatnonzero(is_interior)
        self._conf_int_dofs = conf_dofs[is_interior]
        self._conf_bnd_rows = np.flatnonzero(~is_interior)
        self._conf_bnd_pos = pos_of_node[self.confine_idx[~is_interior]]
        self._lock = threading.Lock()
        self._solves = 0

    @property
    def n_nodes(self) -> int:
        return self.rect.size

    @property
    def n_boundary(self) -> int:
        return self.boundary_idx.size

    @property
    def n_interior(self) -> int:
        return self.interior_idx.size

    @property
    def n_confined(self) -> int:
        return self.confine_idx.size

    @property
    def solve_count(self) -> int:
        """Number of right-hand sides solved with the factorization so far."""
        return self._solves

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        with self._lock:
            self._solves += 1 if rhs.ndim == 1 else rhs.shape[1]
        return self.factorization.solve(rhs)

    def dirichlet_block(self, boundary_values: np.ndarray) -> np.ndarray:
        """Full patch fields for boundary data columns (n_boundary, k)."""
        u_int = self._solve(-(self.B @ boundary_values))
        fields = np.empty((self.n_nodes,) + boundary_values.shape[1:])
        fields[self.boundary_idx] = boundary_values
        fields[self.interior_idx] = u_int
        return fields

    def apply_confined(self, boundary_values: np.ndarray) -> np.ndarray:
        """The confined map S~ applied to columns (n_boundary, k)."""
        u_int = self._solve(-(self.B @ boundary_values))
        out = np.empty((self.n_confined,) + boundary_values.shape[1:])
        out[self._conf_int_rows] = u_int[self._conf_int_dofs]
        out[self._conf_bnd_rows] = boundary_values[self._conf_bnd_pos]
        return out

    def _scatter_source(self, confined_values: np.ndarray) -> np.ndarray:
        rhs = np.zeros((self.n_interior,) + confined_values.shape[1:])
        rhs[self._conf_int_dofs] = confined_values[self._conf_int_rows]
        return rhs

    def sourced_block(self, confined_values: np.ndarray) -> np.ndarray:
        """Full patch fields v with zero boundary and A v_int = R^T g."""
        v_int = self._solve(self._scatter_source(confined_values))
        fields = np.zeros((self.n_nodes,) + confined_values.shape[1:])
        fields[self.interior_idx] = v_int
        return fields

    def adjoint_confined(self, confined_values: np.ndarray) -> np.ndarray:
        """The transpose S~^T applied to columns (n_confined, k)."""
        v_int = self._solve(self._scatter_source(confined_values))
        out = -(self.B.T @ v_int)
        out[self._conf_bnd_pos] += confined_values[self._conf_bnd_rows]
        return out


def assemble(
    gridspec: GridSpec,
    media: MediaField,
    patch_rect: Rect,
    confine_rect: Rect,
    patch_id: int = 0,
    edge_fields: tuple[np.ndarray, np.ndarray] | None = None,
) -> PatchOperator:
    """Assemble and factor the stiffness blocks of one patch.

    Args:
        gridspec: The global grid.
        media: Coefficient field.
        patch_rect: Node rectangle of the patch.
        confine_rect: Node rectangle of the confined region, inside the patch.
        patch_id: Index of the patch in its layout.
        edge_fields: Precomputed `edge_coefficient_fields(media, gridspec)`.

    Raises:
        ValueError: If the rectangles are not nested inside the grid.
        FactorizationFailure: If the interior block is not SPD.
    """
    patch_rect = Rect(*patch_rect)
    confine_rect = Rect(*confine_rect)
    if not gridspec.full_rect.contains(patch_rect):
        raise ValueError(f"patch {patch_rect} exceeds grid {gridspec.full_rect}")
    if not patch_rect.contains(confine_rect):
        raise ValueError(f"confine {confine_rect} not inside patch {patch_rect}")
    if patch_rect.nx < 3 or patch_rect.ny < 3:
        raise ValueError(f"patch {patch_rect} has no interior nodes")

    with tracer.start_as_current_span("assemble_patch") as span:
        span.set_attribute("patch_id", patch_id)
        if edge_fields is None:
            edge_fields = edge_coefficient_fields(media, gridspec)
        horizontal, vertical = edge_fields
        i0, i1, j0, j1 = patch_rect
        inv_h2 = 1.0 / gridspec.h**2

        hj, hi = np.meshgrid(
            np.arange(j0, j1 + 1), np.arange(i0, i1), indexing="ij"
        )
        vj, vi = np.meshgrid(
            np.arange(j0, j1), np.arange(i0, i1 + 1), indexing="ij"
        )
        p = np.concatenate(
            [patch_rect.local_index(hi, hj).ravel(), patch_rect.local_index(vi, vj).ravel()]
        )
        q = np.concatenate(
            [
                patch_rect.local_index(hi + 1, hj).ravel(),
                patch_rect.local_index(vi, vj + 1).ravel(),
            ]
        )
        c = inv_h2 * np.concatenate(
            [horizontal[hj, hi].ravel(), vertical[vj, vi].ravel()]
        )
        n_nodes = patch_rect.size
        stiffness = sp.coo_matrix(
            (
                np.concatenate([c, c, -c, -c]),
                (np.concatenate([p, q, p, q]), np.concatenate([p, q, q, p])),
            ),
            shape=(n_nodes, n_nodes),
        ).tocsr()

        ii, jj = patch_rect.node_columns_rows()
        on_edge = (ii == i0) | (ii == i1) | (jj == j0) | (jj == j1)
        interior_idx = np.flatnonzero(~on_edge)
        boundary_idx = patch_rect.local_index(*rect_boundary_nodes(patch_rect))
        ci, cj = confine_rect.node_columns_rows()
        confine_idx = patch_rect.local_index(ci, cj)

        rows = stiffness[interior_idx]
        A = rows[:, interior_idx].tocsr()
        B = rows[:, boundary_idx].tocsr()
        factorization = BandedCholesky(A, cols=patch_rect.nx - 2, rows=patch_rect.ny - 2)
        span.set_attribute("interior_dofs", int(interior_idx.size))
        span.set_attribute("bandwidth", factorization.bandwidth)

    logger.debug(
        "Assembled patch",
        patch_id=patch_id,
        interior=int(interior_idx.size),
        boundary=int(boundary_idx.size),
        confined=int(confine_idx.size),
    )
    return PatchOperator(
        patch_id=patch_id,
        rect=patch_rect,
        confine_rect=confine_rect,
        A=A,
        B=B,
        interior_idx=interior_idx,
        boundary_idx=boundary_idx,
        confine_idx=confine_idx,
        factorization=factorization,
    )


def _check_aligned(values: np.ndarray, expected: int, what: str) -> None:
    if values.shape[0] != expected:
        raise ValueError(f"{what} has {values.shape[0]} values, expected {expected}")


def solve_dirichlet(op: PatchOperator, f: BoundaryTrace) -> GridFunction:
    """Discrete local solution with boundary data `f` (the map S_i)."""
    _check_aligned(f.values, op.n_boundary, "boundary trace")
    return GridFunction(op.rect, op.dirichlet_block(f.values))


def confine(op: PatchOperator, u: GridFunction) -> InteriorField:
    """Gather a full patch field at the confined nodes."""
    if u.rect != op.rect:
        raise ValueError(f"field over {u.rect} does not cover patch {op.rect}")
    return InteriorField(op.patch_id, u.values[op.confine_idx])


def solve_sourced(op: PatchOperator, g: InteriorField) -> GridFunction:
    """Zero-Dirichlet solve with the zero extension of `g` as source."""
    _check_aligned(g.values, op.n_confined, "interior field")
    return GridFunction(op.rect, op.sourced_block(g.values))


def adjoint_apply(op: PatchOperator, g: InteriorField) -> BoundaryTrace:
    """Transpose of the confined map: the discrete boundary flux of the sourced solve."""
    _check_aligned(g.values, op.n_confined, "interior field")
    return BoundaryTrace(op.patch_id, op.adjoint_confined(g.values))


OperatorKind = Literal["S", "S_confined", "A_map"]


def materialize(
    op: PatchOperator,
    which: OperatorKind,
    layout: "Layout | None" = None,
) -> np.ndarray:
    """Dense matrix of a patch operator, one solve per boundary node.

    Args:
        op: The patch operator.
        which: "S" (full patch field), "S_confined" (rows at the confined
            nodes) or "A_map" (rows at the neighbor-edge nodes this patch
            exports, which needs `layout`).
        layout: Layout providing the exported rows for "A_map".
    """
    identity = np.eye(op.n_boundary)
    if which == "S":
        return op.dirichlet_block(identity)
    confined = op.apply_confined(identity)
    if which == "S_confined":
        return confined
    if which == "A_map":
        if layout is None:
            raise ValueError("materializing A_map needs the layout")
        return confined[layout.outgoing_rows(op.patch_id)]
    raise ValueError(f"unknown operator {which!r}")
