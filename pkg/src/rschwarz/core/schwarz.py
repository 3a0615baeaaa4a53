"""Vanilla and reduced Schwarz drivers, the global oracle and error tracking."""

import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal, NamedTuple

import numpy as np
import scipy.sparse as sp
from opentelemetry import trace

from rschwarz.core.context.context import SchwarzContext, fingerprint_diff
from rschwarz.core.decomp import (
    BoundaryState,
    DirichletData,
    assemble_global,
    exchange,
    init_state,
)
from rschwarz.core.errors import FingerprintMismatch, ZeroReference
from rschwarz.core.execution.patch_executor import map_patches
from rschwarz.core.grid import GridFunction, GridSpec, MediaField
from rschwarz.core.local_solver import (
    BoundaryTrace,
    InteriorField,
    assemble,
    materialize,
    solve_dirichlet,
)
from rschwarz.core.logging.logging import get_logger
from rschwarz.core.logging.trace_and_logged import traced_and_logged
from rschwarz.core.lowrank import RSVDConfig, SVDTriple, dense_svd, rsvd_operator
from rschwarz.core.util.serializable import Serializable

logger = get_logger("schwarz")
tracer = trace.get_tracer(__name__)

REFERENCE_ITERATIONS = 100
EARLY_EXIT_TOL = 1e-14

Method = Literal["vanilla", "reduced", "global"]


@dataclass(eq=False)
class ReducedMap:
    """Rank-k factors of one patch's confined solution map."""

    patch_id: int
    triple: SVDTriple
    k: int
    seed: int
    grid_fingerprint: bytes
    seconds: float = 0.0


@dataclass(eq=False)
class RunResult(Serializable):
    """Outcome of one solver run.

    `history[t]` is the relative error after t iterations (t = 0..iterations),
    present when a reference was supplied; `history_global` is the same
    against the direct global solution. `successive[t-1]` is the relative
    change of the stacked traces in iteration t.
    """

    method: Method
    iterations: int
    final: GridFunction
    history: list[float] | None = None
    history_global: list[float] | None = None
    successive: list[float] = field(default_factory=list)
    offline_seconds: float = 0.0
    online_seconds: float = 0.0
    online_exact_solves: int = 0
    k: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "final": self.final.to_dict(),
            "history": self.history,
            "history_global": self.history_global,
            "successive": self.successive,
            "offline_seconds": self.offline_seconds,
            "online_seconds": self.online_seconds,
            "online_exact_solves": self.online_exact_solves,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunResult":
        return cls(
            method=data["method"],
            iterations=data["iterations"],
            final=GridFunction.from_dict(data["final"]),
            history=data.get("history"),
            history_global=data.get("history_global"),
            successive=list(data.get("successive") or []),
            offline_seconds=data.get("offline_seconds", 0.0),
            online_seconds=data.get("online_seconds", 0.0),
            online_exact_solves=data.get("online_exact_solves", 0),
            k=data.get("k"),
        )


def relative_error(u: GridFunction, u_ref: GridFunction) -> float:
    """||u - u_ref||_2 / ||u_ref||_2 over all nodes.

    Raises:
        ZeroReference: If the reference is identically zero.
    """
    if u.rect != u_ref.rect:
        raise ValueError(f"fields live on different rectangles {u.rect} and {u_ref.rect}")
    norm = np.linalg.norm(u_ref.values)
    if norm == 0.0:
        raise ZeroReference("relative error against a zero reference")
    return float(np.linalg.norm(u.values - u_ref.values) / norm)


def _relative_change(diff: float, norm: float) -> float:
    if norm == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / norm)


def _successive(new: np.ndarray, old: np.ndarray) -> float:
    return _relative_change(np.linalg.norm(new - old), np.linalg.norm(new))


def _exact_fields(ctx: SchwarzContext, traces: Sequence[BoundaryTrace]) -> list[GridFunction]:
    return map_patches(
        lambda i: solve_dirichlet(ctx.patches[i], traces[i]),
        range(ctx.n_patches),
        ctx.max_workers,
    )


class _ErrorTrack:
    """Per-iteration relative errors against the optional references."""

    def __init__(self, reference: GridFunction | None, global_reference: GridFunction | None):
        self.references = (reference, global_reference)
        self.histories: tuple[list[float] | None, ...] = tuple(
            [] if r is not None else None for r in self.references
        )

    @property
    def active(self) -> bool:
        return any(r is not None for r in self.references)

    def record(self, u: GridFunction) -> None:
        for ref, history in zip(self.references, self.histories):
            if history is not None:
                history.append(relative_error(u, ref))


@traced_and_logged
def solve_global(gridspec: GridSpec, media: MediaField, b: DirichletData) -> GridFunction:
    """Direct banded solve of the discrete problem on the whole domain."""
    full = gridspec.full_rect
    op = assemble(gridspec, media, full, full)
    # local indices of the full rectangle are the global node indices
    return solve_dirichlet(op, BoundaryTrace(0, b.values[op.boundary_idx]))


@traced_and_logged
def run_vanilla(
    ctx: SchwarzContext,
    T: int,
    reference: GridFunction | None = None,
    early_exit: bool = False,
    global_reference: GridFunction | None = None,
) -> RunResult:
    """Jacobi Schwarz iteration with exact local solves, then POU assembly.

    Args:
        ctx: Assembled patches, layout and boundary data.
        T: Number of iterations.
        reference: Field to measure the per-iteration relative error against.
        early_exit: Stop once the successive difference drops below 1e-14.
        global_reference: Second field, usually the direct global solution,
            tracked into `history_global`.
    """
    if T < 0:
        raise ValueError(f"iteration count must be nonnegative, got {T}")
    layout = ctx.layout
    state = init_state(layout, ctx.boundary)
    errors = _ErrorTrack(reference, global_reference)
    successive: list[float] = []

    start = time.perf_counter()
    with tracer.start_as_current_span("vanilla_loop") as span:
        span.set_attribute("T", T)
        for _ in range(T):
            fields = _exact_fields(ctx, state.traces)
            if errors.active:
                errors.record(assemble_global(layout, ctx.pou, fields))
            interior = [
                InteriorField(i, u.values[op.confine_idx])
                for i, (op, u) in enumerate(zip(ctx.patches, fields))
            ]
            new_state = exchange(layout, interior, state)
            successive.append(_successive(new_state.stacked(), state.stacked()))
            state = new_state
            if early_exit and successive[-1] < EARLY_EXIT_TOL:
                logger.info("Early exit", iteration=state.iteration)
                break
        final = assemble_global(layout, ctx.pou, _exact_fields(ctx, state.traces))
    online = time.perf_counter() - start
    errors.record(final)

    return RunResult(
        method="vanilla",
        iterations=state.iteration,
        final=final,
        history=errors.histories[0],
        history_global=errors.histories[1],
        successive=successive,
        offline_seconds=ctx.assembly_seconds,
        online_seconds=online,
    )


def reference_solution(ctx: SchwarzContext, T: int = REFERENCE_ITERATIONS) -> GridFunction:
    """Vanilla Schwarz with T iterations (100 by default), final field only."""
    return run_vanilla(ctx, T).final


@traced_and_logged
def offline_compress(ctx: SchwarzContext, k: int, p: int = 10, seed: int = 0) -> list[ReducedMap]:
    """Rank-k randomized SVD of every patch's confined map.

    Patch i is sampled with seed `seed ^ i`.

    Raises:
        AdjointInconsistent: If a patch adjoint fails the probe check.
    """

    def compress(i: int) -> ReducedMap:
        op = ctx.patches[i]
        cfg = RSVDConfig(k=k, p=p, seed=seed ^ i)
        start = time.perf_counter()
        triple = rsvd_operator(
            op.apply_confined,
            op.adjoint_confined,
            op.n_boundary,
            op.n_confined,
            cfg,
            patch_id=i,
        )
        return ReducedMap(
            patch_id=i,
            triple=triple,
            k=k,
            seed=cfg.seed,
            grid_fingerprint=ctx.fingerprint,
            seconds=time.perf_counter() - start,
        )

    with tracer.start_as_current_span("offline_compress") as span:
        span.set_attribute("k", k)
        span.set_attribute("p", p)
        maps = map_patches(compress, range(ctx.n_patches), ctx.max_workers)
    logger.info(
        "Compressed patch maps",
        patches=len(maps),
        k=k,
        p=p,
        seconds=round(sum(m.seconds for m in maps), 4),
    )
    return maps


def check_maps(ctx: SchwarzContext, maps: Sequence[ReducedMap]) -> None:
    """Raise FingerprintMismatch unless `maps` were built for this context."""
    if len(maps) != ctx.n_patches:
        raise FingerprintMismatch(
            f"{len(maps)} maps for a layout of {ctx.n_patches} patches"
        )
    for i, (op, m) in enumerate(zip(ctx.patches, maps)):
        if m.grid_fingerprint != ctx.fingerprint:
            differing = ", ".join(fingerprint_diff(ctx.fingerprint, m.grid_fingerprint))
            raise FingerprintMismatch(
                f"map of patch {i} was built for a different configuration "
                f"(differs in: {differing})"
            )
        if m.patch_id != i or m.triple.shape != (op.n_confined, op.n_boundary):
            raise FingerprintMismatch(
                f"map {i} has patch id {m.patch_id} and shape {m.triple.shape}, "
                f"expected ({op.n_confined}, {op.n_boundary})"
            )


class _ReducedUpdate(NamedTuple):
    free: np.ndarray
    fixed: np.ndarray
    K: sp.csr_matrix
    K_fixed: sp.csr_matrix


def _reduced_update(ctx: SchwarzContext, maps: Sequence[ReducedMap]) -> _ReducedUpdate:
    """One reduced iteration on the free trace positions, g <- K g + K_fixed f_fixed.

    The full update is f <- keep * f + W (V^T f): V^T is block diagonal over
    patches and W holds the exchanged rows of U S, scattered to the receiving
    trace positions. Only positions read from a neighbor change, so W V^T is
    formed once and split into its free and fixed columns.
    """
    layout = ctx.layout
    trace_offsets = np.concatenate(([0], np.cumsum([op.n_boundary for op in ctx.patches])))
    rank_offsets = np.concatenate(([0], np.cumsum([m.triple.rank for m in maps])))
    vt = sp.block_diag([m.triple.V.T for m in maps], format="csr")

    rows, cols, data, free = [], [], [], []
    for j, edges in enumerate(layout.transfers):
        for edge in edges:
            triple = maps[edge.owner].triple
            block = triple.U[edge.sources] * triple.S
            r, c = np.meshgrid(
                trace_offsets[j] + edge.positions,
                rank_offsets[edge.owner] + np.arange(triple.rank),
                indexing="ij",
            )
            rows.append(r.ravel())
            cols.append(c.ravel())
            data.append(block.ravel())
            free.append(trace_offsets[j] + edge.positions)

    n_traces = int(trace_offsets[-1])
    free_idx = np.sort(np.concatenate(free)) if free else np.zeros(0, dtype=int)
    fixed_idx = np.setdiff1d(np.arange(n_traces), free_idx)
    if free_idx.size == 0:
        return _ReducedUpdate(
            free_idx,
            fixed_idx,
            sp.csr_matrix((0, 0)),
            sp.csr_matrix((0, fixed_idx.size)),
        )
    w = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_traces, int(rank_offsets[-1])),
    ).tocsr()
    update = (w @ vt).tocsr()[free_idx]
    return _ReducedUpdate(
        free_idx,
        fixed_idx,
        update[:, free_idx].tocsr(),
        update[:, fixed_idx].tocsr(),
    )


@traced_and_logged
def run_reduced(
    ctx: SchwarzContext,
    maps: Sequence[ReducedMap],
    T: int,
    reference: GridFunction | None = None,
    early_exit: bool = False,
    global_reference: GridFunction | None = None,
) -> RunResult:
    """Schwarz iteration with every local solve replaced by its rank-k map.

    Only the rows of U that neighbors read are ever applied. After the loop
    one exact solve per patch produces the fields for POU assembly. With a
    reference, the traces of every iteration are kept and turned into errors
    after the clock stops; those exact solves are neither timed nor counted
    as online solves. Forming the update is boundary-independent and counted
    as offline time.

    Raises:
        FingerprintMismatch: If the maps belong to another configuration.
    """
    if T < 0:
        raise ValueError(f"iteration count must be nonnegative, got {T}")
    check_maps(ctx, maps)
    layout = ctx.layout
    f0 = init_state(layout, ctx.boundary).stacked()
    errors = _ErrorTrack(reference, global_reference)
    snapshots: list[np.ndarray] = []
    successive: list[float] = []
    setup_start = time.perf_counter()
    update = _reduced_update(ctx, maps)
    setup = time.perf_counter() - setup_start

    def traces_of(g: np.ndarray) -> list[BoundaryTrace]:
        f = f0.copy()
        f[update.free] = g
        return state_of(ctx, f).traces

    solves_before = ctx.solve_count()
    start = time.perf_counter()
    with tracer.start_as_current_span("reduced_loop") as span:
        span.set_attribute("T", T)
        g = f0[update.free]
        fixed = f0[update.fixed]
        d = update.K_fixed @ fixed
        fixed_sq = float(fixed @ fixed)
        iterations = 0
        for _ in range(T):
            if errors.active:
                snapshots.append(g)
            new = update.K @ g + d
            successive.append(
                _relative_change(
                    np.linalg.norm(new - g), np.sqrt(float(new @ new) + fixed_sq)
                )
            )
            g = new
            iterations += 1
            if early_exit and successive[-1] < EARLY_EXIT_TOL:
                logger.info("Early exit", iteration=iterations)
                break
        loop_solves = ctx.solve_count() - solves_before
        final = assemble_global(layout, ctx.pou, _exact_fields(ctx, traces_of(g)))
    online = time.perf_counter() - start

    for s in snapshots:
        errors.record(assemble_global(layout, ctx.pou, _exact_fields(ctx, traces_of(s))))
    errors.record(final)

    logger.info(
        "Reduced run finished",
        iterations=iterations,
        online_seconds=round(online, 6),
        loop_solves=loop_solves,
        free_traces=int(update.free.size),
        update_nnz=int(update.K.nnz),
    )
    return RunResult(
        method="reduced",
        iterations=iterations,
        final=final,
        history=errors.histories[0],
        history_global=errors.histories[1],
        successive=successive,
        offline_seconds=sum(m.seconds for m in maps) + setup,
        online_seconds=online,
        online_exact_solves=loop_solves,
        k=maps[0].k if maps else None,
    )


class Spectrum(NamedTuple):
    """Singular values of the full, confined and boundary-to-boundary maps of a patch."""

    S: np.ndarray
    S_confined: np.ndarray
    A_map: np.ndarray


@traced_and_logged
def spectrum(ctx: SchwarzContext, patch_id: int) -> Spectrum:
    """Dense singular values of the three maps of one patch."""
    op = ctx.patches[ctx.layout.check_patch(patch_id)]
    values = [
        dense_svd(materialize(op, which, ctx.layout)).S
        for which in ("S", "S_confined", "A_map")
    ]
    return Spectrum(*values)


def state_of(ctx: SchwarzContext, f: np.ndarray, iteration: int = 0) -> BoundaryState:
    """Split stacked traces back into a state."""
    splits = np.cumsum([op.n_boundary for op in ctx.patches])[:-1]
    traces = [BoundaryTrace(i, v) for i, v in enumerate(np.split(f, splits))]
    return BoundaryState(traces=traces, iteration=iteration)
