"""Run context: assembled patches, layout, boundary data and the configuration fingerprint."""

import hashlib
import time
from dataclasses import dataclass, replace

from opentelemetry import trace

from rschwarz.core.decomp import (
    DirichletData,
    Layout,
    PartitionOfUnity,
    build_pou,
)
from rschwarz.core.execution.patch_executor import map_patches
from rschwarz.core.grid import GridSpec, MediaField, edge_coefficient_fields
from rschwarz.core.local_solver import PatchOperator, assemble
from rschwarz.core.logging.logging import get_logger

logger = get_logger("context")
tracer = trace.get_tracer(__name__)

# bytes of the 32-byte fingerprint taken from each component digest
FINGERPRINT_PARTS = (("grid", 10), ("media", 11), ("layout", 11))


def _grid_payload(grid: GridSpec) -> bytes:
    return f"{grid.lx!r}|{grid.ly!r}|{grid.h!r}|{grid.nx}|{grid.ny}".encode()


def fingerprint(grid: GridSpec, media: MediaField, layout: Layout) -> bytes:
    """32-byte content hash of the configuration compressed maps depend on.

    Each component contributes a truncated SHA-256 digest, so a mismatch can
    be traced to the component that differs.
    """
    payloads = {
        "grid": _grid_payload(grid),
        "media": media.fingerprint_payload(),
        "layout": layout.fingerprint_payload(),
    }
    return b"".join(
        hashlib.sha256(payloads[name]).digest()[:size]
        for name, size in FINGERPRINT_PARTS
    )


def fingerprint_diff(expected: bytes, actual: bytes) -> list[str]:
    """Names of the components whose digests differ."""
    differing, start = [], 0
    for name, size in FINGERPRINT_PARTS:
        if expected[start : start + size] != actual[start : start + size]:
            differing.append(name)
        start += size
    return differing


@dataclass(frozen=True, eq=False)
class SchwarzContext:
    """Everything both Schwarz drivers share: geometry, media, patches and boundary data.

    Patch operators (and their factorizations) are built once; contexts
    derived with `with_boundary` reuse them.
    """

    grid: GridSpec
    media: MediaField
    layout: Layout
    pou: PartitionOfUnity
    boundary: DirichletData
    patches: tuple[PatchOperator, ...]
    fingerprint: bytes
    assembly_seconds: float = 0.0
    max_workers: int | None = None

    @property
    def n_patches(self) -> int:
        return self.layout.n_patches

    def with_boundary(self, boundary: DirichletData) -> "SchwarzContext":
        if boundary.grid != self.grid:
            raise ValueError("boundary data was sampled on a different grid")
        return replace(self, boundary=boundary)

    def solve_count(self) -> int:
        """Total factorization solves over all patches."""
        return sum(op.solve_count for op in self.patches)


def build_context(
    grid: GridSpec,
    media: MediaField,
    layout: Layout,
    boundary: DirichletData,
    max_workers: int | None = None,
) -> SchwarzContext:
    """Assemble and factor every patch of the layout."""
    start = time.perf_counter()
    with tracer.start_as_current_span("build_context") as span:
        span.set_attribute("patches", layout.n_patches)
        edge_fields = edge_coefficient_fields(media, grid)
        patches = map_patches(
            lambda i: assemble(
                grid,
                media,
                layout.patch_rects[i],
                layout.confine_rects[i],
                patch_id=i,
                edge_fields=edge_fields,
            ),
            range(layout.n_patches),
            max_workers,
        )
        pou = build_pou(layout, grid)
    elapsed = time.perf_counter() - start
    logger.info(
        "Assembled patches", patches=layout.n_patches, seconds=round(elapsed, 4)
    )
    return SchwarzContext(
        grid=grid,
        media=media,
        layout=layout,
        pou=pou,
        boundary=boundary,
        patches=tuple(patches),
        fingerprint=fingerprint(grid, media, layout),
        assembly_seconds=elapsed,
        max_workers=max_workers,
    )
