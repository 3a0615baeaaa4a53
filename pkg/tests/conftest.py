# conftest.py

import pytest

from rschwarz.core.context.context import build_context
from rschwarz.core.decomp import affine_boundary, build_layout, sine_boundary
from rschwarz.core.grid import build_grid, builtin_media, constant_media

# ------------------------------------------------------------------------------
# A small three-strip problem: [0, 2.5] x [0, 1], h = 1/20, strips 1.0 wide
# with stride 0.75 (20 and 15 columns, overlap 5 columns).
# ------------------------------------------------------------------------------


@pytest.fixture(scope="session")
def strip_grid():
    return build_grid(2.5, 1.0, 0.05)


@pytest.fixture(scope="session")
def strip_layout(strip_grid):
    return build_layout(strip_grid, 3, 1.0, 0.75)


@pytest.fixture(scope="session")
def rough_media(strip_grid):
    return builtin_media(strip_grid, 1.0 / 16.0)


@pytest.fixture(scope="session")
def rough_ctx(strip_grid, rough_media, strip_layout):
    return build_context(strip_grid, rough_media, strip_layout, sine_boundary(strip_grid))


@pytest.fixture(scope="session")
def affine_ctx(strip_grid, strip_layout):
    """Constant media with b = x, whose discrete solution is exactly u = x."""
    return build_context(
        strip_grid,
        constant_media(1.0, strip_grid),
        strip_layout,
        affine_boundary(strip_grid, 0.0, 1.0, 0.0),
    )
