# test_local_solver.py

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from rschwarz.core.errors import FactorizationFailure
from rschwarz.core.grid import GridFunction, Rect, build_grid, builtin_media, constant_media
from rschwarz.core.local_solver import (
    BandedCholesky,
    BoundaryTrace,
    InteriorField,
    adjoint_apply,
    assemble,
    confine,
    materialize,
    solve_dirichlet,
    solve_sourced,
)

# ------------------------------------------------------------------------------
# Fixtures: a unit patch with rough media, confined to x in [1/4, 3/4].
# ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def unit_grid():
    return build_grid(1.0, 1.0, 1.0 / 16.0)


@pytest.fixture(scope="module")
def rough_patch(unit_grid):
    media = builtin_media(unit_grid)
    return assemble(unit_grid, media, unit_grid.full_rect, Rect(4, 12, 0, 16))


@pytest.fixture(scope="module")
def flat_patch(unit_grid):
    media = constant_media(1.0, unit_grid)
    return assemble(unit_grid, media, unit_grid.full_rect, Rect(4, 12, 0, 16))


def boundary_coords(op, grid):
    ii, jj = op.rect.node_columns_rows()
    xs, ys = grid.x_coords(), grid.y_coords()
    return xs[ii[op.boundary_idx]], ys[jj[op.boundary_idx]]


class TestAssemble:
    def test_single_interior_node_stencil(self):
        grid = build_grid(1.0, 1.0, 0.5)
        op = assemble(grid, constant_media(1.0, grid), grid.full_rect, grid.full_rect)
        h2 = 0.25
        np.testing.assert_allclose(op.A.toarray(), [[4.0 / h2]])
        # boundary order: corner, bottom, corner, right, corner, top, corner, left
        expected = np.array([0, -1, 0, -1, 0, -1, 0, -1]) / h2
        np.testing.assert_allclose(op.B.toarray().ravel(), expected)

    def test_rows_annihilate_constants(self, rough_patch):
        ones = np.ones(rough_patch.n_interior + rough_patch.n_boundary)
        full = sp.hstack([rough_patch.A, rough_patch.B]).tocsr()
        assert np.abs(full @ ones).max() <= 1e-10 * np.abs(full).max()

    def test_stiffness_is_symmetric(self, rough_patch):
        assert abs(rough_patch.A - rough_patch.A.T).max() == 0.0

    def test_benchmark_patch_counts(self):
        grid = build_grid(1.0, 1.0, 1.0 / 40.0)
        op = assemble(grid, builtin_media(grid), grid.full_rect, Rect(10, 30, 0, 40))
        assert op.n_interior == 39 * 39
        assert op.n_boundary == 160
        assert op.n_confined == 21 * 41
        assert materialize(op, "S_confined").shape == (861, 160)
        assert materialize(op, "S").shape == (1681, 160)

    def test_confine_outside_patch_rejected(self, unit_grid):
        media = constant_media(1.0, unit_grid)
        with pytest.raises(ValueError):
            assemble(unit_grid, media, Rect(0, 8, 0, 16), Rect(4, 12, 0, 16))

    def test_solve_counter(self, unit_grid):
        op = assemble(
            unit_grid, constant_media(1.0, unit_grid), unit_grid.full_rect, unit_grid.full_rect
        )
        solve_dirichlet(op, BoundaryTrace(0, np.ones(op.n_boundary)))
        assert op.solve_count == 1
        op.dirichlet_block(np.ones((op.n_boundary, 5)))
        assert op.solve_count == 6


class TestBandedCholesky:
    def test_wide_block_is_reordered(self):
        grid = build_grid(2.0, 0.5, 0.125)
        op = assemble(grid, builtin_media(grid), grid.full_rect, grid.full_rect)
        assert op.factorization.order is not None
        assert op.factorization.bandwidth == 3
        rhs = np.random.default_rng(3).standard_normal(op.n_interior)
        expected = spla.spsolve(op.A.tocsc(), rhs)
        np.testing.assert_allclose(op.factorization.solve(rhs), expected, rtol=1e-10)

    def test_tall_block_keeps_row_order(self):
        grid = build_grid(0.5, 2.0, 0.125)
        op = assemble(grid, builtin_media(grid), grid.full_rect, grid.full_rect)
        assert op.factorization.order is None
        rhs = np.random.default_rng(4).standard_normal((op.n_interior, 2))
        expected = spla.spsolve(op.A.tocsc(), rhs)
        np.testing.assert_allclose(op.factorization.solve(rhs), expected, rtol=1e-10)

    def test_indefinite_block_fails(self):
        with pytest.raises(FactorizationFailure):
            BandedCholesky(-sp.identity(4, format="csr"), cols=2, rows=2)


class TestSolveDirichlet:
    def test_reproduces_affine_data(self, flat_patch, unit_grid):
        x, y = boundary_coords(flat_patch, unit_grid)
        u = solve_dirichlet(flat_patch, BoundaryTrace(0, 0.5 + 2.0 * x - y))
        ii, jj = flat_patch.rect.node_columns_rows()
        xs, ys = unit_grid.x_coords(), unit_grid.y_coords()
        np.testing.assert_allclose(u.values, 0.5 + 2.0 * xs[ii] - ys[jj], atol=1e-12)

    def test_constant_data(self, rough_patch):
        u = solve_dirichlet(rough_patch, BoundaryTrace(0, np.full(rough_patch.n_boundary, 3.0)))
        np.testing.assert_allclose(u.values, 3.0, rtol=1e-12)

    def test_residual(self, rough_patch):
        f = np.random.default_rng(0).standard_normal(rough_patch.n_boundary)
        u = solve_dirichlet(rough_patch, BoundaryTrace(0, f))
        u_int = u.values[rough_patch.interior_idx]
        residual = rough_patch.A @ u_int + rough_patch.B @ f
        scale = abs(rough_patch.A).max() * np.abs(f).max()
        assert np.abs(residual).max() <= 1e-12 * scale
        np.testing.assert_array_equal(u.values[rough_patch.boundary_idx], f)

    def test_maximum_principle(self, rough_patch):
        f = np.random.default_rng(1).uniform(-2.0, 5.0, rough_patch.n_boundary)
        u = solve_dirichlet(rough_patch, BoundaryTrace(0, f))
        assert u.values.min() >= f.min() - 1e-12
        assert u.values.max() <= f.max() + 1e-12

    def test_misaligned_trace(self, rough_patch):
        with pytest.raises(ValueError):
            solve_dirichlet(rough_patch, BoundaryTrace(0, np.zeros(3)))


class TestConfine:
    def test_identity_gather_on_full_confine(self, unit_grid):
        op = assemble(
            unit_grid, builtin_media(unit_grid), unit_grid.full_rect, unit_grid.full_rect
        )
        u = GridFunction(op.rect, np.arange(op.n_nodes, dtype=float))
        np.testing.assert_array_equal(confine(op, u).values, u.values)

    def test_constant_field(self, rough_patch):
        u = GridFunction(rough_patch.rect, np.full(rough_patch.n_nodes, -1.5))
        assert np.all(confine(rough_patch, u).values == -1.5)

    def test_confined_map_is_row_selection(self, rough_patch):
        full = materialize(rough_patch, "S")
        confined = materialize(rough_patch, "S_confined")
        np.testing.assert_allclose(confined, full[rough_patch.confine_idx], atol=1e-14)

    def test_constants_are_preserved(self, rough_patch):
        full = materialize(rough_patch, "S")
        np.testing.assert_allclose(full.sum(axis=1), 1.0, atol=1e-12)


class TestSourcedAndAdjoint:
    def test_zero_source(self, rough_patch):
        v = solve_sourced(rough_patch, InteriorField(0, np.zeros(rough_patch.n_confined)))
        assert np.all(v.values == 0.0)

    def test_point_source_residual(self, rough_patch):
        # row 20 of the confined rectangle: node (4 + 20 % 9, 20 // 9) = (6, 2), interior
        g = np.zeros(rough_patch.n_confined)
        g[20] = 1.0
        v = solve_sourced(rough_patch, InteriorField(0, g))
        v_int = v.values[rough_patch.interior_idx]
        rhs = np.zeros(rough_patch.n_interior)
        node = rough_patch.rect.local_index(6, 2)
        rhs[np.flatnonzero(rough_patch.interior_idx == node)] = 1.0
        np.testing.assert_allclose(rough_patch.A @ v_int, rhs, atol=1e-10)
        assert np.all(v.values[rough_patch.boundary_idx] == 0.0)

    def test_symmetric_source_gives_symmetric_field(self, flat_patch):
        g = np.ones(flat_patch.n_confined)
        v = solve_sourced(flat_patch, InteriorField(0, g)).as_array()
        np.testing.assert_allclose(v, v[:, ::-1], atol=1e-12)
        np.testing.assert_allclose(v, v[::-1, :], atol=1e-12)

    def test_zero_adjoint(self, rough_patch):
        t = adjoint_apply(rough_patch, InteriorField(0, np.zeros(rough_patch.n_confined)))
        assert np.all(t.values == 0.0)

    def test_adjoint_identity(self, rough_patch):
        rng = np.random.default_rng(7)
        for _ in range(20):
            f = rng.standard_normal(rough_patch.n_boundary)
            g = rng.standard_normal(rough_patch.n_confined)
            sf = confine(rough_patch, solve_dirichlet(rough_patch, BoundaryTrace(0, f))).values
            sg = adjoint_apply(rough_patch, InteriorField(0, g)).values
            scale = np.linalg.norm(g) * np.linalg.norm(sf) + np.linalg.norm(sg) * np.linalg.norm(f)
            assert abs(g @ sf - sg @ f) <= 1e-10 * scale

    def test_adjoint_is_dense_transpose(self, rough_patch):
        dense = materialize(rough_patch, "S_confined")
        g = np.zeros(rough_patch.n_confined)
        g[40] = 1.0
        t = adjoint_apply(rough_patch, InteriorField(0, g))
        np.testing.assert_allclose(t.values, dense.T @ g, atol=1e-12)
        block = np.random.default_rng(2).standard_normal((rough_patch.n_confined, 4))
        np.testing.assert_allclose(
            rough_patch.adjoint_confined(block), dense.T @ block, atol=1e-10
        )
