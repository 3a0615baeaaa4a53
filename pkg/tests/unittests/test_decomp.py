# test_decomp.py

import dataclasses

import numpy as np
import pytest

from rschwarz.core.errors import InvalidPatch, MissingOwner, NonConformingLayout, ParseError
from rschwarz.core.decomp import (
    BoundaryState,
    affine_boundary,
    assemble_global,
    build_layout,
    build_pou,
    exchange,
    init_state,
    load_boundary,
    restrict_state,
    sine_boundary,
    write_boundary,
)
from rschwarz.core.grid import GridFunction, build_grid
from rschwarz.core.local_solver import InteriorField


@pytest.fixture(scope="module")
def bench_grid():
    return build_grid(10.0, 1.0, 1.0 / 40.0)


@pytest.fixture(scope="module")
def bench_layout(bench_grid):
    return build_layout(bench_grid, 13, 1.0, 0.75)


def confined_values(layout, values):
    """Interior fields holding a global nodal vector on every confined rectangle."""
    return [
        InteriorField(i, values[layout.grid.node_index(*rect.node_columns_rows())])
        for i, rect in enumerate(layout.confine_rects)
    ]


class TestBuildLayout:
    def test_bench_layout(self, bench_layout):
        assert bench_layout.width_cols == 40
        assert bench_layout.stride_cols == 30
        assert bench_layout.overlap == pytest.approx(0.25)
        lo, hi = bench_layout.intervals[3]
        assert (lo, hi) == (pytest.approx(2.25), pytest.approx(3.25))
        lo, hi = bench_layout.interior_intervals[3]
        assert (lo, hi) == (pytest.approx(2.5), pytest.approx(3.0))
        assert bench_layout.neighbor_sets[3] == {2, 4}
        assert bench_layout.neighbor_sets[0] == {1}
        assert bench_layout.neighbor_sets[12] == {11}

    def test_end_patches_cut_both_overlap_bands(self, bench_layout):
        assert bench_layout.interior_intervals[0] == (pytest.approx(0.25), pytest.approx(0.75))
        assert (bench_layout.confine_rects[0].i0, bench_layout.confine_rects[0].i1) == (10, 30)
        assert (bench_layout.confine_rects[12].i0, bench_layout.confine_rects[12].i1) == (370, 390)
        # the confined region never touches the left or right domain boundary
        for rect in bench_layout.confine_rects:
            assert 0 < rect.i0 and rect.i1 < 400

    def test_edge_owners(self, bench_layout):
        assert bench_layout.edge_owner[(3, "left")] == 2
        assert bench_layout.edge_owner[(3, "right")] == 4
        assert (0, "left") not in bench_layout.edge_owner

    def test_single_patch(self, bench_grid):
        layout = build_layout(bench_grid, 1, 10.0)
        assert layout.confine_rects[0] == bench_grid.full_rect
        assert layout.neighbor_sets[0] == frozenset()
        assert layout.transfers == ((),)
        assert layout.pinned[0].all()

    def test_stride_must_tile_domain(self, bench_grid):
        with pytest.raises(NonConformingLayout):
            build_layout(bench_grid, 13, 1.0, 0.8)

    def test_non_neighbor_overlap_rejected(self, bench_grid):
        with pytest.raises(NonConformingLayout):
            build_layout(bench_grid, 17, 2.0, 0.5)

    def test_misaligned_width_rejected(self, bench_grid):
        with pytest.raises(NonConformingLayout):
            build_layout(bench_grid, 13, 1.01, 0.75)

    def test_check_patch(self, bench_layout):
        assert bench_layout.check_patch(12) == 12
        with pytest.raises(InvalidPatch, match="0..12"):
            bench_layout.check_patch(13)

    def test_outgoing_rows_cover_both_neighbor_edges(self, strip_layout):
        # patch 1 confines columns 20..30 and exports columns 20 and 30 minus corners
        rows = strip_layout.outgoing_rows(1)
        assert rows.size == 2 * 19
        rect = strip_layout.confine_rects[1]
        ii, _ = rect.node_columns_rows()
        assert set(ii[rows].tolist()) == {20, 30}


class TestPartitionOfUnity:
    def test_weights_sum_to_one(self, bench_layout):
        pou = build_pou(bench_layout)
        np.testing.assert_allclose(pou.global_weights().sum(axis=0), 1.0, atol=1e-14)

    def test_weights_in_unit_interval(self, bench_layout):
        for w in build_pou(bench_layout).weights:
            assert w.min() >= 0.0
            assert w.max() <= 1.0

    def test_overlap_midpoint(self, bench_layout, bench_grid):
        weights = build_pou(bench_layout).global_weights()
        mid = bench_grid.node_index(95, 20)
        assert weights[2, mid] == pytest.approx(0.5)
        assert weights[3, mid] == pytest.approx(0.5)
        assert weights[3, bench_grid.node_index(90, 20)] == 0.0
        assert weights[3, bench_grid.node_index(110, 20)] == 1.0

    def test_other_grid_rejected(self, bench_layout):
        with pytest.raises(ValueError):
            build_pou(bench_layout, build_grid(10.0, 1.0, 1.0 / 20.0))


class TestBoundaryState:
    def test_init_state(self, strip_layout, strip_grid):
        b = sine_boundary(strip_grid)
        state = init_state(strip_layout, b)
        assert state.iteration == 0
        for i, trace in enumerate(state.traces):
            ids = strip_layout.boundary_node_ids[i]
            pinned = strip_layout.pinned[i]
            np.testing.assert_array_equal(trace.values[pinned], b.values[ids[pinned]])
            assert np.all(trace.values[~pinned] == 0.0)
        assert (~strip_layout.pinned[1]).sum() == 38
        assert (~strip_layout.pinned[0]).sum() == 19

    def test_exchange_keeps_traces_of_a_global_field(self, strip_layout, strip_grid):
        values = np.random.default_rng(5).standard_normal(strip_grid.n_nodes)
        state = restrict_state(strip_layout, GridFunction(strip_grid.full_rect, values), 4)
        updated = exchange(strip_layout, confined_values(strip_layout, values), state)
        assert updated.iteration == 5
        np.testing.assert_array_equal(updated.stacked(), state.stacked())

    def test_exchange_only_touches_free_positions(self, strip_layout, strip_grid):
        state = init_state(strip_layout, affine_boundary(strip_grid, 2.0))
        fields = confined_values(strip_layout, np.full(strip_grid.n_nodes, 7.0))
        updated = exchange(strip_layout, fields, state)
        for i, trace in enumerate(updated.traces):
            pinned = strip_layout.pinned[i]
            assert np.all(trace.values[pinned] == 2.0)
            assert np.all(trace.values[~pinned] == 7.0)

    def test_exchange_needs_every_patch(self, strip_layout, strip_grid):
        state = init_state(strip_layout, sine_boundary(strip_grid))
        fields = confined_values(strip_layout, np.zeros(strip_grid.n_nodes))
        with pytest.raises(ValueError):
            exchange(strip_layout, fields[:2], state)

    def test_missing_owner(self, strip_layout, strip_grid):
        broken = dataclasses.replace(strip_layout, edge_owner={})
        state = init_state(broken, sine_boundary(strip_grid))
        fields = confined_values(broken, np.zeros(strip_grid.n_nodes))
        with pytest.raises(MissingOwner):
            exchange(broken, fields, state)

    def test_restrict_needs_global_field(self, strip_layout):
        u = GridFunction(strip_layout.patch_rects[0], np.zeros(strip_layout.patch_rects[0].size))
        with pytest.raises(ValueError):
            restrict_state(strip_layout, u)

    def test_stacked_length(self, strip_layout, strip_grid):
        state = init_state(strip_layout, sine_boundary(strip_grid))
        assert isinstance(state, BoundaryState)
        assert state.stacked().size == 3 * 80


class TestAssembleGlobal:
    def test_identical_patch_fields(self, strip_layout, strip_grid):
        values = np.random.default_rng(8).standard_normal(strip_grid.n_nodes)
        fields = [GridFunction(rect, values[ids]) for rect, ids in zip(strip_layout.patch_rects, strip_layout.node_ids)]
        u = assemble_global(strip_layout, build_pou(strip_layout), fields)
        np.testing.assert_allclose(u.values, values, atol=1e-14)

    def test_blend_across_overlap(self):
        grid = build_grid(1.0, 1.0, 1.0 / 40.0)
        layout = build_layout(grid, 2, 0.625, 0.375)
        fields = [
            GridFunction(layout.patch_rects[0], np.zeros(layout.patch_rects[0].size)),
            GridFunction(layout.patch_rects[1], np.ones(layout.patch_rects[1].size)),
        ]
        u = assemble_global(layout, build_pou(layout), fields)
        row = u.as_array()[10]
        assert row[15] == pytest.approx(0.0)
        assert row[20] == pytest.approx(0.5)
        assert row[25] == pytest.approx(1.0)
        assert row[5] == 0.0
        assert row[35] == 1.0

    def test_wrong_field_count(self, strip_layout):
        with pytest.raises(ValueError):
            assemble_global(strip_layout, build_pou(strip_layout), [])


class TestBoundaryFile:
    def test_write_then_load(self, tmp_path, strip_grid):
        b = sine_boundary(strip_grid)
        path = tmp_path / "b.bnd"
        write_boundary(b, path)
        loaded = load_boundary(path, strip_grid)
        assert loaded.kind == "from-file"
        np.testing.assert_array_equal(loaded.on_boundary(), b.on_boundary())

    def _pairs(self, grid):
        return [(int(i), 1.0) for i in grid.boundary_node_ids()]

    def _write(self, path, count, pairs):
        body = "\n".join(f"{i} {v}" for i, v in pairs)
        path.write_text(f"BND {count}\n{body}\n")

    def test_missing_header(self, tmp_path, strip_grid):
        path = tmp_path / "b.bnd"
        path.write_text("0 1.0\n")
        with pytest.raises(ParseError):
            load_boundary(path, strip_grid)

    def test_count_mismatch(self, tmp_path, strip_grid):
        pairs = self._pairs(strip_grid)
        path = tmp_path / "b.bnd"
        self._write(path, len(pairs) + 1, pairs)
        with pytest.raises(ParseError):
            load_boundary(path, strip_grid)

    def test_duplicate_node(self, tmp_path, strip_grid):
        pairs = self._pairs(strip_grid)
        path = tmp_path / "b.bnd"
        self._write(path, len(pairs) + 1, pairs + [pairs[0]])
        with pytest.raises(ParseError, match="duplicate"):
            load_boundary(path, strip_grid)

    def test_interior_node(self, tmp_path, strip_grid):
        pairs = self._pairs(strip_grid)
        pairs[0] = (int(strip_grid.node_index(5, 5)), 1.0)
        path = tmp_path / "b.bnd"
        self._write(path, len(pairs), pairs)
        with pytest.raises(ParseError, match="not on the domain boundary"):
            load_boundary(path, strip_grid)

    def test_missing_node(self, tmp_path, strip_grid):
        pairs = self._pairs(strip_grid)[1:]
        path = tmp_path / "b.bnd"
        self._write(path, len(pairs), pairs)
        with pytest.raises(ParseError, match="missing"):
            load_boundary(path, strip_grid)

    def test_non_finite_value(self, tmp_path, strip_grid):
        pairs = self._pairs(strip_grid)
        pairs[3] = (pairs[3][0], float("nan"))
        path = tmp_path / "b.bnd"
        self._write(path, len(pairs), pairs)
        with pytest.raises(ParseError, match="non-finite"):
            load_boundary(path, strip_grid)

    def test_unreadable_file(self, tmp_path, strip_grid):
        with pytest.raises(ParseError):
            load_boundary(tmp_path / "absent.bnd", strip_grid)
