from __future__ import annotations

import math

import numpy as np
import pytest

from fkcoupling import geometry as g

from conftest import brute_force_star_count, brute_force_vertices


class TestBuildBox:
    def test_straight_5x5_counts(self):
        box = g.build_box(2, 4)
        # independent count: {-2..2}^2 and its unit pairs
        pts = [(i, j) for i in range(-2, 3) for j in range(-2, 3)]
        pairs = sum(
            1
            for a in pts
            for b in pts
            if a < b and abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
        )
        assert box.n_vertices == len(pts) == 25
        assert box.n_edges == pairs == 40

    @pytest.mark.parametrize(
        "dim,side,nv,ne",
        [(2, 6, 49, 84), (3, 4, 125, 300)],
    )
    def test_closed_form_counts(self, dim, side, nv, ne):
        box = g.build_box(dim, side)
        span = 2 * (side // 2) + 1
        assert box.n_vertices == span**dim == nv
        assert box.n_edges == dim * span ** (dim - 1) * (span - 1) == ne

    def test_tiny_box_rejected(self):
        with pytest.raises(ValueError):
            g.build_box(2, 0.5)

    def test_dim_one_rejected(self):
        with pytest.raises(ValueError):
            g.build_box(1, 5)

    def test_non_orthogonal_rotation_rejected(self):
        with pytest.raises(ValueError):
            g.build_box(2, 4, rotation=np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_tilted_membership_matches_brute_force(self):
        rot = g.rotation_2d(math.pi / 4)
        box = g.build_box(2, 4, rotation=rot)
        assert sorted(tuple(c) for c in box.coords) == brute_force_vertices(2, 4, rot)
        # the quoted characterization of the pi/4 box
        lim = 2 * math.sqrt(2)
        for x1, x2 in box.coords:
            assert abs(x1 + x2) <= lim + 1e-9 and abs(x1 - x2) <= lim + 1e-9

    def test_offset_grid_box(self):
        box = g.build_box(2, 1, center=(0.5, 0.5))
        assert sorted(tuple(c) for c in box.coords) == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert box.n_edges == 4

    def test_boundary_definition(self):
        box = g.build_box(2, 4)
        have = {tuple(c) for c in box.coords}
        for i, c in enumerate(box.coords):
            outside_neighbor = any(
                (c[0] + dx, c[1] + dy) not in have
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
            )
            assert bool(box.boundary_mask[i]) == outside_neighbor

    def test_edge_lengths_are_unit(self):
        box = g.build_box(2, 4, rotation=g.rotation_2d(0.3))
        diffs = box.coords[box.edges[:, 1]] - box.coords[box.edges[:, 0]]
        assert np.all(np.abs(diffs).sum(axis=1) == 1)

    def test_deterministic_rebuild(self):
        a = g.build_box(3, 5)
        b = g.build_box(3, 5)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.edges, b.edges)


class TestSplitTB:
    def test_straight_split_vertical_axis(self):
        box = g.build_box(2, 4)
        top, bottom = g.split_tb(box, 1)
        for v in top:
            assert box.coords[v][1] >= 0
        for v in bottom:
            assert box.coords[v][1] < 0
        boundary = set(int(v) for v in box.boundary_ids)
        assert top | bottom == boundary
        assert not (top & bottom)
        assert top and bottom

    def test_tie_vertices_go_to_top(self):
        box = g.build_box(2, 4)
        top, _ = g.split_tb(box, 1)
        on_plane = [int(v) for v in box.boundary_ids if box.coords[v][1] == 0]
        assert on_plane and all(v in top for v in on_plane)

    def test_symmetric_counts_differ_by_plane_layer(self):
        box = g.build_box(2, 6)
        top, bottom = g.split_tb(box, 1)
        on_plane = sum(1 for v in top if box.coords[v][1] == 0)
        assert len(top) - on_plane == len(bottom)

    def test_tilted_split_partitions_boundary(self):
        box = g.build_box(2, 4, rotation=g.rotation_2d(math.pi / 4))
        for axis in (0, 1):
            top, bottom = g.split_tb(box, axis)
            normal = box.rotation[:, axis]
            for v in top:
                assert box.coords[v] @ normal >= -1e-9
            for v in bottom:
                assert box.coords[v] @ normal < 0
            assert top | bottom == set(int(v) for v in box.boundary_ids)

    def test_each_axis_gives_default_or_custom(self):
        box = g.build_box(3, 4, face_axis=0)
        assert box.face_axis == 0
        with pytest.raises(ValueError):
            g.split_tb(box, 3)


class TestStarAdjacency:
    def test_alpha_matches_brute_force(self):
        assert g.alpha(2) == brute_force_star_count(2) == 12
        assert g.alpha(3) == brute_force_star_count(3) == 50

    def test_interior_edge_star_count(self):
        for dim, expect in ((2, 12), (3, 50)):
            box = g.build_box(dim, 6)
            e = box.edge_id((0,) * dim, (1,) + (0,) * (dim - 1))
            assert len(g.star_neighbors(box, e)) == expect == g.alpha(dim)

    def test_corner_edge_truncated(self):
        box = g.build_box(2, 4)
        e = box.edge_id((-2, -2), (-1, -2))
        assert len(g.star_neighbors(box, e)) < g.alpha(2)

    def test_symmetry(self):
        box = g.build_box(2, 4)
        for e in range(box.n_edges):
            for f in g.star_neighbors(box, e):
                assert e in g.star_neighbors(box, int(f))

    def test_unknown_edge(self):
        box = g.build_box(2, 4)
        with pytest.raises(KeyError):
            g.star_neighbors(box, box.n_edges)


class TestEdgeMetrics:
    def test_adjacent_parallel_edges(self):
        box = g.build_box(2, 4)
        e = box.edge_id((0, 0), (1, 0))
        f = box.edge_id((0, 1), (1, 1))
        assert g.edge_distance(box, e, f) == 1.0

    def test_self_distance_zero(self):
        box = g.build_box(2, 4)
        e = box.edge_id((0, 0), (1, 0))
        assert g.set_distance(box, e, [e]) == 0.0

    def test_empty_set_is_infinite(self):
        box = g.build_box(2, 4)
        assert math.isinf(g.set_distance(box, 0, []))

    def test_central_edge_to_complement_side_10(self):
        box = g.build_box(2, 10)
        e = box.edge_id((0, 0), (1, 0))
        d = g.distance_to_complement(box, e)
        assert abs(d - 5.0) <= 0.5
        assert d == pytest.approx(4.5)

    def test_complement_distance_via_set_distance(self):
        box = g.build_box(2, 10)
        e = box.edge_id((0, 0), (1, 0))
        assert g.set_distance(box, e, [], include_complement=True) == pytest.approx(4.5)

    def test_tilted_complement_distance_positive_inside(self):
        box = g.build_box(2, 6, rotation=g.rotation_2d(0.4))
        for e in range(box.n_edges):
            assert g.distance_to_complement(box, e) >= 0.0


class TestNeighborhood:
    def test_contains_the_set_at_radius_zero(self):
        box = g.build_box(2, 4)
        a = [0, 5, 7]
        got = set(int(e) for e in g.neighborhood(box, a, 0.0))
        assert set(a) <= got

    def test_empty_set(self):
        box = g.build_box(2, 4)
        assert len(g.neighborhood(box, [], 3.0)) == 0

    def test_monotone_in_radius(self):
        box = g.build_box(2, 4)
        a = [10]
        small = set(int(e) for e in g.neighborhood(box, a, 1.0))
        large = set(int(e) for e in g.neighborhood(box, a, 2.5))
        assert small <= large

    def test_edges_near_complement(self):
        box = g.build_box(2, 8)
        near = set(int(e) for e in g.edges_near_complement(box, 1.0))
        e_center = box.edge_id((0, 0), (1, 0))
        e_side = box.edge_id((-4, 0), (-3, 0))
        assert e_side in near and e_center not in near


def test_geometry_dump(tmp_path):
    box = g.build_box(2, 3)
    path = tmp_path / "geom.txt"
    g.dump_geometry(box, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# fkcoupling-geometry v1")
    v_lines = [l for l in lines if l.startswith("v ")]
    e_lines = [l for l in lines if l.startswith("e ")]
    assert len(v_lines) == box.n_vertices
    assert len(e_lines) == box.n_edges
    flags = {l.split()[-1] for l in v_lines}
    assert flags <= {"T", "B", "i"}
