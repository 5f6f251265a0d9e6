import json

import numpy as np
import pytest

from vemdg.mesh import (MeshError, generate_structured, generate_voronoi_lloyd, mesh_from_dict,
                        point_in_polygon, read_mesh, write_mesh)


@pytest.fixture(scope="module")
def voronoi100():
    return generate_voronoi_lloyd(100, seed=42, lloyd_iters=50)


def total_area(mesh):
    return sum(g.area for g in mesh.geometry)


def test_structured_single_cell():
    m = generate_structured(1, 1)
    assert (m.n_cells, m.n_vertices) == (1, 4)
    assert total_area(m) == pytest.approx(1.0, abs=1e-15)


def test_structured_2x2_counts():
    m = generate_structured(2, 2)
    assert (m.n_cells, m.n_vertices, m.n_edges) == (4, 9, 12)


def test_structured_4x4_tiles():
    m = generate_structured(4, 4)
    assert m.n_cells == 16
    assert abs(total_area(m) - 1.0) <= 1e-12


def test_structured_rejects_zero():
    with pytest.raises(MeshError):
        generate_structured(0, 3)


def test_voronoi_tiles_box(voronoi100):
    assert voronoi100.n_cells == 100
    assert abs(total_area(voronoi100) - 1.0) <= 1e-10


def test_voronoi_cells_are_ccw_and_star_shaped(voronoi100):
    for c, g in enumerate(voronoi100.geometry):
        V = voronoi100.cell_vertices(c)
        assert g.area > 0
        assert ((V - g.centroid) * g.normals).sum(1).min() > 0


def test_voronoi_single_cell_is_box():
    m = generate_voronoi_lloyd(1, (0.0, 0.0, 2.0, 1.0), seed=7)
    assert m.n_cells == 1
    assert total_area(m) == pytest.approx(2.0)
    assert sorted(map(tuple, m.vertices)) == [(0, 0), (0, 1), (2, 0), (2, 1)]


def test_voronoi_deterministic():
    a = generate_voronoi_lloyd(30, seed=3, lloyd_iters=10)
    b = generate_voronoi_lloyd(30, seed=3, lloyd_iters=10)
    assert np.array_equal(a.vertices, b.vertices)
    assert all(np.array_equal(x, y) for x, y in zip(a.cells, b.cells))


def test_voronoi_rejects_zero_cells():
    with pytest.raises(MeshError):
        generate_voronoi_lloyd(0)


def test_voronoi_family_halves_h():
    hs = [generate_voronoi_lloyd(n, seed=n).h for n in (50, 200, 800)]
    ratios = np.array(hs[:-1]) / np.array(hs[1:])
    assert np.all((ratios > 1.6) & (ratios < 2.5)), hs


def test_edges_shared_consistently(voronoi100):
    m = voronoi100
    for e, cells in enumerate(m.edge_cells):
        assert len(cells) in (1, 2)
    # Euler characteristic of a disc: V - E + F = 1
    assert m.n_vertices - m.n_edges + m.n_cells == 1


def test_normals_point_outward():
    m = generate_structured(1, 1)
    g = m.geometry[0]
    assert np.allclose(g.normals, [[0, -1], [1, 0], [0, 1], [-1, 0]])
    assert np.allclose(g.lengths, 1.0)


def test_round_trip(tmp_path):
    m = generate_structured(2, 2)
    p = tmp_path / "m.json"
    write_mesh(m, p)
    m2 = read_mesh(p)
    assert np.array_equal(m.vertices, m2.vertices)
    assert all(np.array_equal(a, b) for a, b in zip(m.cells, m2.cells))
    assert m.box == m2.box


def test_round_trip_voronoi_exact(tmp_path, voronoi100):
    p = tmp_path / "v.json"
    write_mesh(voronoi100, p)
    assert np.array_equal(read_mesh(p).vertices, voronoi100.vertices)


def _doc():
    return {"box": [0, 0, 1, 1], "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]],
            "cells": [[0, 1, 2, 3]]}


def test_clockwise_cell_named():
    d = _doc()
    d["cells"] = [[0, 3, 2, 1]]
    with pytest.raises(MeshError, match="cell 0"):
        mesh_from_dict(d)


def test_duplicate_index_rejected():
    d = _doc()
    d["cells"] = [[0, 1, 2, 2]]
    with pytest.raises(MeshError, match="duplicated"):
        mesh_from_dict(d)


def test_incomplete_cover_rejected():
    d = _doc()
    d["vertices"].append([0.5, 0.5])
    d["cells"] = [[0, 1, 4]]
    with pytest.raises(MeshError):
        mesh_from_dict(d)


def test_missing_key_and_bad_json(tmp_path):
    with pytest.raises(MeshError):
        mesh_from_dict({"box": [0, 0, 1, 1]})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MeshError):
        read_mesh(p)
    p.write_text(json.dumps(_doc()))
    assert read_mesh(p).n_cells == 1


def test_locate_tie_break_and_interior():
    m = generate_structured(2, 2)
    assert m.locate((0.5, 0.5)) == 0
    assert m.locate((0.25, 0.25)) == 0
    assert m.locate((0.75, 0.25)) == 1
    assert m.locate((0.25, 0.75)) == 2


def test_locate_outside_raises():
    with pytest.raises(MeshError):
        generate_structured(2, 2).locate((1.5, 0.5))


def test_locate_matches_brute_force(voronoi100):
    rng = np.random.default_rng(5)
    for x in rng.uniform(0, 1, (300, 2)):
        scan = [c for c in range(voronoi100.n_cells)
                if point_in_polygon(x, voronoi100.cell_vertices(c), 1e-12)]
        assert voronoi100.locate(x) == min(scan)
