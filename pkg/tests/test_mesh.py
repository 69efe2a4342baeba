import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdnn.errors import MeshParseError, TopologyError, UnsupportedElementError
from tdnn.mesh import (
    EXTERIOR,
    HOLE,
    Mesh,
    build_edges,
    check_dmp_conditions,
    christie_hall_holds,
    generate_square_with_hole,
    generate_structured_quad,
    generate_structured_triangular,
    load_mesh,
    parse_mesh_spec,
    save_mesh,
)

TWO_TRI = Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


@pytest.mark.parametrize(
    "n, orient, nodes, elems",
    [(19, "plus45", 361, 648), (2, "plus45", 4, 2), (10, "minus45", 100, 162)],
)
def test_triangular_counts(n, orient, nodes, elems):
    m = generate_structured_triangular(n, orient)
    assert (m.n_nodes, m.n_elements) == (nodes, elems)
    assert set(m.boundary_markers.values()) == {EXTERIOR}


@pytest.mark.parametrize("n, nodes, quads", [(11, 121, 100), (2, 4, 1), (21, 441, 400)])
def test_quad_counts(n, nodes, quads):
    m = generate_structured_quad(n)
    assert (m.n_nodes, m.n_elements, m.element_kind) == (nodes, quads, "quad")


@pytest.mark.parametrize("bad", [1, 0, 2.5])
def test_generators_reject_small_n(bad):
    with pytest.raises(ValueError):
        generate_structured_triangular(bad)
    with pytest.raises(ValueError):
        generate_structured_quad(bad)


def test_plus45_diagonal_runs_lower_left_to_upper_right():
    m = generate_structured_triangular(2, "plus45")
    diag = {tuple(sorted(e)) for e in build_edges(m).edges.tolist()} - {(0, 1), (1, 3), (2, 3), (0, 2)}
    assert diag == {(0, 3)}
    m = generate_structured_triangular(2, "minus45")
    diag = {tuple(sorted(e)) for e in build_edges(m).edges.tolist()} - {(0, 1), (1, 3), (2, 3), (0, 2)}
    assert diag == {(1, 2)}


def test_reflection_relates_plus_and_minus():
    n = 7
    a = generate_structured_triangular(n, "plus45")
    b = generate_structured_triangular(n, "minus45")
    np.testing.assert_array_equal(a.nodes, b.nodes)
    mirror = {tuple(np.round(p, 12)): i for i, p in enumerate(b.nodes)}
    mapped = [
        frozenset(mirror[tuple(np.round((1 - a.nodes[v, 0], a.nodes[v, 1]), 12))] for v in el)
        for el in a.elements
    ]
    assert set(mapped) == {frozenset(el.tolist()) for el in b.elements}


@pytest.mark.parametrize("k", [1, 2])
def test_hole_mesh(k):
    m = generate_square_with_hole(k)
    assert np.isclose(m.areas.sum(), 80 / 81, rtol=1e-12)
    hole = [i for i, t in m.boundary_markers.items() if t == HOLE]
    assert len(hole) == 4 * k
    xy = m.nodes[hole]
    on_perimeter = np.isclose(xy, 4 / 9) | np.isclose(xy, 5 / 9)
    assert np.all(on_perimeter.any(axis=1))
    assert np.all((xy >= 4 / 9 - 1e-15) & (xy <= 5 / 9 + 1e-15))
    # no element inside the hole
    c = m.nodes[m.elements].mean(axis=1)
    inside = (c > 4 / 9) & (c < 5 / 9)
    assert not np.any(inside.all(axis=1))
    assert m.tags_present == [EXTERIOR, HOLE]


def test_hole_mesh_scales_quadratically():
    counts = [generate_square_with_hole(k).n_elements for k in (1, 2, 3)]
    assert counts == [160 * k * k for k in (1, 2, 3)]


@given(st.integers(2, 14), st.sampled_from(["plus45", "minus45"]))
def test_edge_invariants(n, orient):
    m = generate_structured_triangular(n, orient)
    assert np.isclose(m.areas.sum(), 1.0, rtol=1e-12)
    e = build_edges(m)
    # Euler for a simply connected domain
    assert m.n_nodes - e.n_edges + m.n_elements == 1
    inc = e.edge_elements
    interior = inc[:, 1] >= 0
    assert np.count_nonzero(~interior) == len(e.boundary_edges)
    # interior edges carry opposite signs in their two elements
    for k in np.flatnonzero(interior)[:50]:
        s = [e.signs[el][list(e.edge_of_element[el]).index(k)] for el in inc[k]]
        assert sorted(s) == [-1, 1]
    # closed polygon: sum of sigma L n vanishes on every element
    d = m.nodes[e.edges[:, 1]] - m.nodes[e.edges[:, 0]]
    nl = np.stack([d[:, 1], -d[:, 0]], axis=1)
    total = np.einsum("mk,mki->mi", e.signs.astype(float), nl[e.edge_of_element])
    assert np.abs(total).max() < 1e-12
    # boundary nodes are exactly the nodes of edges with one element
    bn = np.unique(e.edges[e.boundary_edges])
    np.testing.assert_array_equal(bn, m.detected_boundary_nodes)


def test_edge_count_19():
    assert build_edges(generate_structured_triangular(19)).n_edges == 1008


def test_two_triangle_edges():
    e = build_edges(TWO_TRI)
    assert e.n_edges == 5
    shared = np.flatnonzero(e.edge_elements[:, 1] >= 0)
    assert len(shared) == 1
    (k,) = shared
    sig = [int(e.signs[el][list(e.edge_of_element[el]).index(k)]) for el in e.edge_elements[k]]
    # element 0 runs 2 -> 0, element 1 runs 0 -> 2
    assert sig == [-1, 1]


def test_edges_reject_quads():
    with pytest.raises(UnsupportedElementError):
        build_edges(generate_structured_quad(3))


def test_negative_area_rejected():
    with pytest.raises(TopologyError):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    with pytest.raises(TopologyError):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 5]])


def test_round_trip(tmp_path):
    for m in (generate_square_with_hole(1), generate_structured_quad(4)):
        path = tmp_path / "m.mesh"
        save_mesh(m, path)
        back = load_mesh(path)
        np.testing.assert_array_equal(back.nodes, m.nodes)
        np.testing.assert_array_equal(back.elements, m.elements)
        assert back.boundary_markers == m.boundary_markers
        assert back.element_kind == m.element_kind


def test_load_small_file(tmp_path):
    path = tmp_path / "sq.mesh"
    path.write_text(
        "# unit square, two triangles\n"
        "nodes 4\n0 0\n1 0\n1 1\n0 1\n"
        "elements 2 tri\n0 1 2\n0 2 3   # second\n"
    )
    m = load_mesh(path)
    assert build_edges(m).n_edges == 5
    assert sorted(m.boundary_markers) == [0, 1, 2, 3]


@pytest.mark.parametrize(
    "text, line",
    [
        ("nodes 2\n0 0\n1\n", 3),
        ("nodes 1\n0 0\nelements 1 hex\n0 0 0\n", 3),
        ("nodes 3\n0 0\n1 0\n0 1\nelements 1 tri\n0 1 x\n", 6),
        ("nodez 3\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    with pytest.raises(MeshParseError) as info:
        load_mesh(path)
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}:")


def test_load_negative_area(tmp_path):
    path = tmp_path / "neg.mesh"
    path.write_text("nodes 3\n0 0\n1 0\n0 1\nelements 1 tri\n0 2 1\n")
    with pytest.raises(TopologyError):
        load_mesh(path)


def test_parse_mesh_spec(tmp_path):
    assert parse_mesh_spec("tri45:+45:5").n_nodes == 25
    assert parse_mesh_spec("tri45:-45:5").n_elements == 32
    assert parse_mesh_spec("quad:4").element_kind == "quad"
    assert parse_mesh_spec("hole:1").n_elements == 160
    path = tmp_path / "q.mesh"
    save_mesh(generate_structured_quad(3), path)
    assert parse_mesh_spec(f"file:{path}").n_elements == 4
    for bad in ("tri45:+30:5", "quad:x", "sphere:3", "quad"):
        with pytest.raises(ValueError):
            parse_mesh_spec(bad)


# --- DMP sufficiency conditions ---------------------------------------------


def rect_mesh(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    m = len(xs)
    els = []
    for j in range(len(ys) - 1):
        for i in range(m - 1):
            a = j * m + i
            els.append([a, a + 1, a + m + 1, a + m])
    return Mesh(nodes, els, element_kind="quad")


def test_christie_hall_square_mesh():
    r = check_dmp_conditions(generate_structured_quad(11))
    assert r.christie_hall is True and r.overall_sufficient
    assert r.nonobtuse is None


def test_christie_hall_pair_values():
    assert christie_hall_holds(1, 1, 1, 1)
    assert not christie_hall_holds(1, 1, 0.5, 0.5)


def test_christie_hall_flat_rectangles():
    # h = 1, k = 0.5 everywhere: h1 h2 = 1 exceeds the bound built from k
    r = check_dmp_conditions(rect_mesh([0, 1, 2, 3], [0, 0.5, 1.0]))
    assert r.christie_hall is False
    assert r.christie_hall_offenders
    e, f, h1, h2, k1, k2 = r.christie_hall_offenders[0]
    assert (h1, h2, k1, k2) == (1.0, 1.0, 0.5, 0.5)


def test_christie_hall_not_applicable_to_skewed_quads():
    m = Mesh([[0, 0], [1, 0], [1.3, 1], [0.2, 1]], [[0, 1, 2, 3]], element_kind="quad")
    r = check_dmp_conditions(m)
    assert r.christie_hall is None and not r.overall_sufficient


def test_plus45_nonobtuse():
    r = check_dmp_conditions(generate_structured_triangular(10))
    assert r.nonobtuse is True and r.delaunay is True and r.overall_sufficient


def test_equilateral_mesh():
    s = np.sqrt(3) / 2
    m = Mesh([[0, 0], [1, 0], [2, 0], [0.5, s], [1.5, s]], [[0, 1, 3], [1, 4, 3], [1, 2, 4]])
    r = check_dmp_conditions(m)
    assert r.nonobtuse is True and r.obtuse_elements == []


def test_obtuse_triangle_from_file(tmp_path):
    path = tmp_path / "obtuse.mesh"
    path.write_text("nodes 3\n0 0\n1 0\n0.5 0.1\nelements 1 tri\n0 1 2\n")
    r = check_dmp_conditions(load_mesh(path))
    assert r.nonobtuse is False and r.obtuse_elements == [0]
    # the diametral circle of the long edge contains the apex
    assert r.vanselow is False and r.vanselow_offenders == [(0, 1)]
    assert not r.overall_sufficient
    assert "obtuse elements: [0]" in r.summary()


def test_non_delaunay_pair():
    # two obtuse triangles sharing the long diagonal of a kite
    m = Mesh([[0, 0], [1, -0.1], [2, 0], [1, 0.1]], [[0, 1, 3], [1, 2, 3]])
    r = check_dmp_conditions(m)
    assert r.delaunay is True
    m = Mesh([[0, 0], [1, -0.1], [2, 0], [1, 0.1]], [[0, 1, 2], [0, 2, 3]])
    r = check_dmp_conditions(m)
    assert r.delaunay is False and r.non_delaunay_edges == [(0, 2)]
    assert r.vanselow is False
