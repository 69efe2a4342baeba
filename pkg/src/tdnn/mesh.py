"""Meshes on the unit square, edge topology and geometric DMP checks.

Elements are stored counter-clockwise.  Boundary nodes carry one of two
tags: ``"exterior"`` for the outer boundary and ``"hole"`` for the
perimeter of an interior hole.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    MeshParseError,
    TopologyError,
    UnsupportedElementError,
)

EXTERIOR = "exterior"
HOLE = "hole"
TAGS = (EXTERIOR, HOLE)

_AREA_TOL = 1e-14


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_areas(nodes, elements):
    """Signed area of every element (shoelace formula)."""
    xy = nodes[elements]
    x, y = xy[..., 0], xy[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    boundary_markers: dict = field(default_factory=dict)
    element_kind: str = "triangle"

    def __post_init__(self):
        nodes = _readonly(self.nodes, float)
        elements = _readonly(self.elements, np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise TopologyError("nodes must be an (N, 2) array")
        nloc = {"triangle": 3, "quad": 4}.get(self.element_kind)
        if nloc is None:
            raise UnsupportedElementError(f"unknown element kind {self.element_kind!r}")
        if elements.ndim != 2 or elements.shape[1] != nloc:
            raise TopologyError(f"{self.element_kind} elements need {nloc} nodes each")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise TopologyError("element node index out of range")
        bad = np.flatnonzero(self.areas <= _AREA_TOL)
        if bad.size:
            raise TopologyError(f"non-positive area in elements {bad[:10].tolist()}")
        markers = dict(self.boundary_markers) if self.boundary_markers else {}
        if not markers:
            markers = {int(i): EXTERIOR for i in self.detected_boundary_nodes}
        for tag in markers.values():
            if tag not in TAGS:
                raise TopologyError(f"unknown boundary tag {tag!r}")
        object.__setattr__(self, "boundary_markers", markers)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @cached_property
    def areas(self):
        return signed_areas(self.nodes, self.elements)

    @cached_property
    def boundary_segments(self):
        """Boundary facets as (a, b) node pairs, traversed with the domain on the left."""
        a = self.elements.reshape(-1)
        b = np.roll(self.elements, -1, axis=1).reshape(-1)
        key = np.sort(np.stack([a, b], axis=1), axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        once = counts[inv.reshape(-1)] == 1
        return np.stack([a[once], b[once]], axis=1)

    @cached_property
    def detected_boundary_nodes(self):
        return np.unique(self.boundary_segments)

    def segment_tags(self, segments=None):
        """Tag of each boundary segment: hole when both ends are hole nodes."""
        seg = self.boundary_segments if segments is None else segments
        m = self.boundary_markers
        return [
            HOLE if m.get(int(a)) == HOLE and m.get(int(b)) == HOLE else EXTERIOR
            for a, b in seg
        ]

    @property
    def tags_present(self):
        return sorted(set(self.segment_tags()))


# ---------------------------------------------------------------------------
# generators


def _check_n(n):
    if int(n) != n or n < 2:
        raise ValueError(f"n_per_side must be an integer >= 2, got {n!r}")
    return int(n)


def _grid_nodes(m):
    t = np.linspace(0.0, 1.0, m)
    x, y = np.meshgrid(t, t)
    return np.stack([x.ravel(), y.ravel()], axis=1)


def _split_cells(i, j, m, orientation):
    a = j * m + i
    b = a + 1
    c = a + m + 1
    d = a + m
    if orientation == "plus45":
        t1, t2 = np.stack([a, b, c], 1), np.stack([a, c, d], 1)
    elif orientation == "minus45":
        t1, t2 = np.stack([a, b, d], 1), np.stack([b, c, d], 1)
    else:
        raise ValueError(f"orientation must be plus45 or minus45, got {orientation!r}")
    # interleave so each cell's pair stays adjacent
    return np.stack([t1, t2], axis=1).reshape(-1, 3)


def generate_structured_triangular(n_per_side, orientation="plus45"):
    """Unit square with (n-1)^2 cells, each cut along one diagonal.

    ``plus45`` cuts from lower-left to upper-right, ``minus45`` from
    lower-right to upper-left.
    """
    m = _check_n(n_per_side)
    j, i = np.divmod(np.arange((m - 1) ** 2), m - 1)
    elements = _split_cells(i, j, m, orientation)
    return Mesh(_grid_nodes(m), elements, element_kind="triangle")


def generate_structured_quad(n_per_side):
    m = _check_n(n_per_side)
    j, i = np.divmod(np.arange((m - 1) ** 2), m - 1)
    a = j * m + i
    elements = np.stack([a, a + 1, a + m + 1, a + m], axis=1)
    return Mesh(_grid_nodes(m), elements, element_kind="quad")


def generate_square_with_hole(refine=1):
    """Unit square minus the hole [4/9, 5/9]^2.

    The 9x9 macro grid (without its centre cell) is refined ``refine``
    times per direction and every cell is cut along the +45 diagonal.
    """
    if int(refine) != refine or refine < 1:
        raise ValueError(f"refine must be an integer >= 1, got {refine!r}")
    k = int(refine)
    m = 9 * k + 1
    lo, hi = 4 * k, 5 * k
    jj, ii = np.divmod(np.arange(m * m), m)
    inside = (ii > lo) & (ii < hi) & (jj > lo) & (jj < hi)
    new_id = -np.ones(m * m, dtype=np.int64)
    new_id[~inside] = np.arange(np.count_nonzero(~inside))
    # exact rational coordinates keep the hole perimeter on 4/9 and 5/9
    nodes = np.stack([ii[~inside] / (m - 1), jj[~inside] / (m - 1)], axis=1)

    cj, ci = np.divmod(np.arange((m - 1) ** 2), m - 1)
    keep = ~((ci >= lo) & (ci < hi) & (cj >= lo) & (cj < hi))
    elements = new_id[_split_cells(ci[keep], cj[keep], m, "plus45")]

    on_hole = (ii >= lo) & (ii <= hi) & (jj >= lo) & (jj <= hi) & ~inside
    on_outer = (ii == 0) | (jj == 0) | (ii == m - 1) | (jj == m - 1)
    markers = {int(new_id[g]): EXTERIOR for g in np.flatnonzero(on_outer)}
    markers.update({int(new_id[g]): HOLE for g in np.flatnonzero(on_hole)})
    return Mesh(nodes, elements, markers, element_kind="triangle")


# ---------------------------------------------------------------------------
# file I/O


def save_mesh(mesh, path):
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    kind = "tri" if mesh.element_kind == "triangle" else "quad"
    lines.append(f"elements {mesh.n_elements} {kind}")
    lines += [" ".join(str(int(v)) for v in e) for e in mesh.elements]
    lines.append(f"boundary {len(mesh.boundary_markers)}")
    lines += [f"{i} {t}" for i, t in sorted(mesh.boundary_markers.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_mesh(path):
    """Read the ASCII mesh format written by :func:`save_mesh`."""
    lines = list(_content_lines(Path(path).read_text(encoding="utf-8")))
    pos = 0

    def header(word, nfields):
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError(f"expected '{word}' section, got end of file")
        lineno, tok = lines[pos]
        if tok[0] != word or len(tok) != nfields:
            raise MeshParseError(f"expected '{word}' header", lineno)
        pos += 1
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad count {tok[1]!r}", lineno) from None
        if count < 0:
            raise MeshParseError("negative count", lineno)
        return lineno, tok, count

    def rows(count, width, conv, what):
        nonlocal pos
        out = []
        for _ in range(count):
            if pos >= len(lines):
                raise MeshParseError(f"unexpected end of file in {what} section")
            lineno, tok = lines[pos]
            if len(tok) != width:
                raise MeshParseError(f"expected {width} fields in {what} row", lineno)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshParseError(f"malformed {what} row", lineno) from None
            pos += 1
        return out

    _, _, n = header("nodes", 2)
    nodes = rows(n, 2, float, "node")
    lineno, tok, m = header("elements", 3)
    if tok[2] not in ("tri", "quad"):
        raise MeshParseError(f"element kind must be tri or quad, got {tok[2]!r}", lineno)
    kind = "triangle" if tok[2] == "tri" else "quad"
    elements = rows(m, 3 if kind == "triangle" else 4, int, "element")

    markers = {}
    if pos < len(lines):
        _, _, b = header("boundary", 2)
        for idx, tag in rows(b, 2, str, "boundary"):
            try:
                markers[int(idx)] = tag
            except ValueError:
                raise MeshParseError(f"bad node index {idx!r}") from None
    if pos < len(lines):
        raise MeshParseError("trailing content", lines[pos][0])

    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    elements = np.asarray(elements, dtype=np.int64).reshape(m, 3 if kind == "triangle" else 4)
    base = Mesh(nodes, elements, element_kind=kind)
    if not markers:
        return base
    for i, t in markers.items():
        if not 0 <= i < len(nodes):
            raise TopologyError(f"boundary node {i} out of range")
        if t not in TAGS:
            raise MeshParseError(f"unknown boundary tag {t!r}")
    merged = dict(base.boundary_markers)
    merged.update(markers)
    return Mesh(nodes, elements, merged, element_kind=kind)


def parse_mesh_spec(spec):
    """Build a mesh from a spec string: ``tri45:+45:19``, ``quad:21``, ``hole:2`` or ``file:path``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "tri45":
            orient, _, n = rest.partition(":")
            names = {"+45": "plus45", "-45": "minus45", "plus45": "plus45", "minus45": "minus45"}
            if orient not in names:
                raise ValueError(f"bad orientation {orient!r}")
            return generate_structured_triangular(int(n), names[orient])
        if kind == "quad":
            return generate_structured_quad(int(rest))
        if kind == "hole":
            return generate_square_with_hole(int(rest))
        if kind == "file":
            return load_mesh(rest)
    except ValueError as exc:
        raise ValueError(f"bad mesh spec {spec!r}: {exc}") from exc
    raise ValueError(f"bad mesh spec {spec!r}")


# ---------------------------------------------------------------------------
# edges


@dataclass(frozen=True, eq=False)
class EdgeTopology:
    """Global edges of a triangle mesh.

    Local edge ``i`` of an element is the edge opposite its vertex ``i``.
    The global normal of edge (a, b), a < b, is the tangent b - a turned
    clockwise; ``signs[k, i]`` is +1 when that normal points out of
    element ``k``.
    """

    edges: np.ndarray
    edge_of_element: np.ndarray
    signs: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    lengths: np.ndarray
    areas: np.ndarray

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def edge_elements(self):
        """For every edge, the (one or two) incident elements; -1 pads."""
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        fill = np.zeros(self.n_edges, dtype=np.int64)
        for k, row in enumerate(self.edge_of_element):
            for e in row:
                out[e, fill[e]] = k
                fill[e] += 1
        return out

    @cached_property
    def boundary_sign(self):
        """Sign turning each boundary edge DOF into outward flux."""
        flat_e = self.edge_of_element.reshape(-1)
        flat_s = self.signs.reshape(-1)
        s = np.zeros(self.n_edges)
        s[flat_e] = flat_s
        return s[self.boundary_edges]


def build_edges(mesh):
    if mesh.element_kind != "triangle":
        raise UnsupportedElementError("edge topology is built for triangle meshes only")
    el = mesh.elements
    first = el[:, [1, 2, 0]]
    second = el[:, [2, 0, 1]]
    lo = np.minimum(first, second).reshape(-1)
    hi = np.maximum(first, second).reshape(-1)
    edges, inv, counts = np.unique(
        np.stack([lo, hi], axis=1), axis=0, return_inverse=True, return_counts=True
    )
    inv = inv.reshape(-1)
    if counts.max() > 2:
        raise TopologyError("edge shared by more than two elements")
    edge_of_element = inv.reshape(-1, 3)
    signs = np.where(first < second, 1, -1).astype(np.int8)
    boundary = np.flatnonzero(counts == 1)
    markers = mesh.boundary_markers
    tags = tuple(
        HOLE if markers.get(int(a)) == HOLE and markers.get(int(b)) == HOLE else EXTERIOR
        for a, b in edges[boundary]
    )
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    return EdgeTopology(
        edges=_readonly(edges, np.int64),
        edge_of_element=_readonly(edge_of_element, np.int64),
        signs=_readonly(signs, np.int8),
        boundary_edges=_readonly(boundary, np.int64),
        boundary_tags=tags,
        lengths=_readonly(np.hypot(d[:, 0], d[:, 1]), float),
        areas=_readonly(mesh.areas, float),
    )


# ---------------------------------------------------------------------------
# discrete maximum principle sufficiency conditions (isotropic diffusion)


@dataclass(frozen=True)
class DmpReport:
    """Verdicts of the classical DMP sufficiency conditions.

    A verdict of ``None`` means the condition does not apply to this mesh.
    """

    nonobtuse: bool | None
    obtuse_elements: list
    christie_hall: bool | None
    christie_hall_offenders: list
    vanselow: bool | None
    vanselow_offenders: list
    delaunay: bool | None
    non_delaunay_edges: list
    overall_sufficient: bool

    def summary(self):
        def fmt(v):
            return "n/a" if v is None else str(v).lower()

        lines = [
            f"nonobtuse: {fmt(self.nonobtuse)}",
            f"christie_hall: {fmt(self.christie_hall)}",
            f"delaunay: {fmt(self.delaunay)}",
            f"vanselow: {fmt(self.vanselow)}",
            f"overall_sufficient: {str(self.overall_sufficient).lower()}",
        ]
        if self.obtuse_elements:
            lines.append(f"obtuse elements: {self.obtuse_elements}")
        if self.christie_hall_offenders:
            lines.append(f"christie_hall offending pairs: {self.christie_hall_offenders}")
        if self.non_delaunay_edges:
            lines.append(f"non-Delaunay edges: {self.non_delaunay_edges}")
        if self.vanselow_offenders:
            lines.append(f"vanselow offending boundary pairs: {self.vanselow_offenders}")
        return "\n".join(lines)


def _obtuse_elements(mesh, rtol=1e-12):
    xy = mesh.nodes[mesh.elements]
    # squared length of the side opposite each vertex
    sq = np.stack(
        [np.sum((xy[:, (i + 2) % 3] - xy[:, (i + 1) % 3]) ** 2, axis=1) for i in range(3)],
        axis=1,
    )
    total = sq.sum(axis=1, keepdims=True)
    # law of cosines: angle at i exceeds 90 deg iff a_i^2 > b^2 + c^2
    obtuse = sq - (total - sq) > rtol * total
    return np.flatnonzero(obtuse.any(axis=1)).tolist()


def _axis_aligned_rectangles(mesh, rtol=1e-12):
    xy = mesh.nodes[mesh.elements]
    scale = np.abs(xy).max() + 1.0
    for k in range(4):
        d = xy[:, (k + 1) % 4] - xy[:, k]
        if not np.all(np.minimum(np.abs(d[:, 0]), np.abs(d[:, 1])) <= rtol * scale):
            return None
    width = xy[..., 0].max(axis=1) - xy[..., 0].min(axis=1)
    height = xy[..., 1].max(axis=1) - xy[..., 1].min(axis=1)
    return width, height


def christie_hall_holds(h1, h2, k1, k2, rtol=1e-12):
    """Rectangle-pair condition: h1 h2 <= 2 max(k1^2, k2^2) and k1 k2 <= 2 max(h1^2, h2^2).

    The factor 2 reproduces the uniform-mesh band k/sqrt(2) <= h <= sqrt(2) k,
    so squares always pass.
    """
    c1 = h1 * h2 <= 2.0 * max(k1 * k1, k2 * k2) * (1 + rtol)
    c2 = k1 * k2 <= 2.0 * max(h1 * h1, h2 * h2) * (1 + rtol)
    return bool(c1 and c2)


def _christie_hall_offenders(mesh, width, height):
    a = mesh.elements.reshape(-1)
    b = np.roll(mesh.elements, -1, axis=1).reshape(-1)
    key = np.sort(np.stack([a, b], axis=1), axis=1)
    owner = np.repeat(np.arange(mesh.n_elements), 4)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, owner = key[order], owner[order]
    same = np.all(key[1:] == key[:-1], axis=1)
    pairs = [(int(owner[i]), int(owner[i + 1])) for i in np.flatnonzero(same)]
    pairs += [(e, e) for e in range(mesh.n_elements)]
    bad = []
    for e, f in pairs:
        h1, h2, k1, k2 = width[e], width[f], height[e], height[f]
        if not christie_hall_holds(h1, h2, k1, k2):
            bad.append((e, f, float(h1), float(h2), float(k1), float(k2)))
    return bad


def _non_delaunay_edges(mesh, topo, rtol=1e-10):
    bad = []
    xy = mesh.nodes
    for e, (k, l) in enumerate(topo.edge_elements):
        if l < 0:
            continue
        a, b = topo.edges[e]
        opp = [int(v) for v in mesh.elements[l] if v != a and v != b][0]
        pa, pb, pc = (xy[int(v)] for v in mesh.elements[k])
        # in-circle determinant; elements are counter-clockwise
        m = np.array([[*(p - xy[opp]), np.sum((p - xy[opp]) ** 2)] for p in (pa, pb, pc)])
        det = np.linalg.det(m)
        scale = np.max(np.abs(m)) ** 2 * np.max(np.abs(m[:, :2]))
        if det > rtol * scale:
            bad.append((int(a), int(b)))
    return bad


def _vanselow_offenders(mesh, rtol=1e-12):
    bad = []
    xy = mesh.nodes
    for a, b in mesh.boundary_segments:
        mid = 0.5 * (xy[a] + xy[b])
        r2 = np.sum((xy[a] - mid) ** 2)
        d2 = np.sum((xy - mid) ** 2, axis=1)
        d2[[a, b]] = np.inf
        if np.any(d2 < r2 * (1 - rtol)):
            bad.append((int(min(a, b)), int(max(a, b))))
    return sorted(bad)


def check_dmp_conditions(mesh):
    """Evaluate the non-obtuse, Christie-Hall and Vanselow conditions."""
    nonobtuse = vanselow = delaunay = christie = None
    obtuse, ch_bad, vs_bad, nd_bad = [], [], [], []
    if mesh.element_kind == "triangle":
        obtuse = _obtuse_elements(mesh)
        nonobtuse = not obtuse
        nd_bad = _non_delaunay_edges(mesh, build_edges(mesh))
        delaunay = not nd_bad
        vs_bad = _vanselow_offenders(mesh)
        vanselow = delaunay and not vs_bad
        overall = bool(nonobtuse or vanselow)
    else:
        rect = _axis_aligned_rectangles(mesh)
        if rect is not None:
            ch_bad = _christie_hall_offenders(mesh, *rect)
            christie = not ch_bad
        overall = bool(christie)
    return DmpReport(
        nonobtuse=nonobtuse,
        obtuse_elements=obtuse,
        christie_hall=christie,
        christie_hall_offenders=ch_bad,
        vanselow=vanselow,
        vanselow_offenders=vs_bad,
        delaunay=delaunay,
        non_delaunay_edges=nd_bad,
        overall_sufficient=overall,
    )
