"""Lowest-order Raviart-Thomas mixed method on triangles.

Flux DOFs are total normal fluxes through the global edges (in the
global edge orientation); the concentration is constant per element.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ._fem import TRI_BARY, TRI_WEIGHTS, clip_polygon, polygon_area
from .errors import InvalidElementError, UnsupportedElementError
from .mesh import build_edges
from .vms import SaddleSystem, _inv2, check_domain


def _area(tri):
    (x0, y0), (x1, y1), (x2, y2) = tri
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def rt0_basis(tri, local_edge, sigma=1):
    """Basis function of the edge opposite vertex ``local_edge``.

    Returns ``(phi, div)`` where ``phi(x, y)`` gives the vector field
    sigma (x - p_i) / (2A) and ``div = sigma / A``.  Its total flux out of
    the element through edge ``local_edge`` is ``sigma``.
    """
    tri = np.asarray(tri, dtype=float)
    area = _area(tri)
    if area <= 0:
        raise InvalidElementError("degenerate or clockwise triangle")
    vertex = tri[local_edge]

    def phi(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return sigma * np.stack([x - vertex[0], y - vertex[1]], axis=-1) / (2.0 * area)

    return phi, sigma / area


def _local_mass(coords, signs, D_at):
    """Batched integral of phi_i . D^-1 phi_j with the 3-point rule; (M, 3, 3)."""
    a = 0.5 * (
        (coords[:, 1, 0] - coords[:, 0, 0]) * (coords[:, 2, 1] - coords[:, 0, 1])
        - (coords[:, 2, 0] - coords[:, 0, 0]) * (coords[:, 1, 1] - coords[:, 0, 1])
    )
    if np.any(a <= 0):
        raise InvalidElementError("degenerate or clockwise triangle")
    xq = np.einsum("qa,mai->mqi", TRI_BARY, coords)  # (M, Q, 2)
    D = np.asarray(D_at(xq[..., 0], xq[..., 1]), dtype=float).reshape(len(coords), 3, 2, 2)
    Dinv = _inv2(D)
    rel = xq[:, :, None, :] - coords[:, None, :, :]  # x_q - p_i, (M, Q, 3, 2)
    w = a[:, None] * TRI_WEIGHTS[None, :]
    m = np.einsum("mq,mqai,mqij,mqbj->mab", w, rel, Dinv, rel)
    m /= (4.0 * a * a)[:, None, None]
    return m * signs[:, :, None] * signs[:, None, :]


def local_mass_matrix_rt0(tri, D_at, signs=(1, 1, 1)):
    tri = np.asarray(tri, dtype=float)[None]
    return _local_mass(tri, np.asarray(signs, dtype=float)[None], D_at)[0]


def _clip_area(poly, box):
    """Area of a convex polygon clipped to an axis-aligned box."""
    return polygon_area(clip_polygon(poly, box))


def element_source(mesh, problem):
    """Integral of f over every element.

    A box-indicator source is integrated exactly by polygon clipping;
    anything else uses the 3-point rule.
    """
    coords = mesh.nodes[mesh.elements]
    if problem.source_box is not None:
        *box, value = problem.source_box
        lo = coords.min(axis=1)
        hi = coords.max(axis=1)
        hit = (hi[:, 0] > box[0]) & (lo[:, 0] < box[1]) & (hi[:, 1] > box[2]) & (lo[:, 1] < box[3])
        out = np.zeros(mesh.n_elements)
        for k in np.flatnonzero(hit):
            out[k] = value * _clip_area(coords[k], box)
        return out
    xq = np.einsum("qa,mai->mqi", TRI_BARY, coords)
    f = np.asarray(problem.forcing(xq[..., 0], xq[..., 1]), dtype=float).reshape(-1, 3)
    return mesh.areas * (f @ TRI_WEIGHTS)


def assemble_rt0(mesh, problem, edges=None):
    """Assemble [[K_vv, K_pv^T], [K_pv, 0]] with f_v from c^p and f_p = -(q; f)."""
    if mesh.element_kind != "triangle":
        raise UnsupportedElementError("RT0 is implemented on triangles only")
    check_domain(mesh, problem)
    if edges is None:
        edges = build_edges(mesh)
    m = mesh.n_elements
    ne = edges.n_edges
    coords = mesh.nodes[mesh.elements]
    signs = edges.signs.astype(float)
    loc = _local_mass(coords, signs, problem.diffusivity)
    eoe = edges.edge_of_element
    K_vv = sp.coo_matrix(
        (loc.reshape(-1), (np.repeat(eoe, 3, axis=1).reshape(-1), np.tile(eoe, (1, 3)).reshape(-1))),
        shape=(ne, ne),
    ).tocsr()
    K_pv = sp.coo_matrix(
        (-signs.reshape(-1), (np.repeat(np.arange(m), 3), eoe.reshape(-1))), shape=(m, ne)
    ).tocsr()
    K_pp = sp.csr_matrix((m, m))

    f_v = np.zeros(ne)
    be = edges.boundary_edges
    mid = 0.5 * (mesh.nodes[edges.edges[be, 0]] + mesh.nodes[edges.edges[be, 1]])
    tags = np.array(edges.boundary_tags)
    cp = np.zeros(len(be))
    for tag in np.unique(tags):
        sel = tags == tag
        cp[sel] = problem.dirichlet(str(tag), mid[sel, 0], mid[sel, 1])
    f_v[be] = -edges.boundary_sign * cp

    f_p = -element_source(mesh, problem)
    return SaddleSystem(
        K_vv=K_vv,
        K_pv=K_pv,
        K_pp=K_pp,
        f_v=f_v,
        f_p=f_p,
        dof_meta={"method": "rt0", "flux": "edge-flux", "pressure": "element", "element_kind": "triangle"},
    )
