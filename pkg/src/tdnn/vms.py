"""Equal-order stabilized mixed formulation (VMS / GLS) and Schur reduction.

Flux unknowns are nodal vectors (DOF ``2*node + component``), the
concentration is nodal.  With stabilization weight ``tau`` (1/2 for VMS)
the element blocks are

    K_vv  <-  (1 - tau) (w; D^-1 v)
    K_pv  <-  -(q; div v) - tau (grad q; v)
    K_pp  <-  tau (grad q; D grad c)

and the right-hand sides are f_v <- -(w.n; c^p) on the boundary and
f_p <- -(q; f).  The global system is [[K_vv, K_pv^T], [K_pv, -K_pp]].

A box-indicator source (``problem.source_box``) is integrated exactly
against the shape functions by clipping (``source="exact"``);
``"sampled"`` evaluates it at the element quadrature points instead.

By default the boundary concentration is also pinned to c^p at the
boundary nodes (``dirichlet="strong"``); ``"weak"`` keeps only the
boundary integral and leaves every node free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._fem import SEG_POINTS, SEG_WEIGHTS, SpdFactor, clip_polygon, element_quadrature, polygon_quadrature
from .errors import DomainMismatchError
from .mesh import EXTERIOR
from .qp import QuadraticProgram

VMS_TAU = 0.5
DIRICHLET_MODES = ("strong", "weak")
SOURCE_MODES = ("exact", "sampled")
_NO_INT = np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    K_vv: sp.csr_matrix
    K_pv: sp.csr_matrix
    K_pp: sp.csr_matrix
    f_v: np.ndarray
    f_p: np.ndarray
    dof_meta: dict = field(default_factory=dict)
    # pressure DOFs pinned to prescribed values (strong Dirichlet)
    fixed_dofs: np.ndarray = field(default_factory=lambda: _NO_INT)
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_flux(self):
        return self.K_vv.shape[0]

    @property
    def n_pressure(self):
        return self.K_pv.shape[0]

    @cached_property
    def kvv_factor(self):
        return SpdFactor(self.K_vv)

    def block_matrix(self):
        return sp.bmat([[self.K_vv, self.K_pv.T], [self.K_pv, -self.K_pp]], format="csc")

    def solve_full(self):
        """Direct solve of the (unconstrained) block system; returns (v, p)."""
        A = self.block_matrix().tocsc()
        b = np.concatenate([self.f_v, self.f_p])
        x = np.zeros(len(b))
        pinned = self.n_flux + np.asarray(self.fixed_dofs, dtype=np.int64)
        x[pinned] = self.fixed_values
        keep = np.ones(len(b), dtype=bool)
        keep[pinned] = False
        rhs = b[keep] - A[:, pinned][keep] @ x[pinned]
        x[keep] = spla.spsolve(A[keep][:, keep], rhs)
        return x[: self.n_flux], x[self.n_flux :]


def _inv2(d):
    det = d[..., 0, 0] * d[..., 1, 1] - d[..., 0, 1] * d[..., 1, 0]
    inv = np.empty_like(d)
    inv[..., 0, 0] = d[..., 1, 1] / det
    inv[..., 1, 1] = d[..., 0, 0] / det
    inv[..., 0, 1] = -d[..., 0, 1] / det
    inv[..., 1, 0] = -d[..., 1, 0] / det
    return inv


def _element_blocks(coords, kind, D_at, tau=VMS_TAU, forcing=None):
    """Batched element blocks; shapes (M, 2n, 2n), (M, n, 2n), (M, n, n), (M, n)."""
    w, N, dN, xq = element_quadrature(coords, kind)
    m, nq = w.shape
    nloc = N.shape[1]
    D = np.asarray(D_at(xq[..., 0], xq[..., 1]), dtype=float).reshape(m, nq, 2, 2)
    Dinv = _inv2(D)

    mass = np.einsum("mq,qa,qb->mqab", w, N, N)
    kvv = (1.0 - tau) * np.einsum("mqab,mqkl->makbl", mass, Dinv).reshape(m, 2 * nloc, 2 * nloc)

    # -(N_a, d_k N_b) - tau (d_k N_a, N_b)
    kpv = -np.einsum("mq,qa,mqbk->mabk", w, N, dN) - tau * np.einsum(
        "mq,mqak,qb->mabk", w, dN, N
    )
    kpv = kpv.reshape(m, nloc, 2 * nloc)
    kpp = tau * np.einsum("mq,mqai,mqij,mqbj->mab", w, dN, D, dN)

    fp = None
    if forcing is not None:
        f = np.asarray(forcing(xq[..., 0], xq[..., 1]), dtype=float).reshape(m, nq)
        fp = -np.einsum("mq,qa,mq->ma", w, N, f)
    return kvv, kpv, kpp, fp


def element_matrices_vms(coords, kind, D_at, tau=VMS_TAU):
    """Local (K_vv, K_pv, K_pp) of one element; flux DOFs ordered (vx0, vy0, vx1, ...)."""
    coords = np.asarray(coords, dtype=float)[None]
    kvv, kpv, kpp, _ = _element_blocks(coords, kind, D_at, tau)
    return kvv[0], kpv[0], kpp[0]


def _shape_at(coords, kind, pts):
    """Shape values at physical points of an affine element, or None if not affine."""
    if kind == "triangle":
        origin, e1, e2 = coords[0], coords[1] - coords[0], coords[2] - coords[0]
    elif np.allclose(coords[0] + coords[2], coords[1] + coords[3], rtol=0, atol=1e-12 * np.ptp(coords)):
        origin, e1, e2 = coords[0], coords[1] - coords[0], coords[3] - coords[0]
    else:
        return None
    st = np.linalg.solve(np.column_stack([e1, e2]), (pts - origin).T).T
    s, t = st[:, 0], st[:, 1]
    if kind == "triangle":
        return np.stack([1 - s - t, s, t], axis=1)
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1)


def _exact_box_load(coords, kind, source_box, fp_loc):
    """Overwrite fp_loc (M, nloc) with -(N_a; value * 1_box) on every affine element."""
    *box, value = source_box
    out = fp_loc.copy()
    lo, hi = coords.min(axis=1), coords.max(axis=1)
    for k in range(len(coords)):
        if not (hi[k, 0] > box[0] and lo[k, 0] < box[1] and hi[k, 1] > box[2] and lo[k, 1] < box[3]):
            out[k] = 0.0
            continue
        pts, w = polygon_quadrature(clip_polygon(coords[k], box))
        if len(w) == 0:
            out[k] = 0.0
            continue
        N = _shape_at(coords[k], kind, pts)
        if N is not None:
            out[k] = -value * (w @ N)
    return out


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix(
        (vals.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=shape
    ).tocsr()


def check_domain(mesh, problem):
    missing = set(mesh.tags_present) - problem.tags
    if missing:
        raise DomainMismatchError(
            f"{problem.name or 'problem'} has no boundary data for mesh tags {sorted(missing)}"
        )


def dirichlet_nodes(mesh, problem):
    """Boundary node indices and their prescribed concentrations."""
    nodes = mesh.detected_boundary_nodes
    tags = np.array([mesh.boundary_markers.get(int(i), EXTERIOR) for i in nodes])
    values = np.zeros(len(nodes))
    for tag in np.unique(tags):
        sel = tags == tag
        xy = mesh.nodes[nodes[sel]]
        values[sel] = problem.dirichlet(str(tag), xy[:, 0], xy[:, 1])
    return nodes, values


def assemble_vms(mesh, problem, tau=VMS_TAU, dirichlet="strong", source="exact"):
    """Assemble the saddle system on a triangle or quad mesh."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if dirichlet not in DIRICHLET_MODES:
        raise ValueError(f"dirichlet must be one of {DIRICHLET_MODES}")
    if source not in SOURCE_MODES:
        raise ValueError(f"source must be one of {SOURCE_MODES}")
    check_domain(mesh, problem)
    el = mesh.elements
    m, nloc = el.shape
    nn = mesh.n_nodes
    coords = mesh.nodes[el]
    kvv, kpv, kpp, fp_loc = _element_blocks(
        coords, mesh.element_kind, problem.diffusivity, tau, problem.forcing
    )

    vdof = np.stack([2 * el, 2 * el + 1], axis=-1).reshape(m, 2 * nloc)
    K_vv = _scatter(
        np.repeat(vdof[:, :, None], 2 * nloc, 2), np.repeat(vdof[:, None, :], 2 * nloc, 1), kvv, (2 * nn, 2 * nn)
    )
    K_pv = _scatter(
        np.repeat(el[:, :, None], 2 * nloc, 2), np.repeat(vdof[:, None, :], nloc, 1), kpv, (nn, 2 * nn)
    )
    K_pp = _scatter(
        np.repeat(el[:, :, None], nloc, 2), np.repeat(el[:, None, :], nloc, 1), kpp, (nn, nn)
    )
    if problem.source_box is None:
        source = "sampled"
    elif source == "exact":
        fp_loc = _exact_box_load(coords, mesh.element_kind, problem.source_box, fp_loc)
    f_p = np.bincount(el.reshape(-1), weights=fp_loc.reshape(-1), minlength=nn)

    # -(w.n; c^p) over boundary segments, 2-point Gauss
    f_v = np.zeros(2 * nn)
    seg = mesh.boundary_segments
    tags = np.array(mesh.segment_tags(seg))
    xa, xb = mesh.nodes[seg[:, 0]], mesh.nodes[seg[:, 1]]
    t = xb - xa
    normal_len = np.stack([t[:, 1], -t[:, 0]], axis=1)  # outward normal times length
    for s, ws in zip(SEG_POINTS, SEG_WEIGHTS):
        xq = (1 - s) * xa + s * xb
        cp = np.zeros(len(seg))
        for tag in np.unique(tags):
            sel = tags == tag
            cp[sel] = problem.dirichlet(str(tag), xq[sel, 0], xq[sel, 1])
        for node_col, shape_val in ((0, 1 - s), (1, s)):
            contrib = -ws * shape_val * cp[:, None] * normal_len
            nodes = seg[:, node_col]
            for k in range(2):
                f_v += np.bincount(2 * nodes + k, weights=contrib[:, k], minlength=2 * nn)

    fixed, values = dirichlet_nodes(mesh, problem) if dirichlet == "strong" else (_NO_INT, np.zeros(0))
    return SaddleSystem(
        K_vv=K_vv,
        K_pv=K_pv,
        K_pp=K_pp,
        f_v=f_v,
        f_p=f_p,
        dof_meta={
            "method": "vms" if tau == VMS_TAU else "gls",
            "tau": tau,
            "dirichlet": dirichlet,
            "source": source,
            "flux": "nodal-vector",
            "pressure": "node",
            "element_kind": mesh.element_kind,
        },
        fixed_dofs=fixed,
        fixed_values=values,
    )


def schur_reduce(sys, chunk=512):
    """Reduced concentration QP: H = K_pv K_vv^-1 K_pv^T + K_pp, g = K_pv K_vv^-1 f_v - f_p.

    H is formed densely by block column solves against one factorization of K_vv.
    """
    fac = sys.kvv_factor
    n = sys.n_pressure
    kvp = sys.K_pv.T.tocsc()
    H = np.empty((n, n))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        X = fac.solve(kvp[:, start:stop].toarray())
        H[:, start:stop] = sys.K_pv @ X
    H += sys.K_pp.toarray()
    H = 0.5 * (H + H.T)
    g = sys.K_pv @ fac.solve(sys.f_v) - sys.f_p
    return QuadraticProgram(H, g)


def recover_flux(sys, p):
    """v = K_vv^-1 (f_v - K_pv^T p)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (sys.n_pressure,):
        raise ValueError(f"p has shape {p.shape}, expected ({sys.n_pressure},)")
    return sys.kvv_factor.solve(sys.f_v - sys.K_pv.T @ p)

