"""Quadrature, shape functions and a sparse SPD factorization."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidElementError, NotSPDError

# 3-point mid-edge rule (barycentric rows): exact for quadratics
TRI_BARY = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
TRI_WEIGHTS = np.full(3, 1.0 / 3.0)  # fractions of the element area

_G = 1.0 / np.sqrt(3.0)
QUAD_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
QUAD_WEIGHTS = np.ones(4)

# 2-point Gauss on [0, 1] for boundary segments
SEG_POINTS = np.array([0.5 - 0.5 * _G, 0.5 + 0.5 * _G])
SEG_WEIGHTS = np.array([0.5, 0.5])


def clip_polygon(poly, box):
    """Vertices of a convex polygon clipped to ``box = (x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = box
    planes = ((0, x0, 1), (0, x1, -1), (1, y0, 1), (1, y1, -1))
    pts = [tuple(p) for p in poly]
    for axis, c, sgn in planes:
        if not pts:
            break
        out = []
        for k in range(len(pts)):
            cur, nxt = pts[k], pts[(k + 1) % len(pts)]
            cin = sgn * (cur[axis] - c) >= 0
            nin = sgn * (nxt[axis] - c) >= 0
            if cin:
                out.append(cur)
            if cin != nin:
                t = (c - cur[axis]) / (nxt[axis] - cur[axis])
                out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
        pts = out
    return np.array(pts, dtype=float).reshape(-1, 2)


def polygon_area(pts):
    if len(pts) < 3:
        return 0.0
    xs, ys = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys))


def polygon_quadrature(pts):
    """Fan triangulation with the 3-point rule; returns (points (Q, 2), weights (Q,))."""
    if len(pts) < 3:
        return np.zeros((0, 2)), np.zeros(0)
    xs, ws = [], []
    for k in range(1, len(pts) - 1):
        tri = pts[[0, k, k + 1]]
        a = 0.5 * abs(
            (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1]) - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
        )
        xs.append(TRI_BARY @ tri)
        ws.append(a * TRI_WEIGHTS)
    return np.concatenate(xs), np.concatenate(ws)


def element_quadrature(coords, kind):
    """Quadrature data for a batch of elements.

    coords has shape (M, nloc, 2).  Returns ``(w, N, dN, xq)`` with
    w (M, Q) weights including the Jacobian, N (Q, nloc) shape values,
    dN (M, Q, nloc, 2) physical gradients and xq (M, Q, 2) points.
    """
    coords = np.asarray(coords, dtype=float)
    if kind == "triangle":
        x = coords
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=-1)  # (M, 2, 2) columns
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise InvalidElementError("degenerate or clockwise triangle")
        ref_grad = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        grad = np.einsum("aj,mij->mai", ref_grad, inv_t)  # (M, 3, 2)
        N = TRI_BARY
        dN = np.broadcast_to(grad[:, None], (len(x), 3, 3, 2))
        w = 0.5 * det[:, None] * TRI_WEIGHTS[None, :]
        xq = np.einsum("qa,mai->mqi", N, x)
        return w, N, dN, xq
    if kind == "quad":
        xi, eta = QUAD_POINTS[:, 0], QUAD_POINTS[:, 1]
        sx = np.array([-1.0, 1.0, 1.0, -1.0])
        sy = np.array([-1.0, -1.0, 1.0, 1.0])
        N = 0.25 * (1 + np.outer(xi, sx)) * (1 + np.outer(eta, sy))  # (Q, 4)
        dxi = 0.25 * sx[None, :] * (1 + np.outer(eta, sy))
        deta = 0.25 * sy[None, :] * (1 + np.outer(xi, sx))
        dref = np.stack([dxi, deta], axis=-1)  # (Q, 4, 2)
        jac = np.einsum("qaj,mai->mqij", dref, coords)  # dx_i / dxi_j
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise InvalidElementError("degenerate or clockwise quadrilateral")
        inv_t = np.linalg.inv(jac).transpose(0, 1, 3, 2)
        dN = np.einsum("qaj,mqij->mqai", dref, inv_t)
        w = det * QUAD_WEIGHTS[None, :]
        xq = np.einsum("qa,mai->mqi", N, coords)
        return w, N, dN, xq
    raise InvalidElementError(f"unknown element kind {kind!r}")


class SpdFactor:
    """Sparse LDL^T-style factorization (SuperLU with symmetric pivoting).

    Raises :class:`NotSPDError` unless every pivot is positive.
    """

    def __init__(self, matrix):
        a = sp.csc_matrix(matrix)
        if a.shape[0] != a.shape[1]:
            raise NotSPDError("matrix is not square")
        if a.shape[0] == 0:
            self._lu = None
            self.shape = a.shape
            return
        try:
            lu = spla.splu(
                a,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NotSPDError(f"factorization failed: {exc}") from exc
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise NotSPDError("factorization needed off-diagonal pivoting")
        if np.any(lu.U.diagonal() <= 0):
            raise NotSPDError("matrix has a non-positive pivot")
        self._lu = lu
        self.shape = a.shape

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is None:
            return rhs.copy()
        return self._lu.solve(rhs)
