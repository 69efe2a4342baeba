"""Bound-constrained convex quadratic programs.

    minimize  1/2 p^T H p - p^T g   subject to  lower <= p <= upper

with H symmetric positive definite.  The primal active-set method keeps
the inverse of the free block of H up to date with rank-one updates, so
each iteration costs O(n^2) after one initial factorization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.linalg import blas, lapack

from .errors import DimensionTooLargeError, NoConvergenceError, NotSPDError

MULT_TOL = 1e-10
FEAS_TOL = 1e-12
GRAD_RTOL = 1e-9
BRUTE_FORCE_MAX_DIM = 14
_REFRESH_EVERY = 200


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = len(g)
        lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)
        ).copy()
        upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)
        ).copy()
        if H.shape != (n, n):
            raise ValueError(f"H has shape {H.shape}, expected {(n, n)}")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(lower == np.inf) or np.any(upper == -np.inf) or np.isnan(lower).any() or np.isnan(upper).any():
            raise ValueError("bounds must be -inf <= lower, upper <= +inf with lower finite or -inf")
        for name, val in (("H", H), ("g", g), ("lower", lower), ("upper", upper)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return len(self.g)

    def with_bounds(self, lower=None, upper=None):
        return replace(self, lower=lower, upper=upper)

    def objective(self, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * p @ self.H @ p - p @ self.g


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Minimizer with its working set.

    ``sides[i]`` is -1 / +1 for an index held at its lower / upper bound and
    0 for a free index.  ``multipliers`` are zero on free indices.
    """

    p: np.ndarray
    active_set: np.ndarray
    sides: np.ndarray
    multipliers: np.ndarray
    iterations: int
    objective: float
    trace: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class KktReport:
    feasibility: float
    stationarity: float
    dual_feasibility: float
    complementarity: float
    stationarity_tol: float
    multiplier_tol: float

    def ok(self):
        return (
            self.feasibility <= FEAS_TOL
            and self.stationarity <= self.stationarity_tol
            and self.dual_feasibility <= self.multiplier_tol
            and self.complementarity <= self.stationarity_tol
        )

    def lines(self):
        return [
            f"kkt feasibility      {self.feasibility:.3e}",
            f"kkt stationarity     {self.stationarity:.3e} (tol {self.stationarity_tol:.3e})",
            f"kkt dual feasibility {self.dual_feasibility:.3e}",
            f"kkt complementarity  {self.complementarity:.3e}",
            f"kkt ok               {str(self.ok()).lower()}",
        ]


@dataclass(frozen=True, eq=False)
class FixedReduction:
    """QP on the free indices after pinning ``fixed`` to ``values``.

    The reduced objective differs from the full one by a constant, so
    minimizers correspond one to one through :meth:`expand`.
    """

    qp: QuadraticProgram
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n_full: int

    def expand(self, p_free):
        p = np.empty(self.n_full)
        p[self.free] = p_free
        p[self.fixed] = self.values
        return p


def fix_variables(qp, fixed, values):
    """Eliminate ``p[fixed] = values``; bounds of the kept indices carry over."""
    fixed = np.asarray(fixed, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), fixed.shape).copy()
    keep = np.ones(qp.n, dtype=bool)
    keep[fixed] = False
    free = np.flatnonzero(keep)
    g = qp.g[free] - qp.H[np.ix_(free, fixed)] @ values
    red = QuadraticProgram(qp.H[np.ix_(free, free)], g, qp.lower[free], qp.upper[free])
    return FixedReduction(red, free, fixed, values, qp.n)


def _cho(H):
    try:
        return sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"matrix is not positive definite: {exc}") from exc


def solve_unconstrained(qp):
    """Stationary point of the objective: H p = g."""
    if qp.n == 0:
        return np.zeros(0)
    return sla.cho_solve(_cho(qp.H), qp.g, check_finite=False)


def _multipliers(qp, p, sides):
    r = qp.H @ p - qp.g
    lam = np.zeros(qp.n)
    lam[sides < 0] = r[sides < 0]
    lam[sides > 0] = -r[sides > 0]
    return lam


def _grad_scale(qp):
    return 1.0 + (np.max(np.abs(qp.g)) if qp.n else 0.0)


def _bound_of(qp, sides):
    return np.where(sides < 0, qp.lower, np.where(sides > 0, qp.upper, 0.0))


class _FreeInverse:
    """Inverse of H restricted to a changing free index set.

    Stored as a full n x n array that is zero outside the free rows and
    columns, so rank-one updates run in place without re-indexing.
    """

    def __init__(self, H, free):
        self.H = H
        self.n = H.shape[0]
        self.reset(free)

    def reset(self, free):
        self.mask = np.zeros(self.n, dtype=bool)
        self.mask[np.asarray(free, dtype=np.int64)] = True
        self.M = np.zeros((self.n, self.n), order="F")
        idx = self.idx
        if len(idx):
            c, info = lapack.dpotrf(self.H[np.ix_(idx, idx)], lower=1)
            if info != 0:
                raise NotSPDError("free block of H is not positive definite")
            inv, info = lapack.dpotri(c, lower=1)
            if info != 0:
                raise NotSPDError("free block of H is singular")
            inv = np.tril(inv) + np.tril(inv, -1).T
            self.M[np.ix_(idx, idx)] = inv
        self.updates = 0

    @property
    def idx(self):
        return np.flatnonzero(self.mask)

    def remove(self, j):
        col = self.M[:, j].copy()
        self.M = blas.dger(-1.0 / col[j], col, col, a=self.M, overwrite_a=True)
        self.M[j, :] = 0.0
        self.M[:, j] = 0.0
        self.mask[j] = False
        self._tick()

    def add(self, j):
        b = np.where(self.mask, self.H[:, j], 0.0)
        u = self.M @ b
        s = self.H[j, j] - b @ u
        if not s > 0:
            self.mask[j] = True
            self.reset(self.idx)
            return
        self.M = blas.dger(1.0 / s, u, u, a=self.M, overwrite_a=True)
        self.M[:, j] = -u / s
        self.M[j, :] = -u / s
        self.M[j, j] = 1.0 / s
        self.mask[j] = True
        self._tick()

    def _tick(self):
        self.updates += 1
        if self.updates >= _REFRESH_EVERY:
            self.reset(self.idx)

    def solve(self, rhs_full):
        """Solve H_FF x = rhs_full[F]; returns x."""
        return (self.M @ np.where(self.mask, rhs_full, 0.0))[self.mask]


def _initial_point(qp, init):
    p_unc = solve_unconstrained(qp)
    sides = np.zeros(qp.n, dtype=np.int8)
    if init is not None:
        for i in np.unique(np.asarray(list(init), dtype=np.int64)):
            if not 0 <= i < qp.n:
                raise IndexError(f"initial active index {i} out of range")
            lo, up = qp.lower[i], qp.upper[i]
            if np.isfinite(lo) and (not np.isfinite(up) or abs(p_unc[i] - lo) <= abs(p_unc[i] - up)):
                sides[i] = -1
            elif np.isfinite(up):
                sides[i] = 1
            else:
                raise ValueError(f"index {i} has no finite bound to activate")
    p = np.clip(p_unc, qp.lower, qp.upper)
    p[sides < 0] = qp.lower[sides < 0]
    p[sides > 0] = qp.upper[sides > 0]
    return p, sides


def active_set_solve(qp, init=None, max_iter=None, record_trace=True):
    """Primal active-set method for the bound-constrained QP.

    ``init`` is an optional iterable of indices placed in the initial
    working set (at their nearer finite bound).  The starting point is the
    unconstrained minimizer clamped to the bounds.  One constraint enters
    or leaves per iteration; blocking ties go to the smallest index and the
    most negative multiplier is released first.  With ``record_trace``
    the objective after every iteration is kept in ``trace``.
    """
    n = qp.n
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    p, sides = _initial_point(qp, init)
    H, g = qp.H, qp.g
    inv = _FreeInverse(H, np.flatnonzero(sides == 0))
    tol_mult = MULT_TOL * _grad_scale(qp)
    trace = [qp.objective(p)] if record_trace else []
    at_minimum = False
    iterations = 0
    # H @ (p on the working set, 0 elsewhere), updated one column at a time
    h_fixed = H @ np.where(sides != 0, p, 0.0)

    while True:
        if not at_minimum:
            rhs = g - h_fixed
            free = inv.idx
            target = inv.solve(rhs)
            d = target - p[free]
            alpha, block = 1.0, -1
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.full(len(free), np.inf)
                neg = d < 0
                pos = d > 0
                steps[neg] = (qp.lower[free][neg] - p[free][neg]) / d[neg]
                steps[pos] = (qp.upper[free][pos] - p[free][pos]) / d[pos]
            steps = np.maximum(steps, 0.0)
            if len(steps) and steps.min() < 1.0:
                smin = steps.min()
                cand = free[steps == smin]
                block = int(cand.min())
                alpha = smin
            if block < 0:
                p[free] = target
                at_minimum = True
            else:
                p[free] += alpha * d
                np.clip(p, qp.lower, qp.upper, out=p)
                side = -1 if d[np.flatnonzero(free == block)[0]] < 0 else 1
                sides[block] = side
                p[block] = qp.lower[block] if side < 0 else qp.upper[block]
                h_fixed += H[:, block] * p[block]
                inv.remove(block)
            iterations += 1
            if record_trace:
                trace.append(qp.objective(p))
        else:
            lam = _multipliers(qp, p, sides)
            active = np.flatnonzero(sides != 0)
            if active.size == 0 or lam[active].min() >= -tol_mult:
                break
            worst = lam[active].min()
            j = int(active[lam[active] == worst].min())
            sides[j] = 0
            h_fixed -= H[:, j] * p[j]
            inv.add(j)
            at_minimum = False
            iterations += 1
            if record_trace:
                trace.append(qp.objective(p))
        if iterations > max_iter:
            raise NoConvergenceError(f"active-set method exceeded {max_iter} iterations")

    # polish the free block with a fresh factorization
    free = np.flatnonzero(sides == 0)
    if free.size:
        fixed = np.where(sides != 0, p, 0.0)
        rhs = (g - H @ fixed)[free]
        p[free] = sla.cho_solve(_cho(H[np.ix_(free, free)]), rhs, check_finite=False)
        p = np.clip(p, qp.lower, qp.upper)
    lam = _multipliers(qp, p, sides)
    return QpSolution(
        p=p,
        active_set=np.flatnonzero(sides != 0),
        sides=sides.copy(),
        multipliers=lam,
        iterations=iterations,
        objective=float(qp.objective(p)),
        trace=tuple(trace),
    )


def brute_force_solve(qp):
    """Global minimizer by enumerating every free/lower/upper pattern.

    Intended as an independent test oracle for small problems.
    """
    n = qp.n
    if n > BRUTE_FORCE_MAX_DIM:
        raise DimensionTooLargeError(f"brute force limited to n <= {BRUTE_FORCE_MAX_DIM}, got {n}")
    H, g, lo, up = qp.H, qp.g, qp.lower, qp.upper
    options = [
        [s for s, b in ((-1, lo[i]), (1, up[i])) if np.isfinite(b)] for i in range(n)
    ]
    best = None
    best_obj = np.inf
    for mask in range(1 << n):
        fixed_idx = [i for i in range(n) if mask >> i & 1]
        if any(not options[i] for i in fixed_idx):
            continue
        free = np.array([i for i in range(n) if not mask >> i & 1], dtype=np.int64)
        fixed = np.array(fixed_idx, dtype=np.int64)
        if fixed_idx:
            combos = np.array(list(itertools.product(*(options[i] for i in fixed_idx))), dtype=np.int8)
        else:
            combos = np.zeros((1, 0), dtype=np.int8)
        P = np.zeros((len(combos), n))
        if len(fixed_idx):
            P[:, fixed] = np.where(combos < 0, lo[fixed], up[fixed])
        if free.size:
            rhs = g[free][:, None] - H[np.ix_(free, fixed)] @ P[:, fixed].T
            P[:, free] = np.linalg.solve(H[np.ix_(free, free)], rhs).T
        feas = np.all((P >= lo - FEAS_TOL) & (P <= up + FEAS_TOL), axis=1)
        if not feas.any():
            continue
        objs = 0.5 * np.einsum("ki,ij,kj->k", P, H, P) - P @ g
        objs[~feas] = np.inf
        k = int(np.argmin(objs))
        if objs[k] < best_obj:
            best_obj = objs[k]
            sides = np.zeros(n, dtype=np.int8)
            if len(fixed_idx):
                sides[fixed] = combos[k]
            best = (P[k].copy(), sides)
    p, sides = best
    return QpSolution(
        p=p,
        active_set=np.flatnonzero(sides != 0),
        sides=sides,
        multipliers=_multipliers(qp, p, sides),
        iterations=0,
        objective=float(qp.objective(p)),
    )


def kkt_residuals(qp, sol):
    """Largest violation in each group of KKT conditions."""
    p = np.asarray(sol.p, dtype=float)
    sides = np.asarray(sol.sides)
    if p.shape != (qp.n,) or sides.shape != (qp.n,):
        raise ValueError("solution does not match the problem dimension")
    viol = np.maximum(np.maximum(qp.lower - p, p - qp.upper), 0.0)
    r = qp.H @ p - qp.g
    free = sides == 0
    act = ~free
    lam = np.where(sides < 0, r, -r)
    bound = _bound_of(qp, sides)
    return KktReport(
        feasibility=float(viol.max(initial=0.0)),
        stationarity=float(np.abs(r[free]).max(initial=0.0)),
        dual_feasibility=float(np.maximum(-lam[act], 0.0).max(initial=0.0)),
        complementarity=float(np.abs(lam[act] * (p[act] - bound[act])).max(initial=0.0)),
        stationarity_tol=GRAD_RTOL * _grad_scale(qp),
        multiplier_tol=MULT_TOL * _grad_scale(qp),
    )
