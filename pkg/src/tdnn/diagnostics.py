"""Run pipeline and the metrics reported for each run.

A run assembles one discretization, reduces it to a QP in the
concentration, solves it with or without bounds and collects the minimum
concentration, violation counts, mass-balance residuals and boundary
fluxes into a :class:`RunRecord`.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mesh import EXTERIOR, HOLE, TAGS, Mesh, build_edges, check_dmp_conditions, parse_mesh_spec
from .problems import ProblemSpec, builtin_problem
from .qp import active_set_solve, fix_variables, kkt_residuals, solve_unconstrained
from .rt0 import assemble_rt0, element_source
from .vms import VMS_TAU, assemble_vms, recover_flux, schur_reduce

VIOLATION_TOL = 1e-12
METHODS = ("rt0", "vms", "gls")
INIT_MODES = ("empty", "violated")
CSV_HEADER = (
    "method,problem,mesh,n,min_conc,violated,total,iters_empty,iters_warm,"
    "mass_res_max,mass_res_total,flux_exterior,flux_interior,time_assembly_s,time_qp_s"
).split(",")


@dataclass
class RunRecord:
    """One row of a results table.

    ``violated`` and ``total`` count nodes for VMS/GLS and elements for
    RT0.  Fields that do not apply to a run are ``None``.
    """

    method: str
    constrained: bool
    problem: int | str
    mesh: str
    n: int | None
    min_concentration: float
    violated: int
    total: int
    iters_empty: int | None = None
    iters_warm: int | None = None
    mass_residual_max: float | None = None
    mass_residual_total: float | None = None
    boundary_fluxes: dict = field(default_factory=dict)
    time_assembly_s: float | None = None
    time_qp_s: float | None = None

    def __post_init__(self):
        if not 0 <= self.violated <= self.total:
            raise ValueError("violated count must lie in [0, total]")

    @property
    def label(self):
        return f"{self.method}-nonneg" if self.constrained else self.method

    def csv_row(self, with_times=True):
        def num(x):
            return "" if x is None else format(float(x), ".17g")

        def integer(x):
            return "" if x is None else str(int(x))

        return [
            self.label,
            str(self.problem),
            self.mesh,
            integer(self.n),
            num(self.min_concentration),
            integer(self.violated),
            integer(self.total),
            integer(self.iters_empty),
            integer(self.iters_warm),
            num(self.mass_residual_max),
            num(self.mass_residual_total),
            num(self.boundary_fluxes.get(EXTERIOR)),
            num(self.boundary_fluxes.get(HOLE)),
            num(self.time_assembly_s if with_times else None),
            num(self.time_qp_s if with_times else None),
        ]


def write_csv(records, path, with_times=True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.csv_row(with_times))


# ---------------------------------------------------------------------------
# metrics


def min_and_violations(p, tol=VIOLATION_TOL):
    """(min p, number of entries strictly below -|tol|)."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        return 0.0, 0
    return float(p.min()), int(np.count_nonzero(p < -abs(tol)))


def local_mass_residual(sys, v):
    """Per-element r = K_pv v - f_p = (source - net outflow) of each element."""
    if sys.dof_meta.get("method") != "rt0":
        raise ValueError("local mass residuals are defined for RT0 systems only")
    v = np.asarray(v, dtype=float)
    if v.shape != (sys.n_flux,):
        raise ValueError(f"v has shape {v.shape}, expected ({sys.n_flux},)")
    return sys.K_pv @ v - sys.f_p


def boundary_flux(mesh, edges, v, tag):
    """Net flux leaving the domain through the boundary edges tagged ``tag``."""
    if tag not in TAGS:
        raise ValueError(f"unknown boundary tag {tag!r}")
    v = np.asarray(v, dtype=float)
    if v.shape != (edges.n_edges,):
        raise ValueError(f"v has shape {v.shape}, expected ({edges.n_edges},)")
    sel = np.array(edges.boundary_tags) == tag
    if sel.size == 0:
        return 0.0
    return float(np.sum(edges.boundary_sign[sel] * v[edges.boundary_edges[sel]]))


@dataclass(frozen=True)
class BoundaryMinimumReport:
    passed: bool
    min_value: float
    boundary_min: float


def verify_boundary_minimum(p, mesh, problem, tol=1e-10):
    """Discrete minimum principle: with f >= 0, min p >= min of the boundary data."""
    pts = np.concatenate([mesh.nodes, mesh.nodes[mesh.elements].mean(axis=1)])
    if np.any(np.asarray(problem.forcing(pts[:, 0], pts[:, 1])) < 0):
        raise ValueError("boundary-minimum check needs a non-negative forcing")
    nodes = mesh.detected_boundary_nodes
    bmin = np.inf
    for tag in set(mesh.boundary_markers.get(int(i), EXTERIOR) for i in nodes):
        sel = [i for i in nodes if mesh.boundary_markers.get(int(i), EXTERIOR) == tag]
        xy = mesh.nodes[sel]
        bmin = min(bmin, float(np.min(problem.dirichlet(tag, xy[:, 0], xy[:, 1]))))
    pmin = float(np.min(p))
    return BoundaryMinimumReport(pmin >= bmin - tol, pmin, bmin)


def complementarity_max(p, r):
    return float(np.max(np.abs(np.asarray(p) * np.asarray(r)))) if len(p) else 0.0


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class RunResult:
    record: RunRecord
    mesh: Mesh
    problem: ProblemSpec
    system: object
    p: np.ndarray
    v: np.ndarray
    p_unconstrained: np.ndarray
    solutions: dict = field(default_factory=dict)
    kkt: object = None
    edges: object = None
    residual: np.ndarray | None = None
    total_source: float | None = None

    @property
    def warm_start_gap(self):
        """max |p_empty - p_violated| over the two active-set starts."""
        if len(self.solutions) < 2:
            return 0.0
        a, b = (s.p for s in self.solutions.values())
        return float(np.max(np.abs(a - b))) if len(a) else 0.0

    def balance_identity_error(self):
        """|sum r - (source - net outflow)| for RT0 runs."""
        if self.residual is None:
            return None
        out = sum(self.record.boundary_fluxes.values())
        return abs(float(np.sum(self.residual)) - (self.total_source - out))


def _mesh_size(spec):
    try:
        return int(spec.split(":")[-1])
    except ValueError:
        return None


def run_case(
    method,
    problem,
    mesh,
    nonneg=False,
    box=None,
    init="empty",
    tau=None,
    mesh_label=None,
):
    """Solve one case end to end.

    ``problem`` is a built-in id or a :class:`ProblemSpec`; ``mesh`` is a
    spec string or a :class:`Mesh`.  With ``nonneg`` the concentration is
    bounded below by 0, or by ``box = (cmin, cmax)`` when given.  Both
    active-set starts are always run; ``init`` picks the one reported.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if init not in INIT_MODES:
        raise ValueError(f"init must be one of {INIT_MODES}")
    if box is not None and not nonneg:
        raise ValueError("a box needs a constrained solve")
    if method == "gls" and tau is None:
        raise ValueError("gls needs an explicit tau")
    if method != "gls" and tau is not None:
        raise ValueError("tau applies to gls only")

    pid = problem
    if not isinstance(problem, ProblemSpec):
        problem = builtin_problem(int(problem))
    else:
        pid = problem.name or "custom"
    if isinstance(mesh, Mesh):
        label = mesh_label or "custom"
    else:
        label = mesh_label or mesh
        mesh = parse_mesh_spec(mesh)

    t0 = time.perf_counter()
    edges = None
    if method == "rt0":
        edges = build_edges(mesh)
        sys = assemble_rt0(mesh, problem, edges)
    else:
        sys = assemble_vms(mesh, problem, VMS_TAU if method == "vms" else float(tau))
    red = fix_variables(schur_reduce(sys), sys.fixed_dofs, sys.fixed_values)
    p_unc = red.expand(solve_unconstrained(red.qp))
    t_asm = time.perf_counter() - t0

    solutions, kkt = {}, None
    p = p_unc
    t_qp = None
    if nonneg:
        lo, hi = (0.0, np.inf) if box is None else (float(box[0]), float(box[1]))
        if lo > hi:
            raise ValueError("box needs cmin <= cmax")
        if np.any(sys.fixed_values < lo - VIOLATION_TOL) or np.any(sys.fixed_values > hi + VIOLATION_TOL):
            raise ValueError("prescribed boundary values lie outside the bounds")
        bqp = red.qp.with_bounds(lo, hi)
        t1 = time.perf_counter()
        free_unc = p_unc[red.free]
        violated = np.flatnonzero((free_unc < lo) | (free_unc > hi))
        solutions["empty"] = active_set_solve(bqp, record_trace=False)
        solutions["violated"] = active_set_solve(bqp, init=violated, record_trace=False)
        t_qp = time.perf_counter() - t1
        chosen = solutions[init]
        kkt = kkt_residuals(bqp, chosen)
        p = red.expand(chosen.p)

    v = recover_flux(sys, p)
    mn, nviol = min_and_violations(p)
    rec = RunRecord(
        method=method,
        constrained=bool(nonneg),
        problem=pid,
        mesh=label,
        n=_mesh_size(label),
        min_concentration=mn,
        violated=nviol,
        total=len(p),
        iters_empty=solutions["empty"].iterations if solutions else None,
        iters_warm=solutions["violated"].iterations if solutions else None,
        time_assembly_s=t_asm,
        time_qp_s=t_qp,
    )
    result = RunResult(rec, mesh, problem, sys, p, v, p_unc, solutions, kkt, edges)
    if method == "rt0":
        r = local_mass_residual(sys, v)
        rec.mass_residual_max = float(np.max(np.abs(r)))
        rec.mass_residual_total = float(np.sum(r))
        rec.boundary_fluxes = {tag: boundary_flux(mesh, edges, v, tag) for tag in mesh.tags_present}
        result.residual = r
        result.total_source = float(np.sum(element_source(mesh, problem)))
    return result


def report_lines(result):
    """Human-readable report: KKT residuals, DMP verdict and balance identities."""
    rec = result.record
    lines = [
        f"method          {rec.label}",
        f"problem         {rec.problem}",
        f"mesh            {rec.mesh}",
        f"min conc        {rec.min_concentration:.10e}",
        f"violated        {rec.violated}/{rec.total}",
    ]
    if result.kkt is not None:
        lines += [f"iterations      empty {rec.iters_empty}, violated {rec.iters_warm}"]
        lines += [f"warm-start gap  {result.warm_start_gap:.3e}"]
        lines += result.kkt.lines()
    lines += ["", "dmp conditions (isotropic sufficiency)"]
    lines += ["  " + s for s in check_dmp_conditions(result.mesh).summary().splitlines()]
    if result.residual is not None:
        r = result.residual
        out = sum(rec.boundary_fluxes.values())
        lines += [
            "",
            "mass balance",
            f"  total source          {result.total_source:.10e}",
            f"  sum of residuals      {np.sum(r):.10e}",
            f"  max |residual|        {np.max(np.abs(r)):.10e}",
            f"  max residual          {np.max(r):.10e}",
        ]
        for tag, val in sorted(rec.boundary_fluxes.items()):
            lines.append(f"  outflow {tag:<13} {val:.10e}")
        lines += [
            f"  net outflow           {out:.10e}",
            f"  identity error        {result.balance_identity_error():.3e}",
            f"  complementarity max   {complementarity_max(result.p, r):.3e}",
        ]
    else:
        try:
            bm = verify_boundary_minimum(result.p, result.mesh, result.problem)
            lines += [
                "",
                "boundary minimum",
                f"  boundary data min     {bm.boundary_min:.10e}",
                f"  passed                {str(bm.passed).lower()}",
            ]
        except ValueError as exc:
            lines += ["", f"boundary minimum: skipped ({exc})"]
    return lines


# ---------------------------------------------------------------------------
# studies


def max_workers():
    env = os.environ.get("TDNN_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("TDNN_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def convergence_study(method, problem, family, sizes, nonneg=False, box=None, tau=None, workers=None):
    """One :class:`RunRecord` per size of the mesh family, in the order of ``sizes``.

    ``family`` is a mesh spec without its size, e.g. ``tri45:+45`` or ``quad``.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must not be empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly ascending")
    specs = [f"{family}:{n}" for n in sizes]
    workers = min(workers or max_workers(), len(specs))

    def one(spec):
        return run_case(method, problem, spec, nonneg=nonneg, box=box, tau=tau).record

    if workers == 1:
        return [one(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, specs))
