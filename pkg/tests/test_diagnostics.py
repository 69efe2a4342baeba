import csv

import numpy as np
import pytest

from tdnn.diagnostics import (
    CSV_HEADER,
    RunRecord,
    boundary_flux,
    complementarity_max,
    convergence_study,
    local_mass_residual,
    max_workers,
    min_and_violations,
    report_lines,
    run_case,
    verify_boundary_minimum,
    write_csv,
)
from tdnn.mesh import EXTERIOR, HOLE, build_edges, check_dmp_conditions, generate_structured_triangular
from tdnn.problems import ProblemSpec
from tdnn.qp import fix_variables
from tdnn.vms import schur_reduce


def test_min_and_violations():
    assert min_and_violations([1.0, -1e-13, -1e-3]) == (-1e-3, 1)
    assert min_and_violations([]) == (0.0, 0)
    assert min_and_violations([0.0, 2.0]) == (0.0, 0)


def test_boundary_flux_of_zero_field():
    m = generate_structured_triangular(5)
    e = build_edges(m)
    assert boundary_flux(m, e, np.zeros(e.n_edges), EXTERIOR) == 0.0
    assert boundary_flux(m, e, np.zeros(e.n_edges), HOLE) == 0.0
    with pytest.raises(ValueError):
        boundary_flux(m, e, np.zeros(e.n_edges), "top")
    with pytest.raises(ValueError):
        boundary_flux(m, e, np.zeros(3), EXTERIOR)


def test_local_residual_rejects_vms():
    res = run_case("vms", 1, "tri45:+45:4")
    with pytest.raises(ValueError):
        local_mass_residual(res.system, res.v)


def test_boundary_minimum_verdicts():
    unc = run_case("vms", 1, "tri45:+45:10")
    assert unc.record.min_concentration < 0
    bm = verify_boundary_minimum(unc.p, unc.mesh, unc.problem)
    assert not bm.passed and bm.boundary_min == 0.0
    con = run_case("vms", 1, "tri45:+45:10", nonneg=True)
    assert verify_boundary_minimum(con.p, con.mesh, con.problem).passed
    sink = ProblemSpec(unc.problem.diffusivity, lambda x, y: -1.0 + 0 * x, {EXTERIOR: 0.0})
    with pytest.raises(ValueError):
        verify_boundary_minimum(con.p, con.mesh, sink)


def test_complementarity_max():
    assert complementarity_max([0.0, 2.0], [-5.0, 0.0]) == 0.0
    assert complementarity_max([1.0, 2.0], [0.5, -0.25]) == 0.5
    assert complementarity_max([], []) == 0.0


@pytest.mark.parametrize("nonneg", [False, True])
def test_duality_gap_vanishes(nonneg):
    res = run_case("rt0", 1, "tri45:+45:10", nonneg=nonneg)
    sys = res.system
    qp = fix_variables(schur_reduce(sys), sys.fixed_dofs, sys.fixed_values).qp
    kinv_f = sys.kvv_factor.solve(sys.f_v)
    dual = qp.objective(res.p) + 0.5 * sys.f_v @ kinv_f
    v = res.v
    primal = 0.5 * v @ (sys.K_vv @ v) - v @ sys.f_v
    assert abs(dual + primal) <= 1e-8 * max(abs(primal), 1e-300)


def test_rt0_constrained_conservation():
    res = run_case("rt0", 2, "tri45:-45:10", nonneg=True)
    r = res.residual
    assert res.record.min_concentration >= 0
    assert r.max() <= 1e-10
    assert complementarity_max(res.p, r) <= 1e-9
    assert res.balance_identity_error() <= 1e-8
    # reduced multipliers are the negated residuals
    np.testing.assert_allclose(res.solutions["empty"].multipliers, -r, atol=1e-12)
    assert res.warm_start_gap <= 1e-8
    assert res.kkt.ok()
    # balance is lost somewhere: the unconstrained field had negatives
    assert res.p_unconstrained.min() < 0 and res.record.mass_residual_max > 1e-6


def test_hole_problem_fluxes():
    res = run_case("rt0", 3, "hole:1", nonneg=True)
    fl = res.record.boundary_fluxes
    assert set(fl) == {EXTERIOR, HOLE}
    # concentration 2 on the hole, 0 outside: mass enters at the hole, leaves outside
    assert fl[HOLE] < 0 < fl[EXTERIOR]
    assert res.balance_identity_error() <= 1e-8


def test_unconstrained_rt0_record():
    res = run_case("rt0", 1, "tri45:+45:6")
    rec = res.record
    assert rec.iters_empty is None and rec.time_qp_s is None
    assert rec.mass_residual_max <= 1e-10
    assert rec.total == 50 and rec.label == "rt0"


def test_box_bounds_respected():
    res = run_case("vms", 2, "tri45:-45:10", nonneg=True, box=(0.0, 0.1))
    assert res.p.min() >= 0 and res.p.max() <= 0.1 + 1e-15
    assert np.isclose(res.p.max(), 0.1)
    assert res.kkt.ok()


@pytest.mark.parametrize(
    "kw",
    [
        dict(method="fem"),
        dict(init="random"),
        dict(box=(0, 1)),
        dict(method="gls"),
        dict(method="vms", tau=0.3),
        dict(nonneg=True, box=(1, 0)),
    ],
)
def test_run_case_argument_errors(kw):
    args = dict(method="vms", problem=1, mesh="tri45:+45:4")
    args.update(kw)
    with pytest.raises(ValueError):
        run_case(**args)


def test_bounds_conflicting_with_boundary_data():
    with pytest.raises(ValueError):
        run_case("vms", 3, "hole:1", nonneg=True, box=(0.0, 1.0))


def test_anisotropy_breaks_dmp_on_sufficient_mesh():
    # right-angled -45 mesh meets every isotropic sufficient condition
    mesh = generate_structured_triangular(10, "minus45")
    assert check_dmp_conditions(mesh).overall_sufficient
    res = run_case("rt0", 2, mesh)
    assert res.record.violated > 0


def test_study_ordering_and_errors(monkeypatch):
    recs = convergence_study("vms", 1, "tri45:+45", [4, 7, 9], workers=2)
    assert [r.n for r in recs] == [4, 7, 9]
    assert [r.mesh for r in recs] == ["tri45:+45:4", "tri45:+45:7", "tri45:+45:9"]
    serial = convergence_study("vms", 1, "tri45:+45", [4, 7, 9], workers=1)
    assert [r.min_concentration for r in serial] == [r.min_concentration for r in recs]
    for bad in ([], [5, 4], [4, 4]):
        with pytest.raises(ValueError):
            convergence_study("vms", 1, "tri45:+45", bad)
    monkeypatch.setenv("TDNN_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("TDNN_THREADS", "0")
    with pytest.raises(ValueError):
        max_workers()


def test_csv_round_trip(tmp_path):
    recs = convergence_study("rt0", 3, "hole", [1], nonneg=True, workers=1)
    path = tmp_path / "out.csv"
    write_csv(recs, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == CSV_HEADER and len(rows) == 2
    row = dict(zip(CSV_HEADER, rows[1]))
    assert row["method"] == "rt0-nonneg" and row["n"] == "1"
    assert float(row["flux_interior"]) == recs[0].boundary_fluxes[HOLE]
    assert float(row["mass_res_total"]) == recs[0].mass_residual_total
    assert row["time_qp_s"] != ""
    write_csv(recs, path, with_times=False)
    row = dict(zip(CSV_HEADER, list(csv.reader(open(path)))[1]))
    assert row["time_assembly_s"] == row["time_qp_s"] == ""


def test_csv_blank_fields_for_vms(tmp_path):
    rec = run_case("vms", 1, "quad:5").record
    row = dict(zip(CSV_HEADER, rec.csv_row(with_times=False)))
    assert row["mass_res_max"] == row["flux_exterior"] == row["iters_empty"] == ""


def test_record_invariant():
    with pytest.raises(ValueError):
        RunRecord("vms", False, 1, "quad:3", 3, 0.0, violated=10, total=9)
    with pytest.raises(ValueError):
        RunRecord("vms", False, 1, "quad:3", 3, 0.0, violated=-1, total=9)


def test_report_lines():
    text = "\n".join(report_lines(run_case("rt0", 3, "hole:1", nonneg=True)))
    for key in ("identity error", "complementarity max", "kkt", "outflow hole", "dmp conditions"):
        assert key in text
    text = "\n".join(report_lines(run_case("vms", 1, "quad:5")))
    assert "boundary minimum" in text
