"""Command-line front end: ``tdnn run | study | checkmesh``.

Exit codes: 0 success, 1 usage error, 2 solver error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .diagnostics import INIT_MODES, METHODS, convergence_study, report_lines, run_case, write_csv
from .errors import SolverError
from .mesh import check_dmp_conditions, parse_mesh_spec
from .vtk import rt0_centroid_flux, write_vtk

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    problem: int
    method: str
    mesh: str
    nonneg: bool = False
    box: tuple | None = None
    init: str = "empty"
    out_dir: Path = Path(".")
    tau: float | None = None

    def __post_init__(self):
        if self.box is not None and not self.nonneg:
            raise UsageError("--box requires --nonneg")
        if self.box is not None and self.box[0] > self.box[1]:
            raise UsageError("--box needs CMIN <= CMAX")
        if self.method == "gls" and self.tau is None:
            raise UsageError("--method gls requires --tau")
        if self.method != "gls" and self.tau is not None:
            raise UsageError("--tau applies to --method gls only")
        if self.tau is not None and self.tau < 0:
            raise UsageError("--tau must be non-negative")


def parse_sizes(text):
    """``10,19,28`` or ``10:73:9`` (inclusive stop) -> list of ints."""
    text = text.strip()
    if not text:
        raise UsageError("--sizes is empty")
    try:
        if ":" in text:
            parts = [int(x) for x in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            sizes = list(range(start, stop + 1, step))
        else:
            sizes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --sizes {text!r}") from None
    if not sizes:
        raise UsageError("--sizes selects no mesh sizes")
    return sizes


def _common(p):
    p.add_argument("--problem", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--nonneg", action="store_true", help="bound the concentration below by 0")
    p.add_argument("--box", nargs=2, type=float, metavar=("CMIN", "CMAX"), help="bounds cmin <= c <= cmax (needs --nonneg)")
    p.add_argument("--tau", type=float, help="stabilization weight, gls only")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser():
    parser = _Parser(prog="tdnn", description="Non-negative mixed FE solver for tensorial diffusion.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="solve one case; writes summary.csv, field.vtk, report.txt")
    _common(run)
    run.add_argument("--mesh", required=True, help="tri45:+45:19 | tri45:-45:19 | quad:21 | hole:2 | file:PATH")
    run.add_argument("--init", choices=INIT_MODES, default="empty", help="active-set start reported")

    study = sub.add_parser("study", help="mesh-refinement study; writes study.csv")
    _common(study)
    study.add_argument("--mesh", required=True, help="family without size: tri45:+45 | tri45:-45 | quad | hole")
    study.add_argument("--sizes", required=True, help="comma list or START:STOP[:STEP] (inclusive)")

    check = sub.add_parser("checkmesh", help="print the DMP sufficiency report of a mesh")
    check.add_argument("mesh")
    return parser


def _config(args):
    return RunConfig(
        problem=args.problem,
        method=args.method,
        mesh=args.mesh,
        nonneg=args.nonneg,
        box=tuple(args.box) if args.box else None,
        init=getattr(args, "init", "empty"),
        out_dir=args.out,
        tau=args.tau,
    )


def cmd_run(cfg):
    res = run_case(cfg.method, cfg.problem, cfg.mesh, nonneg=cfg.nonneg, box=cfg.box, init=cfg.init, tau=cfg.tau)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv([res.record], cfg.out_dir / "summary.csv", with_times=False)
    mesh = res.mesh
    if cfg.method == "rt0":
        write_vtk(
            cfg.out_dir / "field.vtk",
            mesh,
            cell_scalars={"concentration": res.p},
            cell_vectors={"flux": rt0_centroid_flux(mesh, res.edges, res.v)},
        )
    else:
        write_vtk(
            cfg.out_dir / "field.vtk",
            mesh,
            point_scalars={"concentration": res.p},
            point_vectors={"flux": res.v.reshape(-1, 2)},
        )
    (cfg.out_dir / "report.txt").write_text("\n".join(report_lines(res)) + "\n")
    print(f"{res.record.label} min {res.record.min_concentration:.6e} violated {res.record.violated}/{res.record.total}")
    return EXIT_OK


def cmd_study(cfg, sizes):
    family = cfg.mesh
    if family.count(":") > (1 if family.startswith("tri45") else 0) or family.startswith("file"):
        raise UsageError(f"study needs a generated mesh family without size, got {family!r}")
    recs = convergence_study(cfg.method, cfg.problem, family, sizes, nonneg=cfg.nonneg, box=cfg.box, tau=cfg.tau)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(recs, cfg.out_dir / "study.csv", with_times=True)
    for r in recs:
        print(f"{r.mesh:>16} min {r.min_concentration: .6e} violated {r.violated}/{r.total}")
    return EXIT_OK


def cmd_checkmesh(spec):
    print(check_dmp_conditions(parse_mesh_spec(spec)).summary())
    return EXIT_OK


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "checkmesh":
            return cmd_checkmesh(args.mesh)
        cfg = _config(args)
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_study(cfg, parse_sizes(args.sizes))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
