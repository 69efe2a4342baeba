"""Minimum concentration and violation counts on the structured mesh families.

Writes one CSV per table into ``--out`` (default ``results/tables``):

    vms_p1_plus45.csv   VMS, problem 1, +45 triangles
    vms_p1_quad.csv     VMS, problem 1, quads
    rt0_p2_minus45.csv  RT0, problem 2, -45 triangles
    p2_plus45.csv       RT0 and VMS, problem 2, +45 triangles (aligned mesh)

Each table holds the unconstrained and the non-negative run per size.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from tdnn.diagnostics import run_case, write_csv


@dataclass
class TableConfig:
    out: Path = Path("results/tables")
    tri_sizes: list = field(default_factory=lambda: [10, 19, 28, 37, 46])
    quad_sizes: list = field(default_factory=lambda: [11, 21, 31])
    rt0_sizes: list = field(default_factory=lambda: [10, 19, 28, 37])
    aligned_sizes: list = field(default_factory=lambda: [10, 19, 28])
    constrained: bool = True


def table(method, problem, family, sizes, constrained):
    recs = []
    for n in sizes:
        for nonneg in (False, True) if constrained else (False,):
            t0 = time.perf_counter()
            rec = run_case(method, problem, f"{family}:{n}", nonneg=nonneg).record
            print(
                f"  {rec.label:<11} {rec.mesh:<14} min {rec.min_concentration: .4e}"
                f"  violated {rec.violated:>4}/{rec.total:<5} ({time.perf_counter() - t0:.1f}s)"
            )
            recs.append(rec)
    return recs


def main(cfg: TableConfig):
    cfg.out.mkdir(parents=True, exist_ok=True)
    jobs = {
        "vms_p1_plus45": [("vms", 1, "tri45:+45", cfg.tri_sizes)],
        "vms_p1_quad": [("vms", 1, "quad", cfg.quad_sizes)],
        "rt0_p2_minus45": [("rt0", 2, "tri45:-45", cfg.rt0_sizes)],
        "p2_plus45": [("rt0", 2, "tri45:+45", cfg.aligned_sizes), ("vms", 2, "tri45:+45", cfg.aligned_sizes)],
    }
    for name, parts in jobs.items():
        print(name)
        recs = [r for method, pid, fam, sizes in parts for r in table(method, pid, fam, sizes, cfg.constrained)]
        write_csv(recs, cfg.out / f"{name}.csv")


def parse_args(argv=None) -> TableConfig:
    cfg = TableConfig()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=cfg.out)
    for f in fields(TableConfig):
        if f.name.endswith("_sizes"):
            ap.add_argument(f"--{f.name.replace('_', '-')}", type=int, nargs="+", default=getattr(cfg, f.name))
    ap.add_argument("--unconstrained-only", action="store_true")
    a = ap.parse_args(argv)
    return TableConfig(
        out=a.out,
        tri_sizes=a.tri_sizes,
        quad_sizes=a.quad_sizes,
        rt0_sizes=a.rt0_sizes,
        aligned_sizes=a.aligned_sizes,
        constrained=not a.unconstrained_only,
    )


if __name__ == "__main__":
    main(parse_args())
