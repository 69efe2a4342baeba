"""Non-negative mixed finite elements for tensorial diffusion.

RT0 and VMS discretizations are reduced to bound-constrained convex QPs in
the concentration and solved with a primal active-set method.
"""

from .diagnostics import RunRecord, convergence_study, run_case
from .errors import (
    DimensionTooLargeError,
    DomainMismatchError,
    InvalidElementError,
    MeshParseError,
    NoConvergenceError,
    NotSPDError,
    SingularDiffusivityError,
    SolverError,
    TdnnError,
    TopologyError,
    UnsupportedElementError,
)
from .mesh import (
    Mesh,
    build_edges,
    check_dmp_conditions,
    generate_square_with_hole,
    generate_structured_quad,
    generate_structured_triangular,
    load_mesh,
    parse_mesh_spec,
    save_mesh,
)
from .problems import ProblemSpec, builtin_problem
from .qp import QuadraticProgram, active_set_solve, brute_force_solve, kkt_residuals
from .rt0 import assemble_rt0
from .vms import assemble_vms, recover_flux, schur_reduce

__version__ = "0.1.0"
