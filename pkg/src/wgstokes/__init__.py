"""Stabilizer-free weak Galerkin solver for the 2D Stokes equations.

Velocity is approximated by independent interior and edge polynomials of
degree k on general polygonal cells (non-convex allowed), pressure by
discontinuous degree k-1 polynomials with zero mean.  Stability comes from
computing weak gradients and divergences at a raised polynomial degree
instead of adding penalty terms.
"""

from .assembly import (
    DofMap,
    GlobalSystem,
    SolveResult,
    WeakField,
    assemble_system,
    build_dof_map,
    solve_stokes,
    solve_system,
)
from .exceptions import (
    ConditioningError,
    DegenerateCellError,
    ProbeTooLargeError,
    SingularSystemError,
    WgStokesError,
)
from .mesh import (
    PolyMesh,
    ValidationReport,
    build_mesh,
    load_mesh_text,
    mesh_from_cells,
    nonconvex_l_mesh,
    polygon_geometry,
    save_mesh_text,
    uniform_triangle_mesh,
    validate_mesh,
)
from .polybasis import (
    CellBasis,
    EdgeBasis,
    QuadratureRule,
    cell_quadrature,
    dim_poly,
    edge_quadrature,
)
from .verification import (
    ErrorReport,
    ManufacturedSolution,
    RateTable,
    compute_errors,
    field_errors_against_projection,
    get_problem,
    probe_infsup,
    probe_norm_equivalence,
    project_exact_field,
    run_convergence,
    vortex_solution,
)
from .weakops import ElementFactory, ElementOperators, project_edge, raised_degree

__version__ = "0.1.0"
