"""Meshless GMLS/MKLS solvers for the transport equation on the unit sphere."""

from .errors import (
    ConditioningError,
    ConfigError,
    DataError,
    DomainError,
    FactorizationError,
    FormatError,
    StencilError,
    StepError,
    TransportError,
)
from .geometry import (
    Neighborhood,
    PointSet,
    SpherePoint,
    cap_neighbors,
    generate_phyllotaxis,
    geodesic_distance,
    load_point_set,
    save_point_set,
)
from .gmls import gmls_advection_row, gmls_gradient_shape_functions, gmls_shape_functions
from .mkls import mkls_advection_row, mkls_gradient_shape_functions, mkls_shape_functions
from .solver import (
    DiscreteOperators,
    RunReport,
    SimulationState,
    SolverConfig,
    assemble_operators,
    evaluate_at,
    run_simulation,
    system_matrix_bdf1,
    system_matrix_bdf2,
)
from .sparse import SparseMatrix, bicgstab, ilu0_apply, ilu0_factorize
from .testcases import deformational_case, get_case, l2_norm, solid_body_case, vortex_case

__version__ = "0.1.0"
