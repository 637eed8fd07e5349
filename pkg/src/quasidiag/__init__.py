"""Quasi-diagonal preconditioning of discrete negative-order norms."""

from .assembly import (
    BasisSet,
    assemble_L,
    assemble_M,
    assemble_R,
    assemble_mass_p1,
    assemble_stiffness,
    basis_set,
    boundary_vertices,
    make_p1_bubbles,
    p1_vertex_ids,
)
from .errors import (
    ConfigError,
    DegenerateSimplex,
    DimensionError,
    EigsNotConverged,
    EmptySpace,
    MeshError,
    NonManifoldMesh,
    SolverFailure,
    UnsupportedDimension,
)
from .experiments import (
    CSV_HEADER,
    ExperimentConfig,
    ExperimentRow,
    format_row,
    read_csv,
    run_experiment,
    write_csv,
)
from .mesh import (
    Facet,
    FacetTopology,
    MeshQuality,
    SimplicialMesh,
    boundary_measure,
    enumerate_facets,
    facet_measure,
    initial_mesh,
    load_mesh,
    mesh_quality,
    save_mesh,
    simplex_volume,
    validate_mesh,
)
from .precond import (
    BlockDiag,
    DiagonalScaling,
    Preconditioner,
    QuasiDiagonal,
    build_C,
    build_D,
    build_Dp,
    build_incidence,
    diagonal_preconditioner,
    quasi_diagonal_preconditioner,
)
from .refine import (
    adaptive_refine,
    corner_singularity,
    corner_singularity_gradient,
    dorfler_mark,
    h1_projection_deficit_norm_sq,
    h1_projection_indicator,
    nvb_refine,
    singular_indicator,
    uniform_refine,
    with_refinement_edges,
)
from .spectral import (
    GramOperator,
    SpectralReport,
    apply_A,
    dense_action,
    dense_condition_number,
    extreme_eigs,
    gram_operator,
    pencil_max_eig,
    solve_spd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
