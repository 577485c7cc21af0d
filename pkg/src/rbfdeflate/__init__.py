"""Compactly supported RBF interpolation solved by GCR with a coarse-space
(deflation) correction."""
from ._backend import BACKEND, available_backends
from .assembly import GridIndex, SaddleSystem, apply_saddle, assemble, build_grid
from .coarse import BASIS_NAMES, CoarseBasisKind, CoarseSpace, build_coarse
from .core import (
    DegenerateInputError,
    InterpolationProblem,
    RadialBasis,
    SolutionVector,
    SparseMatrix,
    phi_eval,
    spmv,
)
from .image import (
    CenterSelection,
    RasterImage,
    evaluate_interpolant,
    extract_problem,
    load_image,
    psnr,
    reconstruct,
    save_image,
)
from .solvers import (
    BreakdownError,
    CoarseOperator,
    RankDeficiencyError,
    SolveReport,
    SolverConfig,
    build_coarse_operator,
    coarse_initial_guess,
    deflated_gcr_solve,
    direct_solve,
    gcr_solve,
    project,
)

__version__ = "0.1.0"
