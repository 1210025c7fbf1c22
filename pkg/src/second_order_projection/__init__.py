"""Second-order projection method for eigenvalues in gaps of the essential spectrum."""

from second_order_projection.__main__ import main
from second_order_projection.matpoly import (
    GeneralPencil,
    HermitianMatrix,
    PseudospectraWeights,
    QuadraticPencil,
    Rect,
    SpectrumResult,
    companion_linearize,
    eigenvalues,
    evaluate,
    grid_sample,
    pseudospectrum_member,
    rank_one_distance_witness,
    spectral_function,
)
from second_order_projection.models import (
    ConvergenceRecord,
    Enclosure,
    PerturbationReport,
    RunConfig,
    SecularSolution,
)
from second_order_projection.operators import (
    ModelKind,
    OperatorModel,
    TruncationPair,
    build,
    build_pencil,
    build_shift_fixture,
    make_model,
)
from second_order_projection.oracle import schrodinger_fd, secular_function, secular_roots
from second_order_projection.pipeline import (
    convergence_study,
    enclosures,
    method_pipeline,
    nearest_eigenvalue,
    perturbation_experiment,
    tolerance_bound,
)

__version__ = "0.1.0"
__all__ = [
    "main",
    # Matrix polynomials
    "HermitianMatrix",
    "QuadraticPencil",
    "GeneralPencil",
    "SpectrumResult",
    "PseudospectraWeights",
    "Rect",
    "evaluate",
    "companion_linearize",
    "eigenvalues",
    "spectral_function",
    "pseudospectrum_member",
    "grid_sample",
    "rank_one_distance_witness",
    # Operators
    "ModelKind",
    "OperatorModel",
    "TruncationPair",
    "make_model",
    "build",
    "build_pencil",
    "build_shift_fixture",
    # Oracle
    "secular_function",
    "secular_roots",
    "schrodinger_fd",
    # Pipeline
    "nearest_eigenvalue",
    "enclosures",
    "convergence_study",
    "tolerance_bound",
    "perturbation_experiment",
    "method_pipeline",
    # Records
    "ConvergenceRecord",
    "Enclosure",
    "PerturbationReport",
    "SecularSolution",
    "RunConfig",
]
