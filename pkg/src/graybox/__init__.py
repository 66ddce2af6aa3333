"""Gray-box re-parameterization of black-box LTI state-space models.

Given a fully parameterized state-space triple known only up to a change of
state coordinates, recover the physical parameters of an affine gray-box
structure together with the similarity transform linking the two, by either
a null-space search or a direct least-squares fit (or the former polished by
the latter).
"""

from .model import (
    AffineStructure,
    Dims,
    Instance,
    Residuals,
    StateSpace,
    apply_similarity,
    eval_structure,
    generate_instance,
    kron,
    residuals,
    unvec,
    vec,
)
from .nullspace import (
    BasePointError,
    EmptyNullspaceError,
    NullspaceSolution,
    SingularTransformError,
    solve_nullspace,
)
from .lsq import LsqSolution, solve_lsq
from .optim import (
    GradientCheck,
    InfeasibleStartError,
    LineSearchError,
    OptimConfig,
    OptimResult,
    bfgs,
    check_gradient,
    fd_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "AffineStructure",
    "Dims",
    "Instance",
    "Residuals",
    "StateSpace",
    "apply_similarity",
    "eval_structure",
    "generate_instance",
    "kron",
    "residuals",
    "unvec",
    "vec",
    "BasePointError",
    "EmptyNullspaceError",
    "NullspaceSolution",
    "SingularTransformError",
    "solve_nullspace",
    "LsqSolution",
    "solve_lsq",
    "GradientCheck",
    "InfeasibleStartError",
    "LineSearchError",
    "OptimConfig",
    "OptimResult",
    "bfgs",
    "check_gradient",
    "fd_gradient",
    "__version__",
]
