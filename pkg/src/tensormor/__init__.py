"""Low-rank tensor formats and projection-based model order reduction.

The package covers dense tensor kernels, the CP/Tucker/TT formats with
rounding and rank diagnosis, POD and greedy subspace construction, affine
Galerkin reduced models with full offline/online separation, low-rank
solvers for tensor-structured equations, and regression of multivariate
functions from samples. ``tensormor.cli`` exposes the batch benchmark
driver.
"""

__version__ = "0.1.0"

from .core import (
    DenseTensor,
    Matricization,
    SvdResult,
    dematricize,
    lstsq,
    matricize,
    solve_spd,
    svd,
)
from .errors import (
    CapacityError,
    ConfigError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    NumericalBreakdownError,
    TensormorError,
    UnsupportedCoefficientError,
)
from .formats import (
    CPTensor,
    TTTensor,
    TuckerTensor,
    alpha_rank,
    cp_to_tt,
    hosvd,
    tt_add,
    tt_dot,
    tt_norm,
    tt_round,
    tt_scale,
    tt_svd,
)
from .greedy import (
    GreedyResult,
    TrainSet,
    affine_approximate,
    geim_functionals,
    geim_interpolate,
    strong_greedy,
    weak_greedy,
)
from .reduction import (
    ErrorReport,
    SnapshotSet,
    Subspace,
    pod,
    project,
    width_l2,
)
from .regression import (
    FeatureBasis,
    SampleSet,
    cp_als_fit,
    cross_validate,
    grid_project,
    predict,
)
from .rom import (
    AffineOperator,
    AffineVector,
    CoefficientFunction,
    ParameterDomain,
    ParametricLinearModel,
    ReducedModel,
    assemble,
    build_reduced,
    full_solve,
    residual_indicator,
    solve_reduced,
    stability_bounds_dense,
)
from .solver import (
    KroneckerOperator,
    SolveTrace,
    affine_rhs_cp,
    assemble_from_affine,
    cp_apply,
    greedy_rank_one,
    op_apply,
    truncated_richardson,
)
