"""Best rank-k approximation by a rank-preserving quasi-gradient flow.

The flow ``X' = (A - X) X^T X + X X^T (A - X)`` keeps the rank of ``X`` fixed
and decreases ``1/2 ||X - A||^2``; from almost every rank-k start it
converges to the truncated SVD of ``A``.
"""

from .equilibria import (
    EquilibriumReport,
    Mode,
    Witness,
    classify,
    enumerate_equilibria,
    equilibrium_residual,
    finite_difference_jacobian,
    linearization_apply,
    linearization_eigenvalues,
    linearization_matrix,
    match_to_equilibrium,
    quasi_commuting_residual,
)
from .errors import DegeneracyError, DomainError, PreconditionError, RankflowError, ShapeError
from .flow import (
    FactorPair,
    FlowProblem,
    factor_field_g,
    factor_field_h,
    gradient,
    lyapunov_rate,
    objective,
    vector_field,
)
from .frobenius import TangentPair, frob_norm, inner, pair_inner
from .integrator import (
    FlowConfig,
    Status,
    Trajectory,
    integrate,
    integrate_with_factors,
    numerical_rank,
    random_start,
    rk4_step,
)
from .manifold import (
    BasisIndex,
    quasi_project,
    tangent_adjoint,
    tangent_basis_at_diagonal,
    tangent_dim,
    tangent_map,
)
from .svd import (
    SingularSpectrum,
    generate_with_spectrum,
    has_distinct_positive_singular_values,
    random_spectrum,
    svd,
    svd_truncate,
)

__version__ = "0.1.0"
