"""Generalized SR1 updates for convergent sequences of symmetric matrices."""

from .linalg import (
    ConvergenceError,
    LinAlgError,
    SingularMatrixError,
    SymMatrix,
    determinant,
    eigenvalues,
    frobenius_distance,
    frobenius_norm,
    lu_solve,
    operator_norm,
    sym_eigenvalues,
)
from .sr1 import (
    DegenerateDirectionError,
    SkipPolicy,
    Sr1State,
    UpdateOutcome,
    UpdateStatus,
    corollary_bound,
    curvature_cosine,
    error_constant,
    proposition_bound,
    span_bound,
    sr1_init,
    sr1_update,
    theorem_bound,
)
from .uli import (
    NotInSpanError,
    UliReport,
    Window,
    alpha_to_beta,
    beta_to_alpha,
    coefficient_bound,
    det_uli_score,
    eig_uli_score,
    example_sequence,
    gamma_bound,
    sequence_uli_profile,
    span_coefficients,
    uli_report,
)
from .rng import SeededRng, derive_seed
from .tracker import (
    ConstantProvider,
    EtaProfile,
    TrackReport,
    cyclic_direction,
    eta_profile,
    inverse_oracle,
    random_direction_oracle,
    secant_oracle,
    track,
)
from .experiments import PerturbedProvider, TableResult, emit_table, random_symmetric_gaussian, table1, table2
from .geodesic import (
    BFamily,
    ControlProblem,
    LinearizedFamily,
    TimeGrid,
    builtin_landmark_problem,
    cost_and_gradient,
    linearize_family,
    outer_minimize,
    shoot,
    update_b_family,
)

__version__ = "0.1.0"
