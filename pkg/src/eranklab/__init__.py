"""Effective-rank laboratory for shallow random-feature PDE solvers.

Quantifies training difficulty of shallow collocation solvers through the
spectrum of the training kernel and reproduces the effect of two
initialization levers on it: partition of unity (more cells) and variance
scaling (wider inner-weight range).
"""

from .features import (
    Activation,
    OperatorSpec,
    RandomFeatureModel,
    basis_matrix,
    get_activation,
    halfcell_spectral_gap,
    init_model,
    kernel_ga,
    kernel_gw,
    uniform_grid,
)
from .linalg import (
    SpectralDecomposition,
    effective_rank,
    least_squares_solve,
    singular_values,
    sym_eigendecomp,
)
from .partition import Partition, PartitionKind, psi_a, psi_b, psi_b_d1, psi_b_d2, uniform_partition
from .problems import (
    PROBLEMS,
    Problem,
    burgers_steady1d,
    elliptic_ritz1d,
    error_metrics,
    helmholtz1d,
    helmholtz2d,
    regression,
    regression_target,
)
from .training import (
    DiagToyResult,
    DivergenceError,
    KernelSnapshot,
    TrainConfig,
    TrainingRecord,
    diag_toy_run,
    gd_train,
    kernel_snapshot,
    make_spectrum,
    pinn_loss_grad,
    rfm_solve,
    ritz_loss_grad,
    supervised_loss_grad,
)

__version__ = "0.1.0"
