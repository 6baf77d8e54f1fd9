"""Adaptively preconditioned gradient methods over block-structured
parameter spaces, plus a numerical audit suite for the trace inequalities
and convergence bounds that govern them."""

from .block_space import (
    BlockShape,
    Geometry,
    ProductPoint,
    axpy,
    primal_product_norm,
    product_dual_norm_sq,
    product_inner,
    total_dim,
)
from .errors import (
    AdprecError,
    InvalidConfig,
    NonFiniteIterate,
    NonPositiveDefinite,
    ShapeMismatch,
)
from .geometries import (
    GeometryDiagnostics,
    geom_accumulate,
    geom_diagnostics,
    geom_dual_norm,
    geom_init,
    geom_precondition,
    geom_selector,
)
from .optimizer import (
    IterationRecord,
    MomentumMode,
    MomentumState,
    OptimizerConfig,
    adprec_step,
    mu_schedule,
    run_replicates,
    run_trajectory,
)
from .problems import (
    NoiseKind,
    NoiseModel,
    Problem,
    make_problem,
    nu_k_analytic,
    sample_gradient,
)
from .psd_linalg import (
    SvdTriple,
    kron_precondition,
    msign,
    nuclear_norm,
    psd_power,
    random_psd,
    spectral_norm,
    trace_log_psd,
)

__version__ = "0.1.0"
