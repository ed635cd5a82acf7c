"""Ito-Taylor schemes for scalar mean-field SDEs with jumps.

Library layout:

- ``multiindex``: multi-index words and the hierarchical/remainder sets.
- ``random_driver``: reproducible Brownian/jump noise and path coupling.
- ``model``: problem definitions and the mean-field operators.
- ``schemes``: Euler, strong-1.0, weak-2.0 and compensated-Euler steps.
- ``meanfield``: interacting-particle law propagation, two-pass procedure.
- ``experiment``: convergence studies, rate fitting, table output, oracle.
"""

from .experiment import (
    ConfigError,
    DivergenceError,
    ErrorRow,
    ErrorTable,
    ExperimentConfig,
    emit,
    estimate_errors,
    fit_rate,
    load_config,
    moment_oracle_example1,
    parse_config,
    render,
)
from .meanfield import (
    LawTrajectory,
    ParticleEnsemble,
    PropagationError,
    propagate_law,
    propagate_target,
    propagate_targets,
)
from .model import (
    AffineMarkCoefficient,
    GenericCoefficient,
    GenericMarkCoefficient,
    LawPolyCoefficient,
    LawView,
    ModelCapabilityError,
    ModelSpec,
    TXFunc,
    compensated_drift,
    degenerate_law,
    example1,
    example2,
    identity_coefficient,
    make_model,
    mf_eval,
    op_L0,
    op_L0_tilde,
    op_L1,
    op_Lminus1,
    tx_const,
)
from .multiindex import (
    IndexSet,
    InvalidIndexError,
    MultiIndex,
    count_jumps,
    count_zeros,
    drop_first,
    drop_last,
    empty_index,
    length,
    remainder_set,
    strong_hierarchical_set,
    weak_hierarchical_set,
)
from .random_driver import (
    BrownianPath,
    JumpStream,
    MarkDistribution,
    PathBundle,
    StepContext,
    coarsen,
    coarsen_batch,
    rng_stream,
    sample_bundle,
    sample_dz_standalone,
    sample_jump_stream,
)
from .schemes import (
    REQUIREMENTS,
    SCHEMES,
    StepResult,
    compensated_euler_step,
    euler_step,
    step_ensemble,
    strong1_step,
    validate_scheme,
    weak2_step,
)

__version__ = "0.1.0"
