"""Online Riemannian gradient descent for low-Tucker-rank tensor learning."""

from .errors import (
    CalibrationError,
    ConfigError,
    DataFormatError,
    DimensionError,
    DivergenceError,
    NonFiniteError,
    OrgradError,
    RankDeficientCoreError,
    ZeroTensorError,
)
from .tensor import (
    TuckerTensor,
    dematricize,
    dof,
    fro_distance,
    hosvd,
    hosvd_factored,
    materialize,
    matricize,
    mode_product,
    read_tensor,
    thin_svd,
    write_tensor,
)
from .covariates import DenseCovariate, EntryCovariate
from .manifold import (
    SpectralReport,
    TangentVector,
    incoherence,
    project_tangent,
    retract,
    spectral_report,
    spikiness,
)
from .glm import LossModel
from .sampling import (
    Observation,
    TruthSpec,
    draw_covariate,
    gen_truth,
    init_oracle_perturb,
    init_second_moment,
    stream,
    trial_rng,
)
from .learner import (
    Adaptive,
    Fixed,
    LearnerState,
    TrajectoryLog,
    offline_rgrad,
    orgrad_step,
    regret_explicit,
    regret_prediction,
    run,
    step_size_at,
)

__version__ = "0.1.0"
