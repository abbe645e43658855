"""Hierarchical, variance-optimal estimation of location parameters with missing data."""

from .bivariate import (
    BivariateConfig,
    BivariateMeans,
    change_score,
    change_score_cs,
    lambda0,
    mean_vector,
    nonignorable_shift,
)
from .errors import (
    DataError,
    EstimationError,
    HiermissError,
    NoCompleteCasesError,
    NoEventsError,
    ParameterError,
)
from .estimator import (
    HierarchicalResult,
    KnownCovariance,
    PluginCovariance,
    SubsampleEstimate,
    UpdatedEstimate,
    assemble_blocks,
    gain_system,
    hierarchical_estimate,
    subsample_estimate,
    update,
)
from .km import CensoredSample, StepCdf, pooled_variance_combine, product_limit, recursive_cdf
from .params import ParameterDef, register_moment
from .patterns import Dataset, MissingPattern, PatternPartition, children, estimable, partition
from .simulation import (
    MCAR,
    DeltaShift,
    MonotoneDropout,
    Population,
    StudySpec,
    convergence_probe,
    generate,
    run_study,
)

__version__ = "0.1.0"
