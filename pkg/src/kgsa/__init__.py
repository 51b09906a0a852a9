"""Kernel-based global sensitivity analysis.

Sensitivity indices built from maximum mean discrepancy and HSIC, with
estimators that share one interface across scalar, categorical,
distributional and functional outputs, plus Shapley aggregation and a
small battery of benchmark models.
"""

from .data import Categorical, Curve, DistSample, OutputColumn, OutputValue, SampleSet, Scalar
from .errors import (
    AssumptionViolatedError,
    CapabilityError,
    DegenerateKernelError,
    DegenerateOutputError,
    DomainError,
    IncompleteTableError,
    InfeasibleAlignmentError,
    InstabilityError,
    KgsaError,
    NotPsdError,
    ParseError,
    VariantMismatchError,
)
from .estimators import (
    EstimatorConfig,
    ModelFn,
    PickFreezeDesign,
    double_loop_mmd,
    hsic_stat,
    hsic_workspace,
    knn_closed_value,
    knn_complementary_value,
    pick_freeze_design,
    pick_freeze_mmd,
    rank_mmd,
    rank_permutation,
    saltelli_sobol,
)
from .kernels import (
    Dirac,
    DistributionEmbedding,
    DurrandeZeroMean,
    Gaussian,
    GlobalAlignment,
    Linear,
    ProductZeroMean,
    SobolevZeroMean,
    SteinZeroMean,
    WassersteinEmbedding,
    eval_kernel,
    global_alignment_kernel,
    gram,
    median_heuristic,
    mmd2,
    mmd_total,
    verify_zero_mean,
    w2_squared,
)
from .marginals import Empirical, MarginalDist, Normal, Uniform
from .sampling import GaussianCopula, IndependentMarginals, substream
from .shapley import (
    ShapleyReport,
    ValueFunction,
    hsic_shapley,
    mmd_shapley,
    shapley_exact,
    shapley_permutation,
)
from .subsets import (
    ClosedValueTable,
    IndexReport,
    categorical_one_vs_all,
    format_subset,
    mobius_combine,
    normalize,
    subset_of,
)

__version__ = "0.1.0"
