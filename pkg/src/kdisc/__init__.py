"""Kernel discrepancies: MMD, HSIC and KSD with complete, incomplete and pooled statistics."""

from .cores import (
    CustomScore,
    DiagonalGaussian,
    IsotropicGaussian,
    PairedMMDCore,
    PairedSample,
    ScoreModel,
    ShiftedHSICCore,
    SteinCore,
    hsic_core,
    mmd_core,
    stein_gram,
    stein_kernel,
)
from .designs import (
    BDesign,
    DDesign,
    Design,
    LDesign,
    RDesign,
    UDesign,
    VDesign,
    XDesign,
    design_cardinality,
    enumerate_pairs,
    equal_blocks,
)
from .estimators import (
    StatisticRequest,
    StatisticResult,
    compute_statistic,
    generic_statistic,
    hsic_u,
    hsic_v,
    hsic_v_second_order,
    ksd_u,
    ksd_v,
    mmd_u,
    mmd_u_paired,
    mmd_v,
)
from .exceptions import (
    DataError,
    DegenerateNormalizerError,
    DesignError,
    DimensionError,
    KdiscError,
    OracleCapError,
    UnsupportedKernelError,
)
from .kernels import (
    Family,
    KernelSpec,
    MeanKernel,
    cross_partial_trace,
    evaluate,
    grad_x,
    gram,
    pairwise_distances,
)
from .pooling import (
    KernelCollection,
    PooledResult,
    adaptive_statistic,
    bandwidth_collection,
    distance_set,
    hsic_collection,
    median_bandwidth,
    pool,
    sigma,
)

__version__ = "0.1.0"
