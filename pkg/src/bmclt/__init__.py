"""Batch means estimation of MCMC variance with CLT-based confidence intervals."""

from bmclt.estimators import (
    BatchSchedule,
    BmEstimate,
    ConfidenceInterval,
    CubeRootPlusDelta,
    Fixed,
    Pow,
    SqrtN,
    batch_means_estimate,
    batch_schedule,
    ess,
    mcmcse,
    modified_batch_means_estimate,
    normal_cdf,
    normal_quantile,
    parse_rule,
    sample_autocovariance,
    variance_ci,
)

__version__ = "0.1.0"

__all__ = [
    "BatchSchedule",
    "BmEstimate",
    "ConfidenceInterval",
    "CubeRootPlusDelta",
    "Fixed",
    "Pow",
    "SqrtN",
    "batch_means_estimate",
    "batch_schedule",
    "ess",
    "mcmcse",
    "modified_batch_means_estimate",
    "normal_cdf",
    "normal_quantile",
    "parse_rule",
    "sample_autocovariance",
    "variance_ci",
]
