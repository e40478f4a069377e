"""Quality and privacy metrics for deidentified tabular data."""

__version__ = "0.1.0"

from .baselines import DpHistogramParams, deid_dp_histogram, deid_identity, deid_subsample, deid_swap
from .dataset import (
    DataDictionary,
    Dataset,
    FeatureSpec,
    SubgroupSelector,
    filter_subgroup,
    load_dataset,
    load_dictionary,
    read_dataset,
    read_dictionary,
    select_features,
    write_dataset,
)
from .dispersal import (
    average_bin_size,
    compare_feature_dispersal,
    dispersal_bounds,
    dispersal_profile,
    dispersal_ratio,
    entropy,
    profile_step_bounds,
    uncertainty_coefficient,
)
from .errors import DeidBenchError, MetricError, ValidationError
from .fidelity import (
    KMarginalConfig,
    correlation_difference,
    equivalent_subsample,
    kmarginal_by_geography,
    kmarginal_by_group,
    kmarginal_score,
    univariate_report,
)
from .partition import bin_records, count_distinct_bins, density, total_variation
from .privacy import unique_exact_match
from .report import EvaluationReport, RunConfig, evaluate, load_config
from .structure import ConsistencyRule, consistency_check, load_rules, pca_compare
from .tasks import propensity, regression_metric
