"""
Unique exact match and baseline deidentifiers
=============================================

Unique exact match is the share of the target's unique records that reappear
verbatim in the deidentified data.  The baselines show how it responds to
swapping and noisy histograms.
"""

# %%
import numpy as np

from deidbench import (DpHistogramParams, deid_dp_histogram, deid_swap, kmarginal_score,
                       unique_exact_match, KMarginalConfig)
from deidbench.synthetic import singleton_binary_fixture, unique_heavy_fixture

target = unique_heavy_fixture(1000, seed=6)
feats = list(target.feature_names)
for rate in (0.0, 0.25, 0.5, 1.0):
    uem = [unique_exact_match(target, deid_swap(target, rate, feats, seed)).percent for seed in range(5)]
    print(f"swap rate {rate:.2f}: mean UEM {np.mean(uem):.1f}%")

# %%
# Noisy histograms over three binary features.
small = singleton_binary_fixture(5000, seed=0)
for eps in (10.0, 1.0, 0.1):
    d = deid_dp_histogram(small, DpHistogramParams(eps, small.feature_names, seed=0))
    score = kmarginal_score(small, d, KMarginalConfig(k=3, exhaustive=True)).score
    print(f"epsilon {eps}: rows {d.row_count}, score {score}, UEM {unique_exact_match(small, d).percent:.0f}%")
