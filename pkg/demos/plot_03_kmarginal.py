"""
k-marginal scores and equivalent subsample
==========================================

The k-marginal score averages total variation distance over random k-feature
marginals and maps it to ``0..1000``.  The equivalent subsample expresses a
score as the fraction of the target that would score the same.
"""

# %%
from deidbench import KMarginalConfig, deid_subsample, equivalent_subsample, kmarginal_score
from deidbench.synthetic import discrete_fixture

target = discrete_fixture(5000, 8, seed=3)
cfg = KMarginalConfig(k=3, n_subsets=50, seed=0)

# %%
for fraction in (0.1, 0.5, 0.9):
    deid = deid_subsample(target, fraction, seed=1)
    score = kmarginal_score(target, deid, cfg)
    es = equivalent_subsample(target, score, trials=10, seed=0)
    print(f"subsample {fraction:.1f}: score {score.score}, equivalent subsample {es.es_percent:.1f}%")

# %%
# Small schemas can be scored exhaustively over every k-subset.
small = discrete_fixture(40, 5, seed=4)
print(kmarginal_score(small, deid_subsample(small, 0.5, seed=2),
                      KMarginalConfig(k=2, exhaustive=True)).score)
