"""
Dispersal profiles
==================

Adding a feature to a schema splits each bin of the partition.  The
dispersal ratio measures how much, and the uncertainty coefficient brackets
it from both sides.
"""

# %%
from deidbench import SubgroupSelector, dispersal_profile, dispersal_ratio
from deidbench.synthetic import chained_binary, excerpts_like, two_subgroup_fixture

people = excerpts_like(5000, seed=1)
r = dispersal_ratio(people, ["PUMA", "SEX"], "MSP")
print(f"ratio {r.ratio:.3f}  bins {r.bins_before} -> {r.bins_after}  u={r.stats.u:.3f}")
print(f"bounds [{r.lower_bound:.3f}, {r.upper_bound:.3f}]")

# %%
# Independent binary features double the bin count at every step.
grid = chained_binary(4)
names = list(grid.feature_names)
print([dispersal_ratio(grid, names[:k], names[k]).ratio for k in range(1, 4)])

# %%
# Two subgroups: one whose features copy each other and one whose
# features are independent.  Only the second disperses.
ds = two_subgroup_fixture(n_features=4)
profile = dispersal_profile(ds, ["X1", "X2", "X3", "X4"],
                            [SubgroupSelector.of(GROUP="dependent"),
                             SubgroupSelector.of(GROUP="independent")])
for curve in profile.curves:
    print(curve.selector, [p.dispersal for p in curve.points])
