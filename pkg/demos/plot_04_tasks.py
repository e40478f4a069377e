"""
Propensity and subgroup regression
==================================

Propensity measures how well a bin-frequency classifier separates target
from deidentified records.  Regression compares per-group trend lines and
the column-normalized joint distribution of two ordered features.
"""

# %%
from deidbench import deid_identity, deid_swap, propensity, regression_metric
from deidbench.synthetic import excerpts_like

target = excerpts_like(5000, seed=4)
for label, deid in (("identity", deid_identity(target)),
                    ("swap 50%", deid_swap(target, 0.5, ["AGEP", "MSP", "EDU"], seed=0))):
    p = propensity(target, deid, ["AGEP", "MSP", "EDU"])
    print(f"{label}: AUC {p.auc:.3f}, divergence {p.divergence:.3f}")

# %%
deid = deid_swap(target, 0.3, ["EDU"], seed=1)
reg = regression_metric(target, deid, "EDU", "PINCP_DECILE", group_features=["SEX"])
for row in reg.lines():
    print(row["group"], round(row["target_slope"], 3), round(row["deid_slope"], 3))
print("largest heatmap deviation:", max(abs(g.deviation_heatmap).max() for g in reg.groups))
