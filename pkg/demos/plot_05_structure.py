"""
Principal components and consistency rules
==========================================

Both datasets are projected onto the target's principal axes.  Consistency
rules count records that break known logical constraints.
"""

# %%
from deidbench import consistency_check, deid_swap, load_rules, pca_compare
from deidbench.structure import DEFAULT_RULES
from deidbench.synthetic import excerpts_like

target = excerpts_like(3000, seed=5)
deid = deid_swap(target, 0.5, ["AGEP"], seed=0)
pca = pca_compare(target, deid, highlight="MSP=N", n_components=3,
                  features=["AGEP", "MSP", "EDU", "PINCP_DECILE"])
print("explained variance:", pca.explained_variance.round(3))
print("loadings shape:", pca.loadings.shape)

# %%
# Swapping ages breaks the link between age and marital status.
for res in consistency_check(deid, DEFAULT_RULES):
    print(res.name, res.violations)

# %%
# Rules can be loaded from JSON.
rules = load_rules('[{"name": "adults only", "when": [],'
                   ' "require": [{"feature": "AGEP", "op": ">=", "value": 18}]}]')
print(consistency_check(target, rules)[0].violations)
