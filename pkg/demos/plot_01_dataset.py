"""
Data dictionaries and datasets
==============================

A data dictionary fixes the domain of every feature.  Numeric features are
discretized into the dictionary's bins before any partition-based metric
sees them.
"""

# %%
# Build a census-style sample and inspect the dictionary.
from deidbench import load_dataset, select_features, write_dataset
from deidbench.synthetic import excerpts_like

people = excerpts_like(2000, seed=0)
dic = people.dictionary
print(people)
for spec in dic.features[:4]:
    print(spec.name, spec.kind, spec.cardinality, spec.levels[:5])

# %%
# Round trip through CSV text.  Out-of-domain values raise ``ValidationError``.
text = write_dataset(people)
again = load_dataset(text, dic)
print("round trip equal:", again.equals(people))

# %%
# Named feature subsets come from the dictionary.
demo = select_features(people, dic.resolve("demographic"))
print(demo.feature_names)

# %%
# The numeric age column maps onto its bins.
ages = people.column("AGEP")[:8]
print(ages)
print([dic["AGEP"].bin_labels[c] for c in people.codes("AGEP")[:8]])
