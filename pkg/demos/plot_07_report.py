"""
Full evaluation report and command line
=======================================

``evaluate`` runs every metric family and collects the results into one JSON
document plus CSV tables.  The ``deidbench`` command wraps the same pipeline.
"""

# %%
import json
import tempfile
from pathlib import Path

from deidbench import RunConfig, deid_swap, evaluate, write_dataset
from deidbench.cli import main
from deidbench.synthetic import excerpts_like

target = excerpts_like(4000, seed=7)
deid = deid_swap(target, 0.2, ["AGEP", "PUMA"], seed=0)
cfg = RunConfig(geo_feature="PUMA", group_features=("SEX",), highlight="MSP=N",
                dispersal_order=("PUMA", "AGEP", "SEX", "MSP"))
report = evaluate(target, deid, cfg, workers=2)
for name, section in report.sections.items():
    print(f"{name:12s} {section['status']}")
print("k-marginal:", report.sections["kmarginal"]["overall"]["score"])

# %%
# The same run from the command line.
work = Path(tempfile.mkdtemp())
(work / "dict.json").write_text(target.dictionary.dumps())
write_dataset(target, work / "target.csv")
write_dataset(deid, work / "deid.csv")
(work / "cfg.json").write_text(json.dumps(cfg.to_dict()))
code = main(["evaluate", "--target", str(work / "target.csv"), "--deid", str(work / "deid.csv"),
             "--dict", str(work / "dict.json"), "--config", str(work / "cfg.json"),
             "--out", str(work / "out")])
print("exit code", code, sorted(p.name for p in (work / "out").iterdir())[:5])
