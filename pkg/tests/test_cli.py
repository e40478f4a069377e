import json
import subprocess
import sys

import pytest

from deidbench.cli import main
from deidbench.dataset import write_dataset
from deidbench.synthetic import chained_binary, excerpts_like


@pytest.fixture()
def files(tmp_path):
    t = excerpts_like(600, seed=2)
    (tmp_path / "dict.json").write_text(t.dictionary.dumps())
    write_dataset(t, tmp_path / "t.csv")
    cfg = {"kmarginal": {"k": 3, "n_subsets": 10}, "es_trials": 2, "geo_feature": "PUMA"}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path


def test_identity_then_evaluate(files, capsys):
    d = str(files / "d.csv")
    assert main(["deid", "identity", "--data", str(files / "t.csv"), "--dict", str(files / "dict.json"),
                 "--out", d]) == 0
    assert main(["evaluate", "--target", str(files / "t.csv"), "--deid", d, "--dict",
                 str(files / "dict.json"), "--config", str(files / "cfg.json"),
                 "--out", str(files / "rep")]) == 0
    assert "k-marginal score: 1000" in capsys.readouterr().out
    doc = json.loads((files / "rep" / "report.json").read_text())
    assert doc["sections"]["kmarginal"]["overall"]["score"] == 1000


@pytest.mark.parametrize("args", [
    ["subsample", "--fraction", "0.5"],
    ["swap", "--rate", "0.3"],
    ["dphist", "--epsilon", "2", "--schema", "SEX,MSP"],
])
def test_deid_methods(files, args):
    out = files / "o.csv"
    assert main(["deid", *args, "--data", str(files / "t.csv"), "--dict", str(files / "dict.json"),
                 "--seed", "3", "--out", str(out)]) == 0
    assert main(["validate", "--data", str(out), "--dict", str(files / "dict.json")]) == 0


def test_validate_out_of_domain(files, capsys):
    bad = files / "bad.csv"
    bad.write_text("SEX,MSP\n1,N\n3,N\n")
    assert main(["validate", "--data", str(bad), "--dict", str(files / "dict.json")]) == 2
    err = capsys.readouterr().err
    assert "row 2" in err and "SEX" in err and "'3'" in err


def test_usage_errors(files):
    assert main([]) == 1
    assert main(["evaluate", "--target", "x"]) == 1
    assert main(["deid", "subsample", "--data", str(files / "t.csv"), "--dict",
                 str(files / "dict.json"), "--out", str(files / "x.csv")]) == 1
    assert main(["validate", "--data", str(files / "missing.csv"), "--dict", str(files / "dict.json")]) == 2


def test_metric_failure_exit_code(files):
    assert main(["deid", "dphist", "--epsilon", "1", "--schema", "RAC1P,MSP,EDU,PUMA,PINCP_DECILE",
                 "--max-cells", "1000", "--data", str(files / "t.csv"), "--dict", str(files / "dict.json"),
                 "--out", str(files / "x.csv")]) == 3


def test_dispersal_chained_binary(tmp_path, capsys):
    ds = chained_binary(4)
    (tmp_path / "dict.json").write_text(ds.dictionary.dumps())
    write_dataset(ds, tmp_path / "b.csv")
    assert main(["dispersal", "--data", str(tmp_path / "b.csv"), "--dict", str(tmp_path / "dict.json"),
                 "--order", "B0,B1,B2,B3", "--out", str(tmp_path / "out")]) == 0
    assert "all: 2, 4, 8" in capsys.readouterr().out
    rows = (tmp_path / "out" / "dispersal_profile.csv").read_text().splitlines()
    assert rows[0] == "subgroup,n_features,dispersal,avg_bin_size,note"
    assert [r.split(",")[2] for r in rows[1:]] == ["2.0", "4.0", "8.0"]


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "deidbench", "validate", "--data", str(files / "t.csv"),
                           "--dict", str(files / "dict.json")], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok: 600 records")
