"""Acceptance criteria, one test each.  Every test prints a single
``ACCEPTANCE <n> ... PASS|FAIL`` line (visible with ``pytest -v``)."""
import json
import time
import warnings

import numpy as np
import pytest

import oracles
from deidbench.baselines import (
    DpHistogramParams,
    deid_dp_histogram,
    deid_identity,
    deid_subsample,
    deid_swap,
)
from deidbench.cli import main
from deidbench.dataset import SubgroupSelector, write_dataset
from deidbench.dispersal import average_bin_size, dispersal_profile, dispersal_ratio
from deidbench.errors import DegenerateFeature
from deidbench.fidelity import KMarginalConfig, equivalent_subsample, kmarginal_score
from deidbench.privacy import unique_exact_match
from deidbench.report import RunConfig, evaluate, mask_timestamp
from deidbench.structure import jacobi_eigh, pca_compare, sorted_components
from deidbench.synthetic import (
    chained_binary,
    discrete_fixture,
    excerpts_like,
    singleton_binary_fixture,
    two_subgroup_fixture,
    unique_heavy_fixture,
)
from test_structure import COV, char_poly_eigen, exact_cov_sample, numeric_dataset


@pytest.fixture()
def verdict(capsys):
    def emit(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, detail
    return emit


def test_1_identity_pipeline(verdict):
    problems = []
    timings = {}
    for rows, feats in ((100, 4), (5000, 8), (27254, 10)):
        t = discrete_fixture(rows, feats, seed=rows)
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = evaluate(t, deid_identity(t), RunConfig())
        timings[rows] = time.perf_counter() - start
        s = rep.sections
        uem = s["privacy"]["uem"]
        checks = {
            "no section errored": all(v["status"] != "error" for v in s.values()),
            "k-marginal 1000": s["kmarginal"]["overall"]["score"] == 1000,
            "UEM 100%": uem["percent"] == 100.0 and uem["unique_target_records"] > 0,
            "propensity spike at 0.5": s["propensity"]["spike_at_half"],
            "deviation heatmaps zero": s["regression"]["max_abs_deviation"] == 0.0,
            "correlation deltas zero": all(s["correlations"][m]["max_delta"] == 0.0
                                           for m in ("pearson", "kendall_tau_b")),
        }
        problems += [f"{rows}x{feats}: {k}" for k, ok in checks.items() if not ok]
    if timings[27254] >= 60:
        problems.append(f"largest fixture took {timings[27254]:.1f}s")
    detail = "runtime " + ", ".join(f"{r} rows {s:.1f}s" for r, s in timings.items())
    verdict(1, "identity pipeline", not problems, "; ".join(problems) or detail)


def _random_instance(rng):
    n_f = int(rng.integers(1, 4))
    cards = rng.integers(1, 6, n_f + 1).tolist()
    cards[-1] = max(cards[-1], 2)
    # mix small and large populations so the large-|P| regime is exercised
    rows = int(rng.choice([int(rng.integers(2, 60)), int(rng.integers(500, 3000))]))
    ds = oracles.random_categorical(rng, rows, cards)
    if rng.random() < 0.3:
        # make X partially dependent on the schema
        cols = {n: ds.column(n).copy() for n in ds.feature_names}
        x = ds.feature_names[-1]
        keep = rng.random(rows) < rng.random()
        cols[x] = np.where(keep, cols[ds.feature_names[0]] % cards[-1], cols[x])
        ds = oracles.with_columns(ds.dictionary, cols)
    return ds, list(ds.feature_names[:-1]), ds.feature_names[-1]


def test_2_dispersal_theory(verdict):
    rng = np.random.default_rng(2024)
    failures = []
    counted = ub_checked = 0
    while counted < 600:
        ds, f, x = _random_instance(rng)
        try:
            r = dispersal_ratio(ds, f, x)
        except DegenerateFeature:
            continue
        counted += 1
        tag = f"instance {counted}"
        if not 1.0 <= r.ratio <= r.range_x:
            failures.append(f"{tag}: ratio {r.ratio} outside [1, {r.range_x}]")
        if 2 ** r.stats.h_joint > r.bins_after * (1 + 1e-9):
            failures.append(f"{tag}: 2^H_joint exceeds bins_after")
        if r.lower_bound > r.ratio * (1 + 1e-9):
            failures.append(f"{tag}: lower bound {r.lower_bound} > ratio {r.ratio}")
        if r.population >= 50 * r.bins_after:
            ub_checked += 1
            if r.upper_bound < r.ratio:
                failures.append(f"{tag}: upper bound {r.upper_bound} < ratio {r.ratio}")
        if (abs(r.u - 1.0) <= 1e-9) != (r.ratio == 1.0):
            failures.append(f"{tag}: u={r.u} but ratio={r.ratio}")
        order = f + [x]
        sel = SubgroupSelector(((order[0], ds.labels(order[0])[0]),))
        sizes = [average_bin_size(ds, order[:k], sel) for k in range(1, len(order) + 1)]
        if any(b > a for a, b in zip(sizes, sizes[1:])):
            failures.append(f"{tag}: average bin size grew {sizes}")

    # functional dependence constructions give u = 1 and ratio = 1 exactly
    for card in (2, 3, 5):
        base = np.arange(card * 20) % card
        for fn in (lambda v: v, lambda v: (v * 7 + 1) % card, lambda v: v // 2):
            ds = oracles.with_columns(oracles.random_categorical(rng, 1, [card, card]).dictionary,
                                      {"F0": base, "F1": fn(base)})
            try:
                r = dispersal_ratio(ds, ["F0"], "F1")
            except DegenerateFeature:
                continue
            if not (r.u == 1.0 and r.ratio == 1.0):
                failures.append(f"functional construction card={card}: u={r.u}, ratio={r.ratio}")
    # independent full-support binary features: every step doubles
    for k in range(2, 7):
        ds = chained_binary(k, copies=3)
        names = list(ds.feature_names)
        r = dispersal_ratio(ds, names[:-1], names[-1])
        if not (r.ratio == 2.0 == r.range_x and r.u == 0.0):
            failures.append(f"chained binary k={k}: ratio {r.ratio}, u {r.u}")
    if ub_checked == 0:
        failures.append("no instance reached the large-population regime")
    detail = f"{counted} random instances, {ub_checked} in the upper-bound regime"
    verdict(2, "dispersal theory suite", not failures, "; ".join(failures[:5]) or detail)


def test_3_kmarginal_oracle_equivalence(verdict):
    rng = np.random.default_rng(3)
    mismatches = []
    runs = 0
    for _ in range(40):
        n_f = int(rng.integers(2, 7))
        cards = rng.integers(1, 4, n_f).tolist()
        t = oracles.random_categorical(rng, int(rng.integers(1, 51)), cards)
        d = oracles.random_categorical(rng, int(rng.integers(1, 51)), cards)
        for k in range(1, n_f + 1):
            runs += 1
            ours = kmarginal_score(t, d, KMarginalConfig(k=k, exhaustive=True))
            expected, subsets, tvds = oracles.kmarginal_exhaustive(t, d, t.feature_names, k)
            if ours.score != expected or ours.subsets != tuple(subsets):
                mismatches.append(f"n_f={n_f} k={k}: {ours.score} vs {expected}")
    verdict(3, "k-marginal oracle equivalence", not mismatches,
            "; ".join(mismatches[:5]) or f"{runs} exhaustive runs matched")


def test_4_equivalent_subsample_coherence(verdict):
    t = discrete_fixture(5000, 8, seed=44)
    cfg = KMarginalConfig(k=3, n_subsets=50, seed=1)
    results = {}
    for f in (0.1, 0.3, 0.5, 0.8):
        es = []
        for seed in range(5):
            score = kmarginal_score(t, deid_subsample(t, f, seed=100 + seed), cfg)
            es.append(equivalent_subsample(t, score, trials=10, seed=seed).es_percent)
        results[f] = float(np.mean(es))
    bad = {f: v for f, v in results.items() if abs(v - 100 * f) > 10}
    detail = ", ".join(f"f={f}: ES {v:.1f}%" for f, v in results.items())
    verdict(4, "equivalent subsample coherence", not bad, detail)


def test_5_dp_histogram(verdict):
    t = singleton_binary_fixture(5000, seed=5)
    schema = t.feature_names
    cfg = KMarginalConfig(k=3, exhaustive=True)
    high, low, uem = [], [], []
    for seed in range(5):
        d10 = deid_dp_histogram(t, DpHistogramParams(10.0, schema, seed=seed))
        d01 = deid_dp_histogram(t, DpHistogramParams(0.1, schema, seed=seed))
        high.append(kmarginal_score(t, d10, cfg).score)
        low.append(kmarginal_score(t, d01, cfg).score)
        uem.append(unique_exact_match(t, d10).percent)
    ok = min(uem) >= 95 and min(high) >= 980 and np.mean(low) < np.mean(high)
    detail = f"eps=10 UEM {min(uem):.0f}%+ scores {high}; eps=0.1 scores {low}"
    verdict(5, "DP histogram behavior", ok, detail)


def test_6_swap_monotonicity(verdict):
    t = unique_heavy_fixture(1000, seed=6)
    feats = list(t.feature_names)
    unique_share = unique_exact_match(t, t).unique_target_records / t.row_count
    means = []
    for rate in (0.0, 0.25, 0.5, 1.0):
        means.append(float(np.mean([unique_exact_match(t, deid_swap(t, rate, feats, seed)).percent
                                    for seed in range(5)])))
    ok = unique_share >= 0.5 and all(b < a for a, b in zip(means, means[1:]))
    detail = f"unique share {unique_share:.0%}; mean UEM " + ", ".join(f"{m:.1f}" for m in means)
    verdict(6, "swap monotonicity", ok, detail)


def test_7_pca_correctness(verdict):
    problems = []
    t = numeric_dataset(exact_cov_sample(COV))
    res = pca_compare(t, t, n_components=3)
    sd = np.sqrt(np.diag(COV))
    roots, vecs = char_poly_eigen(COV / np.outer(sd, sd))
    err_val = float(np.abs(res.explained_variance - roots).max())
    err_vec = float(np.abs(res.loadings - vecs).max())
    if err_val > 1e-6 or err_vec > 1e-6:
        problems.append(f"3-axis fixture off by {err_val:.1e}/{err_vec:.1e}")
    values, vectors = sorted_components(*jacobi_eigh(COV))
    r2, v2 = char_poly_eigen(COV)
    if np.abs(values - r2).max() > 1e-6 or np.abs(vectors - v2).max() > 1e-6:
        problems.append("raw covariance eigenpairs differ from the oracle")
    fixtures = [(t, t), (excerpts_like(2000, 1), excerpts_like(500, 2)),
                (discrete_fixture(1000, 8, seed=3), discrete_fixture(300, 8, seed=4)),
                (unique_heavy_fixture(400, seed=5), unique_heavy_fixture(400, seed=6))]
    worst = 0.0
    for a, b in fixtures:
        c = pca_compare(a, b)
        gram = c.loadings @ c.loadings.T
        worst = max(worst, float(np.abs(gram - np.eye(len(gram))).max()))
    if worst > 1e-6:
        problems.append(f"loadings not orthonormal ({worst:.1e})")
    verdict(7, "PCA correctness", not problems,
            "; ".join(problems) or f"eigen error {max(err_val, err_vec):.1e}, Gram error {worst:.1e}")


def test_8_determinism(verdict, tmp_path):
    t = excerpts_like(3000, seed=8)
    d = deid_swap(t, 0.3, ["AGEP", "MSP", "PUMA"], seed=1)
    (tmp_path / "dict.json").write_text(t.dictionary.dumps())
    write_dataset(t, tmp_path / "t.csv")
    write_dataset(d, tmp_path / "d.csv")
    cfg = {"geo_feature": "PUMA", "group_features": ["SEX"], "highlight": "MSP=N",
           "dispersal_order": ["AGEP", "SEX", "MSP"], "master_seed": 17}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    outputs = []
    for run, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"run{run}"
        code = main(["evaluate", "--target", str(tmp_path / "t.csv"), "--deid", str(tmp_path / "d.csv"),
                     "--dict", str(tmp_path / "dict.json"), "--config", str(tmp_path / "cfg.json"),
                     "--out", str(out), "--workers", str(workers)])
        files = {}
        for p in sorted(out.iterdir()):
            text = p.read_text(encoding="utf-8")
            files[p.name] = mask_timestamp(text) if p.name == "report.json" else text
        outputs.append((code, files))
    same = all(o == outputs[0] for o in outputs[1:]) and outputs[0][0] == 0
    verdict(8, "determinism", same, f"{len(outputs[0][1])} files identical across workers 1, 1, 4")


def test_9_subgroup_dispersal(verdict):
    ds = two_subgroup_fixture(n_features=5, repeats=2)
    order = [f"X{j}" for j in range(1, 6)]
    groups = [SubgroupSelector.of(GROUP="dependent"), SubgroupSelector.of(GROUP="independent")]
    dep, ind = dispersal_profile(ds, order, groups).curves
    d_vals = [p.dispersal for p in dep.points]
    i_vals = [p.dispersal for p in ind.points]
    ok = all(v == 1.0 for v in d_vals) and all(i > d for i, d in zip(i_vals, d_vals))
    verdict(9, "subgroup dispersal", ok, f"dependent {d_vals}; independent {i_vals}")
