import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from deidbench.dataset import DataDictionary, Dataset, FeatureSpec, SubgroupSelector
from deidbench.dispersal import (
    average_bin_size,
    compare_feature_dispersal,
    dispersal_bounds,
    dispersal_profile,
    dispersal_ratio,
    entropy,
    profile_step_bounds,
    uncertainty_coefficient,
)
from deidbench.errors import DegenerateFeature, EmptyDataset, EntropyMismatch
from deidbench.partition import Density
from deidbench.synthetic import chained_binary, two_subgroup_fixture


def cat(name, card):
    return FeatureSpec(name, "categorical", tuple(str(v) for v in range(card)))


def make(columns, cards=None):
    cards = cards or {n: int(max(v)) + 1 for n, v in columns.items()}
    dic = DataDictionary(tuple(cat(n, cards[n]) for n in columns))
    return Dataset(dic, {n: np.asarray(v) for n, v in columns.items()})


@pytest.mark.parametrize("probs,expected", [
    ([0.25] * 4, 2.0),
    ([1.0], 0.0),
    ([0.5, 0.25, 0.25], 1.5),
])
def test_entropy_examples(probs, expected):
    d = Density.from_dict(["X"], {(str(i),): p for i, p in enumerate(probs)})
    assert entropy(d) == pytest.approx(expected, abs=1e-12)


def test_copy_feature_has_u_one():
    f = [0, 1, 2, 0, 1, 2, 2, 2]
    assert uncertainty_coefficient(make({"F": f, "X": f}), "X", ["F"]).u == 1.0


def test_independent_full_product_has_u_zero():
    f, x = zip(*[(a, b) for a in range(3) for b in range(2)] * 2)
    assert uncertainty_coefficient(make({"F": f, "X": x}), "X", ["F"]).u == 0.0


def test_eight_row_table_against_hand_entropies():
    f = [0, 0, 0, 0, 1, 1, 1, 1]
    x = [0, 0, 0, 1, 1, 1, 2, 2]
    stats = uncertainty_coefficient(make({"F": f, "X": x}), "X", ["F"])
    hx = oracles.entropy_bits(Counter(x))
    hf = oracles.entropy_bits(Counter(f))
    hj = oracles.entropy_bits(Counter(zip(f, x)))
    assert stats.h_x == pytest.approx(hx, abs=1e-12)
    assert stats.h_joint == pytest.approx(hj, abs=1e-12)
    assert stats.u == pytest.approx((hx - (hj - hf)) / hx, abs=1e-12)


def test_constant_feature_is_degenerate():
    with pytest.raises(DegenerateFeature):
        uncertainty_coefficient(make({"F": [0, 1], "X": [0, 0]}, {"F": 2, "X": 2}), "X", ["F"])


def test_functional_feature_has_ratio_one():
    f = np.arange(40) % 5
    r = dispersal_ratio(make({"F": f, "X": f % 2}), ["F"], "X")
    assert r.ratio == 1.0 and r.u == 1.0


def test_independent_binary_doubles_bins():
    ds = chained_binary(2, copies=30)
    r = dispersal_ratio(ds, ["B0"], "B1")
    assert r.ratio == 2.0 == r.range_x
    assert r.lower_bound == 2.0 and r.upper_bound == 2.0


def test_random_ratio_against_brute_force():
    rng = np.random.default_rng(11)
    ds = oracles.random_categorical(rng, 200, [3, 4, 5])
    r = dispersal_ratio(ds, ["F0", "F1"], "F2")
    before = oracles.distinct(ds, ["F0", "F1"])
    after = oracles.distinct(ds, ["F0", "F1", "F2"])
    assert (r.bins_before, r.bins_after, r.ratio) == (before, after, after / before)
    assert r.lower_bound <= r.ratio


def test_bounds_formula():
    lb_raw, ub_raw, lb, ub = dispersal_bounds(0.25, 2.0, 3.0, 6, 1000, 4)
    fu = 0.75 * 2.0 + 3.0
    assert lb_raw == pytest.approx(2 ** fu / 6)
    assert ub_raw == pytest.approx(1000 * fu / (math.log2(1000) * 6))
    assert (lb, ub) == (max(lb_raw, 1.0), min(ub_raw, 4.0))


def test_compare_independent_against_copy():
    ds = chained_binary(3, copies=4)
    cols = {n: ds.column(n) for n in ds.feature_names}
    cols["C"] = cols["B0"]
    dic = DataDictionary(ds.dictionary.features + (cat("C", 2),))
    ds = Dataset(dic, cols)
    cmp = compare_feature_dispersal(ds, ["B0", "B1"], "B2", "C")
    assert (cmp.u1, cmp.u2) == (0.0, 1.0)
    assert cmp.first.lb_raw > cmp.second.lb_raw
    assert cmp.more_dispersive == "B2" and cmp.consistent
    same = compare_feature_dispersal(ds, ["B0", "B1"], "B2", "B2")
    assert same.first.lower_bound == same.second.lower_bound
    assert same.first.upper_bound == same.second.upper_bound
    assert same.more_dispersive is None


def _noisy_copy(f, flips_per_group):
    x = f.copy()
    for value in (0, 1):
        idx = np.flatnonzero(f == value)[:flips_per_group]
        x[idx] = 1 - value
    return x


def test_compare_constructed_u_values():
    f = np.repeat([0, 1], 500)
    x1 = _noisy_copy(f, 95)
    x2 = _noisy_copy(f, 27)
    ds = make({"F": f, "X1": x1, "X2": x2})
    cmp = compare_feature_dispersal(ds, ["F"], "X1", "X2")
    for q, stats in ((0.19, cmp.first.stats), (0.054, cmp.second.stats)):
        h = -(q * math.log2(q) + (1 - q) * math.log2(1 - q))
        assert stats.u == pytest.approx(1 - h, abs=1e-12)
    assert cmp.u1 == pytest.approx(0.2985, abs=1e-3) and cmp.u2 == pytest.approx(0.697, abs=1e-3)
    assert cmp.first.lb_raw > cmp.second.lb_raw and cmp.first.ub_raw > cmp.second.ub_raw
    assert cmp.consistent and cmp.more_dispersive == "X1"


def test_entropy_mismatch():
    f = np.repeat([0, 1], 50)
    skew = np.r_[np.zeros(90, int), np.ones(10, int)]
    with pytest.raises(EntropyMismatch):
        compare_feature_dispersal(make({"F": f, "A": f[::-1].copy(), "B": skew}), ["F"], "A", "B")


def test_average_bin_size_examples():
    ds = make({"A": [0] * 7, "B": list(range(7))}, {"A": 1, "B": 7})
    assert average_bin_size(ds, ["A"]) == 7.0
    assert average_bin_size(ds, ["B"]) == 1.0


def test_average_bin_size_hand_enumeration():
    a = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2]
    b = [0, 0, 1, 0, 0, 0, 1, 1, 1, 0]
    g = [0, 1, 1, 0, 1, 0, 1, 1, 0, 0]
    ds = make({"A": a, "B": b, "G": g})
    # bins over (A, B): (0,0)x2 (0,1)x1 (1,0)x3 (1,1)x1 (2,1)x2 (2,0)x1
    # G=1 rows sit in (0,0) (0,1) (1,0) (1,1) (2,1): sizes 2+1+3+1+2 over 5 bins
    assert average_bin_size(ds, ["A", "B"], SubgroupSelector.of(G=1)) == 9 / 5
    # G=0 rows sit in (0,0) (1,0) (2,1) (2,0): 2+3+2+1 over 4 bins
    assert average_bin_size(ds, ["A", "B"], SubgroupSelector.of(G=0)) == 2.0
    with pytest.raises(EmptyDataset):
        average_bin_size(make({"A": [0], "G": [0]}, {"A": 1, "G": 2}), ["A"], SubgroupSelector.of(G=1))


def test_profile_examples():
    f = np.arange(30) % 3
    flat = dispersal_profile(make({"A": f, "B": (f + 1) % 3, "C": f * 2}), ["A", "B", "C"])
    assert [p.dispersal for p in flat.curves[0].points] == [1.0, 1.0]
    chained = dispersal_profile(chained_binary(4), ["B0", "B1", "B2", "B3"])
    assert [p.dispersal for p in chained.curves[0].points] == [2.0, 4.0, 8.0]
    assert len(chained.curves[0].points) == 3


def test_two_subgroup_profile():
    ds = two_subgroup_fixture()
    groups = [SubgroupSelector.of(GROUP="dependent"), SubgroupSelector.of(GROUP="independent")]
    order = ["X1", "X2", "X3", "X4"]
    dep, ind = dispersal_profile(ds, order, groups).curves
    for k, (p_dep, p_ind) in enumerate(zip(dep.points, ind.points), start=2):
        sub = [r for r in oracles.records(ds, ["GROUP"] + order) if r[0] == "independent"]
        expected = len({r[1:k + 1] for r in sub}) / len({r[1:2] for r in sub})
        assert p_ind.dispersal == expected
        assert p_ind.dispersal > p_dep.dispersal == 1.0


def test_empty_subgroup_is_skipped_with_warning():
    ds = make({"A": [0, 1, 0], "B": [1, 1, 0], "G": [0, 0, 0]}, {"A": 2, "B": 2, "G": 2})
    with pytest.warns(UserWarning, match="empty"):
        prof = dispersal_profile(ds, ["A", "B"], [SubgroupSelector.of(G=1), SubgroupSelector()])
    assert prof.curves[0].skipped and prof.curves[1].points
    assert prof.rows()[0]["note"] == "empty subgroup"


def test_step_bounds_rows():
    rows = profile_step_bounds(chained_binary(3, copies=10), ["B0", "B1", "B2"])
    assert [r["ratio"] for r in rows] == [2.0, 2.0]
    assert all(r["lower_bound"] <= r["ratio"] for r in rows)


def test_workers_do_not_change_profiles():
    ds = two_subgroup_fixture()
    groups = [SubgroupSelector.of(GROUP="dependent"), SubgroupSelector.of(GROUP="independent")]
    order = ["X1", "X2", "X3"]
    assert dispersal_profile(ds, order, groups, workers=1) == dispersal_profile(ds, order, groups, workers=3)


instances = st.tuples(st.integers(0, 2 ** 32 - 1), st.integers(2, 80), st.integers(1, 3))


def _instance(seed, n_rows, n_f):
    rng = np.random.default_rng(seed)
    cards = rng.integers(1, 5, n_f + 1).tolist()
    cards[-1] = max(cards[-1], 2)
    ds = oracles.random_categorical(rng, n_rows, cards)
    names = ds.feature_names
    return ds, list(names[:-1]), names[-1]


@given(instances)
def test_dispersal_properties(inst):
    ds, f, x = _instance(*inst)
    try:
        r = dispersal_ratio(ds, f, x)
    except DegenerateFeature:
        return
    assert 1.0 <= r.ratio <= r.range_x
    assert 2 ** r.stats.h_joint <= r.bins_after * (1 + 1e-9)
    assert r.lower_bound <= r.ratio * (1 + 1e-9)
    if r.population >= 50 * r.bins_after:
        assert r.upper_bound >= r.ratio
    assert (r.u >= 1 - 1e-9) == (r.ratio == 1.0)
    perm = ds.take(np.random.default_rng(inst[0]).permutation(ds.row_count))
    r2 = dispersal_ratio(perm, f, x)
    assert (r2.ratio, r2.u, r2.stats.h_joint) == (r.ratio, r.u, r.stats.h_joint)


@given(instances, st.integers(0, 3))
def test_average_bin_size_never_grows(inst, pick):
    ds, f, x = _instance(*inst)
    rows = ds.column(ds.feature_names[0])
    sel = SubgroupSelector(((ds.feature_names[0], str(int(rows[pick % len(rows)]))),))
    order = f + [x]
    sizes = [average_bin_size(ds, order[:k], sel) for k in range(1, len(order) + 1)]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


@given(st.integers(0, 1000), st.integers(0, 1000), st.floats(0.01, 10), st.floats(0, 10),
       st.integers(1, 1000), st.integers(2, 10 ** 6))
def test_ordering_of_closed_form_bounds(k1, k2, h_x, h_f, before, pop):
    # u on a 1e-3 grid so distinct values stay distinguishable in f(u)
    u1, u2 = k1 / 1000, k2 / 1000
    lb1, ub1, _, _ = dispersal_bounds(u1, h_x, h_f, before, pop, 10)
    lb2, ub2, _, _ = dispersal_bounds(u2, h_x, h_f, before, pop, 10)
    assert (u1 <= u2) == (lb1 >= lb2 and ub1 >= ub2)
