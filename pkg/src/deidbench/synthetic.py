"""Seeded synthetic fixtures.

``excerpts_like`` mimics a census-style person file (geography, age, marital
status, housing, education, income decile) with built-in logical
constraints.  The remaining generators build small structured datasets whose
metric values are known in advance.
"""
from __future__ import annotations

import itertools

import numpy as np

from .dataset import DataDictionary, Dataset, FeatureSpec

PUMAS = ("01-01301", "01-01302", "06-07502", "06-07503", "17-03531", "17-03532",
         "48-04622", "48-04623")

EXCERPTS_FEATURES = ("PUMA", "AGEP", "SEX", "MSP", "RAC1P", "HOUSING_TYPE", "OWN_RENT",
                     "EDU", "PINCP_DECILE", "DEYE")


def excerpts_dictionary() -> DataDictionary:
    features = (
        FeatureSpec("PUMA", "categorical", PUMAS, description="state and area code"),
        FeatureSpec("AGEP", "numeric", range=(0, 99),
                    bins=(5, 10, 15, 20, 30, 40, 50, 60, 70, 80), description="age in years"),
        FeatureSpec("SEX", "categorical", ("1", "2")),
        FeatureSpec("MSP", "categorical", ("N", "1", "2", "3", "4", "5", "6"),
                    description="marital status, N for under 15"),
        FeatureSpec("RAC1P", "categorical", tuple(str(i) for i in range(1, 10))),
        FeatureSpec("HOUSING_TYPE", "categorical", ("1", "2", "3"),
                    description="1 household, 2 and 3 group quarters"),
        FeatureSpec("OWN_RENT", "categorical", ("0", "1", "2"),
                    description="0 group quarters, 1 owned, 2 rented"),
        FeatureSpec("EDU", "ordinal", ("N",) + tuple(str(i) for i in range(1, 13)),
                    ordinal_rank=("N",) + tuple(str(i) for i in range(1, 13)),
                    description="educational attainment, N for under 3"),
        FeatureSpec("PINCP_DECILE", "ordinal", ("N",) + tuple(str(i) for i in range(10)),
                    ordinal_rank=("N",) + tuple(str(i) for i in range(10)),
                    description="income decile within state, N for under 15"),
        FeatureSpec("DEYE", "categorical", ("1", "2"), description="vision difficulty"),
        FeatureSpec("PWGTP", "numeric", range=(1, 500), is_weight=True,
                    description="person weight"),
    )
    subsets = {
        "demographic": ("AGEP", "SEX", "MSP", "RAC1P", "EDU", "PINCP_DECILE"),
        "housing": ("PUMA", "HOUSING_TYPE", "OWN_RENT", "AGEP"),
    }
    return DataDictionary(features, subsets)


def excerpts_like(n: int, seed: int = 0) -> Dataset:
    """Census-style person records satisfying the default consistency rules."""
    rng = np.random.default_rng(seed)
    dic = excerpts_dictionary()
    puma = rng.choice(len(PUMAS), n, p=np.array([3, 2, 4, 3, 2, 2, 3, 1]) / 20)
    age = np.minimum(rng.gamma(2.2, 17.0, n).astype(int), 99)
    sex = rng.integers(0, 2, n)

    race_tables = rng.dirichlet(np.full(9, 0.6), len(PUMAS))
    race = np.array([rng.choice(9, p=race_tables[p]) for p in puma])

    msp = np.zeros(n, dtype=int)
    adult = age >= 15
    married_p = np.clip((age - 15) / 30, 0, 0.6)
    u = rng.random(n)
    msp[adult] = np.where(u[adult] < married_p[adult], 1,
                          rng.choice([2, 3, 4, 5, 6], adult.sum(), p=[.1, .15, .05, .05, .65]))

    housing = rng.choice(3, n, p=[0.94, 0.03, 0.03])
    own = np.where(housing == 0, np.where(rng.random(n) < np.clip(age / 80, 0.2, 0.8), 1, 2), 0)

    edu = np.where(age < 3, 0, np.clip((age - 3) // 2 + rng.integers(-1, 2, n), 1, 12))
    income = np.clip(edu - 3 + rng.integers(-2, 3, n), 0, 9)
    decile = np.where(adult, income + 1, 0)
    deye = np.where(rng.random(n) < 0.02 + age / 2000, 0, 1)
    weight = rng.integers(1, 200, n).astype(float)
    return Dataset(dic, {
        "PUMA": puma, "AGEP": age.astype(float), "SEX": sex, "MSP": msp, "RAC1P": race,
        "HOUSING_TYPE": housing, "OWN_RENT": own, "EDU": edu, "PINCP_DECILE": decile,
        "DEYE": deye, "PWGTP": weight,
    })


def discrete_dictionary(n_features: int, cardinalities=(2, 3, 4, 5)) -> DataDictionary:
    """Features ``F0, F1, ...`` alternating categorical and ordinal."""
    features = []
    for j in range(n_features):
        card = cardinalities[j % len(cardinalities)]
        values = tuple(str(v) for v in range(card))
        if j % 2:
            features.append(FeatureSpec(f"F{j}", "ordinal", values, ordinal_rank=values))
        else:
            features.append(FeatureSpec(f"F{j}", "categorical", values))
    return DataDictionary(tuple(features))


def discrete_fixture(n_rows: int, n_features: int, seed: int = 0, *, n_classes: int = 4,
                     cardinalities=(2, 3, 4, 5)) -> Dataset:
    """Latent-class mixture: features are dependent through a hidden class."""
    rng = np.random.default_rng(seed)
    dic = discrete_dictionary(n_features, cardinalities)
    cls = rng.integers(0, n_classes, n_rows)
    columns = {}
    for spec in dic.features:
        table = rng.dirichlet(np.ones(spec.cardinality), n_classes)
        cum = table.cumsum(axis=1)[cls]
        u = rng.random(n_rows)[:, None]
        columns[spec.name] = np.minimum((u > cum).sum(axis=1), spec.cardinality - 1)
    return Dataset(dic, columns)


def binary_dictionary(names) -> DataDictionary:
    return DataDictionary(tuple(FeatureSpec(n, "categorical", ("0", "1")) for n in names))


def chained_binary(n_features: int, copies: int = 1) -> Dataset:
    """Every binary tuple over ``n_features`` features, ``copies`` times each.

    Features are mutually independent, so each added feature doubles the
    occupied bins: the dispersal profile is ``2, 4, 8, ...``.
    """
    names = tuple(f"B{j}" for j in range(n_features))
    grid = np.array(list(itertools.product((0, 1), repeat=n_features)) * copies)
    return Dataset(binary_dictionary(names), {n: grid[:, j] for j, n in enumerate(names)})


def two_subgroup_fixture(n_features: int = 4, repeats: int = 3, cardinality: int = 3) -> Dataset:
    """Records in two subgroups over features ``X1..Xk``.

    In subgroup ``dependent`` every feature copies ``X1``; in ``independent``
    all value combinations occur ``repeats`` times.
    """
    names = tuple(f"X{j + 1}" for j in range(n_features))
    values = tuple(str(v) for v in range(cardinality))
    dic = DataDictionary((FeatureSpec("GROUP", "categorical", ("dependent", "independent")),)
                         + tuple(FeatureSpec(n, "categorical", values) for n in names))
    grid = np.array(list(itertools.product(range(cardinality), repeat=n_features)) * repeats)
    m = len(grid)
    dep = np.repeat((np.arange(m) % cardinality)[:, None], n_features, axis=1)
    data = np.vstack([dep, grid])
    group = np.r_[np.zeros(m, dtype=int), np.ones(m, dtype=int)]
    cols = {"GROUP": group}
    cols.update({n: data[:, j] for j, n in enumerate(names)})
    return Dataset(dic, cols)


def singleton_binary_fixture(n_rows: int = 5000, seed: int = 0) -> Dataset:
    """Three binary features; four cells hold exactly one record each and
    the other four share the remaining rows."""
    rng = np.random.default_rng(seed)
    names = ("A", "B", "C")
    common = rng.choice([0, 3, 5, 6], n_rows - 4)
    cells = np.r_[[1, 2, 4, 7], common]
    cells = cells[rng.permutation(n_rows)]
    bits = (cells[:, None] >> np.array([2, 1, 0])) & 1
    return Dataset(binary_dictionary(names), {n: bits[:, j] for j, n in enumerate(names)})


def unique_heavy_fixture(n_rows: int = 1000, n_features: int = 6, cardinality: int = 8,
                         seed: int = 0) -> Dataset:
    """Independent uniform features over a domain far larger than ``n_rows``,
    so most records are unique."""
    rng = np.random.default_rng(seed)
    values = tuple(str(v) for v in range(cardinality))
    names = tuple(f"U{j}" for j in range(n_features))
    dic = DataDictionary(tuple(FeatureSpec(n, "categorical", values) for n in names))
    return Dataset(dic, {n: rng.integers(0, cardinality, n_rows) for n in names})
