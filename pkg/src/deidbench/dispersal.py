"""Subpopulation dispersal: how adding a feature splits records into more bins.

All entropies are in bits.  Entropies are accumulated over sorted bin counts
with exactly rounded summation, so two partitions with the same multiset of
bin sizes get bit-identical entropies.  That makes ``u == 1`` exact whenever
the added feature is a function of the existing schema.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, SubgroupSelector, filter_subgroup
from .errors import DegenerateFeature, EmptyDataset, EntropyMismatch
from .partition import Density, count_codes, encode


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = np.sort(np.asarray(counts, dtype=np.float64))
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    p = p[p > 0]
    return math.fsum((-p * np.log2(p)).tolist()) + 0.0


def entropy(d: Density) -> float:
    """Shannon entropy of a density, in bits."""
    return _entropy_from_counts(d.probabilities)


def _bin_counts(ds: Dataset, schema) -> np.ndarray:
    (codes,), enc = encode([ds], schema)
    return count_codes(codes, enc)[1]


@dataclass(frozen=True)
class EntropyStats:
    h_x: float
    h_f: float
    h_joint: float
    h_x_given_f: float
    u: float


def uncertainty_coefficient(ds: Dataset, x: str, f_schema) -> EntropyStats:
    """``U(X|F) = (H(X) - H(X|F)) / H(X)`` from empirical histograms."""
    f_schema = tuple(f_schema)
    if x in f_schema:
        raise ValueError(f"feature {x!r} is already part of the schema")
    if ds.row_count == 0:
        raise EmptyDataset("uncertainty coefficient of an empty dataset")
    h_x = _entropy_from_counts(_bin_counts(ds, [x]))
    h_f = _entropy_from_counts(_bin_counts(ds, f_schema))
    h_joint = _entropy_from_counts(_bin_counts(ds, f_schema + (x,)))
    if h_x <= 0:
        raise DegenerateFeature(f"feature {x!r} is constant (H(X) = 0); U(X|F) is undefined")
    h_cond = h_joint - h_f
    u = (h_x - h_cond) / h_x
    return EntropyStats(h_x, h_f, h_joint, h_cond, min(max(u, 0.0), 1.0))


def dispersal_bounds(u: float, h_x: float, h_f: float, bins_before: int, population: int,
                     range_x: int) -> tuple[float, float, float, float]:
    """Lower and upper bounds on the dispersal ratio.

    Returns ``(lb_raw, ub_raw, lb, ub)`` where the raw bounds are the
    non-trivial expressions in ``f(u) = (1-u) H(X) + H(F)`` and ``lb``/``ub``
    are clamped to the trivial range ``[1, range_x]``.
    """
    f_u = (1.0 - u) * h_x + h_f
    lb_raw = 2.0 ** f_u / bins_before
    if population > 1:
        ub_raw = population * f_u / (math.log2(population) * bins_before)
    else:
        ub_raw = math.inf
    return lb_raw, ub_raw, max(lb_raw, 1.0), min(ub_raw, float(range_x))


@dataclass(frozen=True)
class DispersalResult:
    ratio: float
    bins_before: int
    bins_after: int
    range_x: int
    population: int
    f_u: float
    lower_bound: float
    upper_bound: float
    lb_raw: float
    ub_raw: float
    stats: EntropyStats

    @property
    def u(self) -> float:
        return self.stats.u

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "ratio", "bins_before", "bins_after", "range_x", "population", "f_u",
            "lower_bound", "upper_bound", "lb_raw")}
        out["ub_raw"] = None if math.isinf(self.ub_raw) else self.ub_raw
        out["u"] = self.stats.u
        out["h_x"] = self.stats.h_x
        out["h_f"] = self.stats.h_f
        out["h_joint"] = self.stats.h_joint
        return out


def dispersal_ratio(ds: Dataset, f_schema, x: str, *, declared_range: bool = False) -> DispersalResult:
    """Occupied bins after adding ``x`` to ``f_schema``, over occupied bins before.

    ``range_x`` counts the observed distinct values of ``x``; pass
    ``declared_range=True`` to use the dictionary's domain size instead.
    """
    f_schema = tuple(f_schema)
    stats = uncertainty_coefficient(ds, x, f_schema)
    before = len(_bin_counts(ds, f_schema))
    after = len(_bin_counts(ds, f_schema + (x,)))
    if declared_range:
        range_x = ds.dictionary[x].cardinality
    else:
        range_x = len(_bin_counts(ds, [x]))
    f_u = (1.0 - stats.u) * stats.h_x + stats.h_f
    lb_raw, ub_raw, lb, ub = dispersal_bounds(stats.u, stats.h_x, stats.h_f, before,
                                              ds.row_count, range_x)
    return DispersalResult(after / before, before, after, range_x, ds.row_count, f_u,
                           lb, ub, lb_raw, ub_raw, stats)


@dataclass(frozen=True)
class DispersalComparison:
    """Bounds for two candidate features of (nearly) equal entropy.

    ``more_dispersive`` names the feature with the lower uncertainty
    coefficient, which the ordering result predicts has the higher bounds.
    ``consistent`` records whether the computed non-trivial bounds follow
    that prediction.
    """

    x1: str
    x2: str
    first: DispersalResult
    second: DispersalResult
    more_dispersive: str | None
    consistent: bool

    @property
    def u1(self):
        return self.first.u

    @property
    def u2(self):
        return self.second.u


def compare_feature_dispersal(ds: Dataset, f_schema, x1: str, x2: str, *,
                              entropy_tol: float = 0.01) -> DispersalComparison:
    r1 = dispersal_ratio(ds, f_schema, x1)
    r2 = dispersal_ratio(ds, f_schema, x2)
    h1, h2 = r1.stats.h_x, r2.stats.h_x
    if abs(h1 - h2) > entropy_tol * max(h1, h2):
        raise EntropyMismatch(
            f"H({x1}) = {h1:.6g} and H({x2}) = {h2:.6g} differ by more than {entropy_tol:.2%}")
    u1, u2 = r1.u, r2.u
    if u1 < u2:
        winner = x1
    elif u2 < u1:
        winner = x2
    else:
        winner = None
    fwd = (u1 <= u2) == (r1.lb_raw >= r2.lb_raw and r1.ub_raw >= r2.ub_raw)
    back = (u2 <= u1) == (r2.lb_raw >= r1.lb_raw and r2.ub_raw >= r1.ub_raw)
    return DispersalComparison(x1, x2, r1, r2, winner, fwd and back)


def average_bin_size(ds: Dataset, schema, subgroup: SubgroupSelector | None = None) -> float:
    """Mean full-population size of the bins that hold subgroup members."""
    subgroup = subgroup or SubgroupSelector()
    mask = subgroup.mask(ds)
    if not mask.any():
        raise EmptyDataset(f"subgroup {subgroup.label} has no records")
    (codes,), enc = encode([ds], schema)
    occupied, counts = count_codes(codes, enc)
    member_bins = np.unique(codes[mask])
    sizes = counts[np.searchsorted(occupied, member_bins)]
    return int(sizes.sum()) / len(member_bins)


@dataclass(frozen=True)
class ProfilePoint:
    n_features: int
    dispersal: float
    avg_bin_size: float


@dataclass(frozen=True)
class SubgroupCurve:
    selector: SubgroupSelector
    rows: int
    points: tuple = ()
    skipped: str | None = None

    @property
    def label(self) -> str:
        return self.selector.label


@dataclass(frozen=True)
class DispersalProfile:
    feature_order: tuple
    curves: tuple = field(default_factory=tuple)

    def rows(self) -> list[dict]:
        """Plot-ready rows: subgroup, n_features, dispersal, avg_bin_size."""
        out = []
        for curve in self.curves:
            if curve.skipped:
                out.append({"subgroup": curve.label, "n_features": "", "dispersal": "",
                            "avg_bin_size": "", "note": curve.skipped})
                continue
            for p in curve.points:
                out.append({"subgroup": curve.label, "n_features": p.n_features,
                            "dispersal": p.dispersal, "avg_bin_size": p.avg_bin_size, "note": ""})
        return out


def _curve(ds: Dataset, order: tuple, selector: SubgroupSelector) -> SubgroupCurve:
    sub = filter_subgroup(ds, selector)
    if sub.row_count == 0:
        warnings.warn(f"subgroup {selector.label} is empty; skipped", stacklevel=3)
        return SubgroupCurve(selector, 0, (), "empty subgroup")
    base = len(_bin_counts(sub, order[:1]))
    points = []
    for k in range(2, len(order) + 1):
        bins = len(_bin_counts(sub, order[:k]))
        points.append(ProfilePoint(k, bins / base, average_bin_size(ds, order[:k], selector)))
    return SubgroupCurve(selector, sub.row_count, tuple(points))


def dispersal_profile(ds: Dataset, feature_order, subgroups=None, *, workers: int = 1) -> DispersalProfile:
    """Cumulative dispersal and average bin size as features are added in order.

    Dispersal at step ``k`` is the occupied-bin count over the first ``k``
    features divided by the count over the first feature alone.
    """
    order = tuple(feature_order)
    if len(order) < 2:
        raise ValueError("a dispersal profile needs at least two features")
    for name in order:
        ds.dictionary[name]
    subgroups = list(subgroups) if subgroups else [SubgroupSelector()]
    for sel in subgroups:
        sel.validate(ds.dictionary)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            curves = list(pool.map(lambda s: _curve(ds, order, s), subgroups))
    else:
        curves = [_curve(ds, order, s) for s in subgroups]
    return DispersalProfile(order, tuple(curves))


def profile_step_bounds(ds: Dataset, feature_order, subgroup: SubgroupSelector | None = None) -> list[dict]:
    """Per-step dispersal ratio and bounds for one subgroup.

    Steps whose added feature is constant within the subgroup report the
    ratio without bounds.
    """
    order = tuple(feature_order)
    subgroup = subgroup or SubgroupSelector()
    sub = filter_subgroup(ds, subgroup)
    rows = []
    if sub.row_count == 0:
        return rows
    for k in range(1, len(order)):
        row = {"subgroup": subgroup.label, "n_features": k + 1, "added": order[k]}
        try:
            r = dispersal_ratio(sub, order[:k], order[k])
        except DegenerateFeature:
            before = len(_bin_counts(sub, order[:k]))
            after = len(_bin_counts(sub, order[:k + 1]))
            row.update(ratio=after / before, u="", lower_bound="", upper_bound="")
        else:
            row.update(ratio=r.ratio, u=r.u, lower_bound=r.lower_bound, upper_bound=r.upper_bound)
        rows.append(row)
    return rows
