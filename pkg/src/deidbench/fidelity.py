"""Distributional fidelity: univariate, correlation and k-marginal comparisons.

The k-marginal score maps the mean total variation distance over a set of
k-feature marginals onto ``0..1000``::

    score = round_half_up(1000 * (1 - mean_tvd / 2))

so identical data score 1000 and data with disjoint marginals score 0.
Each TVD is an exact rational (integer numerator over ``na * nb``), so the
score is computed without floating-point rounding.
"""
from __future__ import annotations

import itertools
import math
import warnings
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.optimize import isotonic_regression

from .dataset import Dataset
from .errors import (
    DictionaryMismatch,
    EmptyDataset,
    FlatCalibration,
    MetricError,
    ValidationError,
)
from .partition import aligned_counts, encode, tvd_exact

DEFAULT_ES_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
_ENUMERATE_LIMIT = 200_000


def shared_features(t: Dataset, d: Dataset, features=None) -> tuple:
    """Metric features of ``t`` after checking ``d`` declares them identically."""
    names = tuple(features) if features is not None else t.dictionary.metric_features()
    for name in names:
        spec = t.dictionary[name]
        if name not in d.dictionary:
            raise DictionaryMismatch(f"feature {name!r} is missing from the deidentified data")
        if d.dictionary[name] != spec:
            raise DictionaryMismatch(f"feature {name!r} is declared differently in the two datasets")
    return names


def round_half_up(x) -> int:
    return int(math.floor(x + Fraction(1, 2)))


def score_from_tvd(mean_tvd) -> int:
    """Score for a mean TVD; pass a ``Fraction`` to round without float error."""
    if not isinstance(mean_tvd, Fraction):
        mean_tvd = Fraction(mean_tvd)
    return round_half_up(1000 * (1 - mean_tvd / 2))


@dataclass(frozen=True)
class UnivariateComparison:
    feature: str
    labels: tuple
    target: np.ndarray
    deid: np.ndarray
    tvd: float


def _weighted_density(codes, weights, size):
    w = np.bincount(codes, weights=weights, minlength=size)
    total = w.sum()
    if total <= 0:
        raise MetricError("sampling weights sum to zero")
    return w / total


def univariate_report(t: Dataset, d: Dataset, *, weight: str | None = None) -> dict:
    """Per-feature densities over the union of observed values, with their TVD.

    Numeric features are compared over their dictionary bins.  ``weight``
    names a weight feature used to weight both densities.
    """
    if t.row_count == 0 or d.row_count == 0:
        raise EmptyDataset("univariate comparison needs non-empty datasets")
    names = shared_features(t, d)
    if set(d.dictionary.metric_features()) != set(names):
        raise DictionaryMismatch("datasets carry different feature sets")
    wt = wd = None
    if weight is not None:
        shared_features(t, d, [weight])
        wt, wd = t.column(weight), d.column(weight)
    out = {}
    for name in names:
        spec = t.dictionary[name]
        ct, cd = t.codes(name), d.codes(name)
        size = spec.cardinality
        if weight is None:
            pt = np.bincount(ct, minlength=size) / t.row_count
            pd_ = np.bincount(cd, minlength=size) / d.row_count
        else:
            pt = _weighted_density(ct, wt, size)
            pd_ = _weighted_density(cd, wd, size)
        union = np.flatnonzero((pt > 0) | (pd_ > 0))
        pt, pd_ = pt[union], pd_[union]
        tvd = math.fsum(np.abs(pt - pd_).tolist())
        out[name] = UnivariateComparison(name, tuple(spec.levels[i] for i in union), pt, pd_, tvd)
    return out


@dataclass(frozen=True)
class CorrelationDifference:
    """``delta[i, j] = |corr_target - corr_deid|``; NaN where undefined."""

    method: str
    features: tuple
    target: np.ndarray
    deid: np.ndarray
    delta: np.ndarray

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.delta)


def correlation_features(ds: Dataset) -> tuple:
    return tuple(s.name for s in ds.dictionary.features
                 if not s.is_weight and s.kind in ("ordinal", "numeric"))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    # exactly rounded sums keep the result independent of row order
    dx = x - math.fsum(x.tolist()) / x.size
    dy = y - math.fsum(y.tolist()) / y.size
    sxy = math.fsum((dx * dy).tolist())
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    return min(max(sxy / math.sqrt(sxx * syy), -1.0), 1.0)


def _corr_matrix(ds: Dataset, names: tuple, method: str) -> np.ndarray:
    cols = [ds.column(n).astype(np.float64) for n in names]
    k = len(names)
    out = np.full((k, k), np.nan)
    constant = [c.size < 2 or np.all(c == c[0]) for c in cols]
    for i in range(k):
        if not constant[i]:
            out[i, i] = 1.0
        for j in range(i + 1, k):
            if constant[i] or constant[j]:
                continue
            if method == "pearson":
                r = _pearson(cols[i], cols[j])
            else:
                r = float(stats.kendalltau(cols[i], cols[j], variant="b").statistic)
            out[i, j] = out[j, i] = r
    return out


def correlation_difference(t: Dataset, d: Dataset, method: str = "pearson",
                           features=None) -> CorrelationDifference:
    """Absolute pairwise correlation differences over ordinal and numeric features.

    Ordinal features enter through their rank codes; categorical features are
    excluded.  ``method`` is ``"pearson"`` or ``"kendall_tau_b"``.
    """
    if method not in ("pearson", "kendall_tau_b"):
        raise ValueError(f"unknown correlation method {method!r}")
    names = tuple(features) if features is not None else correlation_features(t)
    shared_features(t, d, names)
    for n in names:
        if t.dictionary[n].kind == "categorical":
            raise ValidationError(f"categorical feature {n!r} has no correlation")
    if len(names) < 2:
        raise MetricError("correlations need at least two ordinal or numeric features")
    ct = _corr_matrix(t, names, method)
    cd = _corr_matrix(d, names, method)
    delta = np.abs(ct - cd)
    np.fill_diagonal(delta, 0.0)
    return CorrelationDifference(method, names, ct, cd, delta)


@dataclass(frozen=True)
class KMarginalConfig:
    k: int = 3
    n_subsets: int = 50
    seed: int = 0
    always_include: tuple = ()
    exhaustive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "always_include", tuple(self.always_include))
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.n_subsets < 1:
            raise ValidationError("n_subsets must be at least 1")
        if len(self.always_include) >= self.k:
            raise ValidationError("always_include must hold fewer than k features")
        if len(set(self.always_include)) != len(self.always_include):
            raise ValidationError("always_include has duplicates")


@dataclass(frozen=True)
class KMarginalScore:
    score: int
    mean_tvd: float
    subsets: tuple
    tvds: tuple
    warnings: tuple = ()

    @property
    def raw_score(self) -> float:
        """Unrounded score, used for subsample calibration."""
        return 1000.0 * (1.0 - self.mean_tvd / 2.0)

    @property
    def per_subset(self) -> list:
        return list(zip(self.subsets, self.tvds))

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "mean_tvd": self.mean_tvd,
            "n_subsets": len(self.subsets),
            "warnings": list(self.warnings),
        }


def choose_subsets(features, cfg: KMarginalConfig) -> tuple[tuple, list]:
    """Feature subsets for a k-marginal run, in canonical order.

    Every subset holds ``cfg.always_include`` plus ``k - len(always_include)``
    other features.  Sampled mode draws distinct subsets uniformly without
    replacement from a generator seeded with ``cfg.seed``.
    """
    features = tuple(features)
    position = {f: i for i, f in enumerate(features)}
    for f in cfg.always_include:
        if f not in position:
            raise ValidationError(f"always_include feature {f!r} is not being evaluated")
    if cfg.k > len(features):
        raise ValidationError(f"k = {cfg.k} exceeds the {len(features)} available features")
    fixed = tuple(f for f in features if f in cfg.always_include)
    others = tuple(f for f in features if f not in cfg.always_include)
    r = cfg.k - len(fixed)
    total = math.comb(len(others), r)
    notes = []

    def build(chosen):
        return tuple(sorted(fixed + tuple(others[i] for i in chosen), key=position.__getitem__))

    if cfg.exhaustive or cfg.n_subsets >= total:
        if not cfg.exhaustive and cfg.n_subsets > total:
            msg = f"requested {cfg.n_subsets} subsets but only {total} exist; using all"
            warnings.warn(msg, stacklevel=3)
            notes.append(msg)
        return tuple(build(c) for c in itertools.combinations(range(len(others)), r)), notes

    rng = np.random.default_rng(cfg.seed)
    if total <= _ENUMERATE_LIMIT:
        combos = list(itertools.combinations(range(len(others)), r))
        picks = np.sort(rng.choice(total, size=cfg.n_subsets, replace=False))
        chosen = [combos[i] for i in picks]
    else:
        seen = set()
        while len(seen) < cfg.n_subsets:
            seen.add(tuple(sorted(rng.choice(len(others), size=r, replace=False).tolist())))
        chosen = sorted(seen)
    return tuple(build(c) for c in chosen), notes


class _PairCodes:
    """Joint codes of a (target, deid) pair per feature subset, memoized."""

    def __init__(self, t: Dataset, d: Dataset):
        self.t = t
        self.d = d
        self._columns = {}
        self._joint = {}

    def joint(self, subset):
        if subset not in self._joint:
            (ct, cd), enc = encode([self.t, self.d], subset, cache=self._columns)
            self._joint[subset] = (ct, cd, enc)
        return self._joint[subset]

    def tvd(self, subset, mask_t=None, mask_d=None) -> Fraction:
        ct, cd, enc = self.joint(subset)
        if mask_t is not None:
            ct = ct[mask_t]
        if mask_d is not None:
            cd = cd[mask_d]
        _, a, b = aligned_counts(ct, cd, enc)
        return tvd_exact(a, b)


def _score(tvds, subsets, notes=()) -> KMarginalScore:
    mean = sum(tvds, Fraction(0)) / len(tvds)
    return KMarginalScore(score_from_tvd(mean), float(mean), tuple(subsets),
                          tuple(float(v) for v in tvds), tuple(notes))


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def kmarginal_score(t: Dataset, d: Dataset, cfg: KMarginalConfig, *, features=None,
                    subsets=None, workers: int = 1) -> KMarginalScore:
    """Mean TVD across k-feature marginals of ``t`` and ``d``, as a 0-1000 score."""
    if t.row_count == 0 or d.row_count == 0:
        raise EmptyDataset("k-marginal score needs non-empty datasets")
    names = shared_features(t, d, features)
    notes = []
    if subsets is None:
        subsets, notes = choose_subsets(names, cfg)
    pair = _PairCodes(t, d)
    tvds = _map(pair.tvd, subsets, workers)
    return _score(tvds, subsets, notes)


@dataclass(frozen=True)
class GroupScore:
    group: tuple
    n_target: int
    n_deid: int
    score: KMarginalScore
    missing_in_deid: bool = False

    @property
    def label(self) -> str:
        return ",".join(f"{f}={v}" for f, v in self.group)


def _group_cells(t: Dataset, d: Dataset, group_features):
    (gt, gd), enc = encode([t, d], group_features)
    cells = np.unique(gt)
    keys = enc.decode(cells)
    for code, key in zip(cells.tolist(), keys):
        yield tuple(zip(group_features, enc.labels(key))), gt == code, gd == code


def kmarginal_by_group(t: Dataset, d: Dataset, group_features, cfg: KMarginalConfig, *,
                       workers: int = 1) -> list[GroupScore]:
    """k-marginal score inside each observed target group cell.

    Each marginal is ``group_features`` plus ``k - len(group_features)`` other
    features.  Within a cell the comparison uses the conditional densities
    ``p(bin | group)`` of each dataset, so group size does not depress scores.
    Cells absent from the deidentified data score 0 and are flagged.
    """
    group_features = tuple(group_features)
    names = shared_features(t, d)
    for g in group_features:
        if g not in names:
            raise ValidationError(f"group feature {g!r} is not being evaluated")
    if set(group_features) & set(cfg.always_include):
        raise ValidationError("group features may not also appear in always_include")
    if cfg.k <= len(group_features):
        raise ValidationError("k must exceed the number of group features")
    if t.row_count == 0 or d.row_count == 0:
        raise EmptyDataset("k-marginal score needs non-empty datasets")
    others = tuple(n for n in names if n not in group_features)
    inner = replace(cfg, k=cfg.k - len(group_features))
    subsets, notes = choose_subsets(others, inner)
    pair = _PairCodes(t, d)

    def one(cell):
        group, mt, md = cell
        n_t, n_d = int(mt.sum()), int(md.sum())
        if n_d == 0:
            tvds = [Fraction(2)] * len(subsets)
            return GroupScore(group, n_t, 0, _score(tvds, subsets, notes), True)
        tvds = [pair.tvd(s, mt, md) for s in subsets]
        return GroupScore(group, n_t, n_d, _score(tvds, subsets, notes))

    for s in subsets:
        pair.joint(s)
    return _map(one, list(_group_cells(t, d, group_features)), workers)


@dataclass(frozen=True)
class GeographyBreakdown:
    feature: str
    scores: tuple
    worst: str | None

    def by_value(self) -> dict:
        return {g.group[0][1]: g for g in self.scores}


def kmarginal_by_geography(t: Dataset, d: Dataset, geo_feature: str, cfg: KMarginalConfig, *,
                           workers: int = 1) -> GeographyBreakdown:
    """Score each observed geography value on the remaining features.

    Every geography uses the same feature subsets.  Values absent from the
    deidentified data score 0 and carry ``missing_in_deid``.
    """
    names = shared_features(t, d)
    if geo_feature not in names:
        raise ValidationError(f"geography feature {geo_feature!r} is not being evaluated")
    if t.dictionary[geo_feature].is_numeric:
        raise ValidationError("the geography feature must be categorical")
    if t.row_count == 0 or d.row_count == 0:
        raise EmptyDataset("k-marginal score needs non-empty datasets")
    others = tuple(n for n in names if n != geo_feature)
    inner = replace(cfg, always_include=tuple(f for f in cfg.always_include if f != geo_feature))
    subsets, notes = choose_subsets(others, inner)
    pair = _PairCodes(t, d)
    for s in subsets:
        pair.joint(s)

    def one(cell):
        group, mt, md = cell
        n_t, n_d = int(mt.sum()), int(md.sum())
        if n_d == 0:
            return GroupScore(group, n_t, 0, _score([Fraction(2)] * len(subsets), subsets, notes), True)
        return GroupScore(group, n_t, n_d, _score([pair.tvd(s, mt, md) for s in subsets], subsets, notes))

    scores = _map(one, list(_group_cells(t, d, (geo_feature,))), workers)
    worst = min(scores, key=lambda g: g.score.score).group[0][1] if scores else None
    return GeographyBreakdown(geo_feature, tuple(scores), worst)


@dataclass(frozen=True)
class CalibrationPoint:
    fraction: float
    mean_score: float
    stddev: float
    corrected: float
    scores: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class EquivalentSubsample:
    """Where a deid score falls on the subsample-fraction calibration curve.

    ``bound`` is ``"exact"`` when the score was interpolated, ``"above"`` when
    it beats the largest calibrated fraction and ``"below"`` when it is worse
    than the smallest.
    """

    calibration: tuple
    score: float
    es_fraction: float
    bound: str

    @property
    def es_percent(self) -> float:
        return round(self.es_fraction * 100.0, 9)

    @property
    def label(self) -> str:
        pct = f"{self.es_percent:g}%"
        return {"exact": pct, "above": f"≥ {pct}", "below": f"< {pct}"}[self.bound]

    def to_dict(self) -> dict:
        return {
            "es_percent": self.es_percent,
            "bound": self.bound,
            "label": self.label,
            "score": self.score,
            "calibration": [
                {"fraction": c.fraction, "mean_score": c.mean_score, "stddev": c.stddev,
                 "corrected": c.corrected} for c in self.calibration],
        }


def equivalent_subsample(t: Dataset, score: KMarginalScore, fractions=DEFAULT_ES_GRID,
                         trials: int = 10, seed: int = 0, *, workers: int = 1) -> EquivalentSubsample:
    """Calibrate ``score`` against uniform subsamples of the target.

    For each fraction, ``trials`` subsamples drawn without replacement are
    scored against the full target on the same feature subsets as ``score``.
    The trial means are made non-decreasing by isotonic regression before the
    deid score is interpolated onto them.
    """
    fractions = tuple(float(f) for f in fractions)
    if not fractions or any(not 0 < f < 1 for f in fractions):
        raise ValidationError("calibration fractions must lie strictly between 0 and 1")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValidationError("calibration fractions must be strictly increasing")
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    n = t.row_count
    if n == 0:
        raise EmptyDataset("cannot subsample an empty target")
    subsets = score.subsets
    pair = _PairCodes(t, t)
    for s in subsets:
        pair.joint(s)

    def trial(job):
        i, j = job
        rng = np.random.default_rng([seed, i, j])
        m = max(1, round_half_up(fractions[i] * n))
        idx = rng.choice(n, size=m, replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        mean = sum((pair.tvd(s, mask, None) for s in subsets), Fraction(0)) / len(subsets)
        return float(1000 * (1 - mean / 2))

    jobs = [(i, j) for i in range(len(fractions)) for j in range(trials)]
    results = _map(trial, jobs, workers)
    raw = []
    spread = []
    per_fraction = []
    for i in range(len(fractions)):
        vals = results[i * trials:(i + 1) * trials]
        per_fraction.append(tuple(vals))
        raw.append(math.fsum(vals) / trials)
        spread.append(float(np.std(vals, ddof=1)) if trials > 1 else 0.0)
    corrected = isotonic_regression(np.array(raw), increasing=True).x.tolist()
    calibration = tuple(CalibrationPoint(f, m, s, c, v) for f, m, s, c, v in
                        zip(fractions, raw, spread, corrected, per_fraction))
    lo, hi = corrected[0], corrected[-1]
    if hi <= lo:
        raise FlatCalibration("every calibration fraction produced the same mean score")
    x = score.raw_score
    if x > hi:
        return EquivalentSubsample(calibration, x, fractions[-1], "above")
    if x < lo:
        return EquivalentSubsample(calibration, x, fractions[0], "below")
    xs, first = np.unique(np.array(corrected), return_index=True)
    es = float(np.interp(x, xs, np.array(fractions)[first]))
    return EquivalentSubsample(calibration, x, es, "exact")
