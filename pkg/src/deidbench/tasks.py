"""Task-style comparisons: propensity distinguishability and subgroup regression."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import EmptyDataset, MetricError, ValidationError
from .fidelity import shared_features
from .partition import aligned_counts, encode

N_PROPENSITY_BINS = 100


@dataclass(frozen=True)
class PropensityResult:
    """Propensity traces over 100 equal-width bins of ``[0, 1]``.

    ``auc`` treats deid records as positives and target records as
    negatives, ranking by the exact per-bin propensity.
    """

    schema: tuple
    bin_edges: np.ndarray
    target_trace: np.ndarray
    deid_trace: np.ndarray
    divergence: float
    auc: float

    def rows(self) -> list[dict]:
        return [{"bin_lower": float(self.bin_edges[i]), "bin_upper": float(self.bin_edges[i + 1]),
                 "target": int(self.target_trace[i]), "deid": int(self.deid_trace[i])}
                for i in range(N_PROPENSITY_BINS)]


def _js_divergence_bits(a: np.ndarray, b: np.ndarray) -> float:
    p = a / a.sum()
    q = b / b.sum()
    m = (p + q) / 2.0
    terms = []
    for x in (p, q):
        nz = x > 0
        terms.extend((0.5 * x[nz] * np.log2(x[nz] / m[nz])).tolist())
    return min(max(math.fsum(terms), 0.0), 1.0)


def _auc(propensity: np.ndarray, neg: np.ndarray, pos: np.ndarray) -> float:
    order = np.argsort(propensity, kind="stable")
    p, neg, pos = propensity[order], neg[order], pos[order]
    values, start = np.unique(p, return_index=True)
    neg_v = np.add.reduceat(neg, start)
    pos_v = np.add.reduceat(pos, start)
    below = np.concatenate([[0], np.cumsum(neg_v)[:-1]])
    wins = math.fsum((pos_v * (below + 0.5 * neg_v)).tolist())
    return wins / (float(neg.sum()) * float(pos.sum()))


def propensity(t: Dataset, d: Dataset, schema=None) -> PropensityResult:
    """Distinguishability of target and deid records by a bin-frequency classifier.

    A record in bin ``b`` gets propensity ``d_count(b) / (t_count(b) +
    d_count(b))``, the empirical probability that a record of that bin came
    from the deidentified data.  Identical data put every record at exactly
    0.5.
    """
    if t.row_count == 0 or d.row_count == 0:
        raise EmptyDataset("propensity needs two non-empty datasets")
    schema = shared_features(t, d, schema)
    (ct, cd), enc = encode([t, d], schema)
    _, nt, nd = aligned_counts(ct, cd, enc)
    total = nt + nd
    scores = nd / total
    bins = np.minimum((N_PROPENSITY_BINS * nd) // total, N_PROPENSITY_BINS - 1)
    target_trace = np.bincount(bins, weights=nt, minlength=N_PROPENSITY_BINS).astype(np.int64)
    deid_trace = np.bincount(bins, weights=nd, minlength=N_PROPENSITY_BINS).astype(np.int64)
    edges = np.linspace(0.0, 1.0, N_PROPENSITY_BINS + 1)
    return PropensityResult(
        tuple(schema), edges, target_trace, deid_trace,
        _js_divergence_bits(target_trace.astype(float), deid_trace.astype(float)),
        _auc(scores, nt.astype(float), nd.astype(float)),
    )


@dataclass(frozen=True)
class Line:
    slope: float
    intercept: float
    n: int


@dataclass(frozen=True)
class RegressionGroup:
    """Regression lines and heatmaps for one subgroup.

    Heatmaps have shape ``(n_y, n_x)``; each column is the distribution of
    ``y`` for one ``x`` level.  Columns with no target records are left at
    zero and listed in ``empty_target_columns``.
    """

    group: tuple
    n_target: int
    n_deid: int
    target_line: Line | None
    deid_line: Line | None
    flags: tuple
    target_heatmap: np.ndarray
    deid_heatmap: np.ndarray
    deviation_heatmap: np.ndarray
    empty_target_columns: tuple

    @property
    def label(self) -> str:
        return ",".join(f"{f}={v}" for f, v in self.group) or "all"


@dataclass(frozen=True)
class RegressionResult:
    x: str
    y: str
    x_levels: tuple
    y_levels: tuple
    groups: tuple

    def lines(self) -> list[dict]:
        out = []
        for g in self.groups:
            row = {"group": g.label, "n_target": g.n_target, "n_deid": g.n_deid,
                   "flags": list(g.flags)}
            for which, line in (("target", g.target_line), ("deid", g.deid_line)):
                row[f"{which}_slope"] = line.slope if line else None
                row[f"{which}_intercept"] = line.intercept if line else None
            out.append(row)
        return out


def ols(x: np.ndarray, y: np.ndarray) -> Line | None:
    """Least-squares line, or ``None`` when ``x`` has fewer than two distinct values."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or np.all(x == x[0]):
        return None
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = math.fsum((dx * (y - ym)).tolist()) / math.fsum((dx * dx).tolist())
    return Line(slope, float(ym - slope * xm), int(x.size))


def _regression_values(ds: Dataset, name: str) -> np.ndarray:
    return ds.column(name).astype(np.float64)


def _column_normalized(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sums = counts.sum(axis=0)
    out = np.zeros_like(counts, dtype=np.float64)
    nz = sums > 0
    out[:, nz] = counts[:, nz] / sums[nz]
    return out, ~nz


def regression_metric(t: Dataset, d: Dataset, x: str, y: str, group_features=()) -> RegressionResult:
    """Per-group OLS of ``y`` on ``x`` plus column-normalized heatmaps.

    Ordinal features enter as 0-based rank codes, numeric features as raw
    values (heatmaps use their dictionary bins).  A dataset whose group has
    fewer than two distinct ``x`` values gets an ``InsufficientVariation``
    flag instead of a line.
    """
    if x == y:
        raise ValidationError("x and y must be different features")
    group_features = tuple(group_features)
    shared_features(t, d, (x, y) + group_features)
    for name in (x, y):
        if t.dictionary[name].kind == "categorical":
            raise ValidationError(f"regression feature {name!r} must be ordinal or numeric")
    if t.row_count == 0:
        raise EmptyDataset("regression needs a non-empty target")
    xs_t, ys_t = _regression_values(t, x), _regression_values(t, y)
    xs_d, ys_d = _regression_values(d, x), _regression_values(d, y)
    if np.unique(xs_t).size < 2 or np.unique(ys_t).size < 2:
        raise MetricError("x and y need at least two distinct values in the target")
    spec_x, spec_y = t.dictionary[x], t.dictionary[y]
    nx, ny = spec_x.cardinality, spec_y.cardinality
    cell_t = t.codes(y) * nx + t.codes(x)
    cell_d = d.codes(y) * nx + d.codes(x)

    if group_features:
        (gt, gd), enc = encode([t, d], group_features)
        cells = np.unique(gt)
        groups = [(tuple(zip(group_features, enc.labels(k))), gt == c, gd == c)
                  for c, k in zip(cells.tolist(), enc.decode(cells))]
    else:
        groups = [((), np.ones(t.row_count, bool), np.ones(d.row_count, bool))]

    out = []
    for group, mt, md in groups:
        flags = []
        lt = ols(xs_t[mt], ys_t[mt])
        ld = ols(xs_d[md], ys_d[md])
        if lt is None:
            flags.append("InsufficientVariation:target")
        if ld is None:
            flags.append("InsufficientVariation:deid")
        counts_t = np.bincount(cell_t[mt], minlength=nx * ny).reshape(ny, nx)
        counts_d = np.bincount(cell_d[md], minlength=nx * ny).reshape(ny, nx)
        heat_t, empty_t = _column_normalized(counts_t)
        heat_d, _ = _column_normalized(counts_d)
        deviation = heat_d - heat_t
        deviation[:, empty_t] = 0.0
        empty_cols = tuple(spec_x.levels[i] for i in np.flatnonzero(empty_t))
        out.append(RegressionGroup(group, int(mt.sum()), int(md.sum()), lt, ld, tuple(flags),
                                   heat_t, heat_d, deviation, empty_cols))
    return RegressionResult(x, y, spec_x.levels, spec_y.levels, tuple(out))
