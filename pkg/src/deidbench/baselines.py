"""Naive deidentifiers used to drive the metrics end to end.

Every function is deterministic given its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import EmptyDataset, TooManyCells, ValidationError
from .fidelity import round_half_up

DEFAULT_MAX_CELLS = 10 ** 7
_NOISE_BLOCK = 1 << 16


def deid_identity(t: Dataset) -> Dataset:
    return t.take(np.arange(t.row_count))


def deid_subsample(t: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Uniform sample without replacement of ``round(fraction * rows)`` records,
    in random order."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    m = round_half_up(fraction * t.row_count)
    if m == 0:
        raise EmptyDataset(f"subsampling {t.row_count} rows at {fraction} leaves no records")
    rng = np.random.default_rng(seed)
    return t.take(rng.permutation(t.row_count)[:m])


def deid_swap(t: Dataset, rate: float, features, seed: int = 0) -> Dataset:
    """Exchange values of each feature among a random ``rate`` share of rows.

    For every feature independently, ``round(rate * rows)`` rows are drawn and
    their values rotated by one position among themselves, so each drawn row
    receives another drawn row's value and per-feature histograms are
    unchanged.
    """
    features = list(features)
    if not features:
        raise ValidationError("swap needs at least one feature")
    if not 0.0 <= rate <= 1.0:
        raise ValidationError(f"swap rate must lie in [0, 1], got {rate}")
    for name in features:
        t.dictionary[name]
    n = t.row_count
    m = round_half_up(rate * n)
    rng = np.random.default_rng(seed)
    columns = {name: t.column(name) for name in t.feature_names}
    for name in features:
        idx = rng.permutation(n)[:m]
        if m < 2:
            continue
        col = columns[name].copy()
        col[idx] = col[np.roll(idx, -1)]
        columns[name] = col
    return Dataset(t.dictionary, columns, validate=False)


@dataclass(frozen=True)
class DpHistogramParams:
    epsilon: float
    schema: tuple = field(default=())
    max_cells: int = DEFAULT_MAX_CELLS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be a positive number, got {self.epsilon}")
        if not self.schema:
            raise ValidationError("DP histogram needs a non-empty schema")
        if self.max_cells < 1:
            raise ValidationError("max_cells must be positive")


def geometric_noise(n_cells: int, epsilon: float, seed: int) -> np.ndarray:
    """Two-sided geometric noise, one draw per cell.

    Each noise is the difference of two geometric draws with success
    probability ``1 - exp(-epsilon)``.  Each block of cells gets its own
    Philox stream keyed by ``seed`` with the block index in the counter, and
    every cell consumes exactly two uniforms, so a cell's noise depends only
    on its index.
    """
    out = np.empty(n_cells, dtype=np.int64)
    for block, start in enumerate(range(0, n_cells, _NOISE_BLOCK)):
        size = min(_NOISE_BLOCK, n_cells - start)
        rng = np.random.Generator(np.random.Philox(key=seed, counter=block << 128))
        # inversion: P(G >= k) = exp(-epsilon * k), two uniforms per cell
        g = np.floor(np.log1p(-rng.random((size, 2))) / -epsilon).astype(np.int64)
        out[start:start + size] = g[:, 0] - g[:, 1]
    return out


def deid_dp_histogram(t: Dataset, params: DpHistogramParams) -> Dataset:
    """Release the full contingency table over ``params.schema`` with noisy counts.

    Every cell, occupied or not, gets independent two-sided geometric noise
    with parameter ``epsilon``; negative counts become zero; each cell is
    written out as that many identical records, cells in lexicographic order.
    The output holds only the schema features.
    """
    dictionary = t.dictionary.restrict(params.schema)
    names = params.schema
    specs = [dictionary[n] for n in names]
    for spec in specs:
        if spec.is_numeric:
            raise ValidationError(f"DP histogram schema feature {spec.name!r} is numeric")
        if spec.is_weight:
            raise ValidationError(f"DP histogram schema feature {spec.name!r} is a weight")
    cards = tuple(s.cardinality for s in specs)
    n_cells = math.prod(cards)
    if n_cells > params.max_cells:
        raise TooManyCells(f"schema spans {n_cells} cells, above the cap of {params.max_cells}")
    code = np.zeros(t.row_count, dtype=np.int64)
    for name, card in zip(names, cards):
        code = code * card + t.column(name)
    counts = np.bincount(code, minlength=n_cells)
    noisy = np.maximum(counts + geometric_noise(n_cells, params.epsilon, params.seed), 0)
    cells = np.repeat(np.arange(n_cells, dtype=np.int64), noisy)
    keys = np.unravel_index(cells, cards)
    columns = {name: keys[j].astype(np.int32) for j, name in enumerate(names)}
    return Dataset(dictionary.restrict(names), columns, validate=False)
