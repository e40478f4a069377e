"""Histogram partitions of records over a feature schema.

A schema is an ordered list of feature names.  Records sharing the same value
tuple over the schema share a bin.  Bins are identified by integer code
tuples and are always kept in lexicographic order, so every reduction over
bins runs in a fixed order.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset, _render
from .errors import DictionaryMismatch, EmptyDataset, Undiscretized

_DENSE_LIMIT = 1 << 62
_BINCOUNT_LIMIT = 1 << 22


@dataclass(frozen=True, eq=False)
class Encoding:
    """Shared integer encoding of value tuples over ``schema``.

    When the product of cardinalities fits in 62 bits codes are mixed-radix
    numbers (first feature most significant); otherwise ``rows`` holds the
    distinct code tuples and codes index into it.  Either way code order is
    lexicographic order of the tuples.
    """

    schema: tuple
    cardinalities: tuple
    levels: tuple
    rows: np.ndarray | None = None

    @property
    def dense(self) -> bool:
        return self.rows is None

    @property
    def size(self) -> int:
        if self.dense:
            return math.prod(self.cardinalities)
        return len(self.rows)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if not self.dense:
            return self.rows[codes]
        if not self.schema:
            return np.zeros((codes.size, 0), dtype=np.int64)
        cols = np.unravel_index(codes, self.cardinalities)
        return np.stack(cols, axis=1).astype(np.int64)

    def labels(self, key) -> tuple:
        return tuple(self.levels[j][c] for j, c in enumerate(key))


def _check_schema(datasets: Sequence[Dataset], schema) -> tuple:
    schema = tuple(schema)
    if len(set(schema)) != len(schema):
        raise ValueError(f"schema {list(schema)} has duplicate features")
    first = datasets[0].dictionary
    for name in schema:
        spec = first[name]
        for other in datasets[1:]:
            if other.dictionary[name] != spec:
                raise DictionaryMismatch(f"feature {name!r} is declared differently across datasets")
    return schema


def encode(datasets: Sequence[Dataset], schema, *, exact_numeric: bool = False,
           strict: bool = False, cache: dict | None = None) -> tuple[list, Encoding]:
    """Encode each dataset's rows over ``schema`` with one shared encoding.

    Numeric features are discretized into their dictionary bins, or, with
    ``exact_numeric``, ranked by raw value so only identical values collide.
    ``strict`` refuses numeric features that lack declared cut points.
    ``cache`` (a plain dict owned by the caller) memoizes per-column codes
    across calls on the same datasets.
    """
    schema = _check_schema(datasets, schema)
    dictionary = datasets[0].dictionary
    columns = [[] for _ in datasets]
    cards = []
    levels = []
    for name in schema:
        spec = dictionary[name]
        if spec.is_numeric and exact_numeric:
            raw = [ds.column(name) for ds in datasets]
            uniq, inv = np.unique(np.concatenate(raw), return_inverse=True)
            offsets = np.cumsum([0] + [len(r) for r in raw])
            for i in range(len(datasets)):
                columns[i].append(inv[offsets[i]:offsets[i + 1]].astype(np.int64))
            cards.append(max(len(uniq), 1))
            levels.append(tuple(_render(v) for v in uniq))
            continue
        if spec.is_numeric and strict and spec.bins is None:
            raise Undiscretized(f"numeric feature {name!r} has no declared cut points")
        for i, ds in enumerate(datasets):
            if cache is None:
                columns[i].append(ds.codes(name).astype(np.int64))
                continue
            key = (i, name)
            if key not in cache:
                cache[key] = ds.codes(name).astype(np.int64)
            columns[i].append(cache[key])
        cards.append(spec.cardinality)
        levels.append(spec.levels)

    if math.prod(cards) < _DENSE_LIMIT:
        out = []
        for cols, ds in zip(columns, datasets):
            code = np.zeros(ds.row_count, dtype=np.int64)
            for col, card in zip(cols, cards):
                code = code * card + col
            out.append(code)
        return out, Encoding(schema, tuple(cards), tuple(levels))

    stacked = [np.stack(cols, axis=1) for cols in columns]
    rows, inverse = np.unique(np.concatenate(stacked), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1).astype(np.int64)
    offsets = np.cumsum([0] + [len(s) for s in stacked])
    out = [inverse[offsets[i]:offsets[i + 1]] for i in range(len(datasets))]
    return out, Encoding(schema, tuple(cards), tuple(levels), rows)


def count_codes(codes: np.ndarray, enc: Encoding) -> tuple[np.ndarray, np.ndarray]:
    """Occupied codes (sorted) and their counts."""
    if enc.size <= _BINCOUNT_LIMIT:
        full = np.bincount(codes, minlength=enc.size)
        occupied = np.flatnonzero(full)
        return occupied.astype(np.int64), full[occupied].astype(np.int64)
    uniq, counts = np.unique(codes, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64)


def aligned_counts(codes_a: np.ndarray, codes_b: np.ndarray, enc: Encoding):
    """Counts of both code arrays over the sorted union of their supports."""
    if enc.size <= _BINCOUNT_LIMIT:
        ca = np.bincount(codes_a, minlength=enc.size)
        cb = np.bincount(codes_b, minlength=enc.size)
        union = np.flatnonzero((ca > 0) | (cb > 0))
        return union, ca[union], cb[union]
    union, inverse = np.unique(np.concatenate([codes_a, codes_b]), return_inverse=True)
    inverse = inverse.reshape(-1)
    ca = np.bincount(inverse[:len(codes_a)], minlength=len(union))
    cb = np.bincount(inverse[len(codes_a):], minlength=len(union))
    return union, ca, cb


def tvd_from_counts(ca: np.ndarray, cb: np.ndarray) -> float:
    """Sum of absolute density differences, with exactly rounded summation."""
    na = ca.sum()
    nb = cb.sum()
    if na == 0 or nb == 0:
        raise EmptyDataset("total variation needs two non-empty datasets")
    diff = np.abs(ca / na - cb / nb)
    return math.fsum(diff.tolist())


def tvd_exact(ca: np.ndarray, cb: np.ndarray) -> Fraction:
    """Total variation distance as an exact rational.

    ``sum |ca/na - cb/nb| = sum |ca*nb - cb*na| / (na*nb)``, so the numerator
    is an integer and no rounding happens at all.
    """
    na = int(ca.sum())
    nb = int(cb.sum())
    if na == 0 or nb == 0:
        raise EmptyDataset("total variation needs two non-empty datasets")
    num = np.abs(ca.astype(np.int64) * nb - cb.astype(np.int64) * na)
    return Fraction(int(num.sum(dtype=np.int64)), na * nb)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Occupied bins over ``schema`` with exact integer counts.

    ``keys`` is an ``(n_bins, len(schema))`` array of level codes in
    lexicographic order; ``levels`` gives the label for each code.
    """

    schema: tuple
    keys: np.ndarray
    counts: np.ndarray
    levels: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def __len__(self):
        return self.n_bins

    def label_keys(self) -> list:
        return [tuple(self.levels[j][c] for j, c in enumerate(row)) for row in self.keys.tolist()]

    def as_dict(self) -> dict:
        return dict(zip(self.label_keys(), self.counts.tolist()))


@dataclass(frozen=True, eq=False)
class Density:
    schema: tuple
    keys: np.ndarray
    probabilities: np.ndarray
    levels: tuple

    @property
    def support_size(self) -> int:
        return len(self.probabilities)

    def label_keys(self) -> list:
        return [tuple(self.levels[j][c] for j, c in enumerate(row)) for row in self.keys.tolist()]

    def as_dict(self) -> dict:
        return dict(zip(self.label_keys(), self.probabilities.tolist()))

    @classmethod
    def from_dict(cls, schema, mapping: dict) -> "Density":
        """Density from ``{label tuple: probability}``; labels become their own levels."""
        schema = tuple(schema)
        items = sorted(mapping.items())
        k = len(schema)
        levels = tuple(tuple(sorted({key[j] for key, _ in items})) for j in range(k))
        index = [{lab: i for i, lab in enumerate(lv)} for lv in levels]
        keys = np.array([[index[j][key[j]] for j in range(k)] for key, _ in items],
                        dtype=np.int64).reshape(len(items), k)
        probs = np.array([p for _, p in items], dtype=np.float64)
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be positive and sum to 1")
        return cls(schema, keys, probs, levels)


def bin_records(ds: Dataset, schema, *, strict: bool = False) -> Histogram:
    """Histogram of ``ds`` over ``schema``.

    Numeric features fall into their dictionary bins (declared cut points or
    the default equal-width bins); ``strict=True`` requires declared cut
    points instead.
    """
    if ds.row_count == 0:
        raise EmptyDataset("cannot bin an empty dataset")
    (codes,), enc = encode([ds], schema, strict=strict)
    occupied, counts = count_codes(codes, enc)
    return Histogram(enc.schema, enc.decode(occupied), counts, enc.levels)


def density(h: Histogram) -> Density:
    total = h.total
    if total == 0:
        raise EmptyDataset("density of an empty histogram")
    return Density(h.schema, h.keys, h.counts / total, h.levels)


def count_distinct_bins(ds: Dataset, schema, *, strict: bool = False) -> int:
    if ds.row_count == 0:
        raise EmptyDataset("cannot bin an empty dataset")
    (codes,), enc = encode([ds], schema, strict=strict)
    return len(count_codes(codes, enc)[0])


def _label_rows(d: Density) -> list:
    return d.label_keys()


def total_variation(a: Density, b: Density) -> float:
    """Sum over the union of supports of ``|p_a - p_b|``; lies in ``[0, 2]``."""
    if tuple(a.schema) != tuple(b.schema):
        raise DictionaryMismatch(f"schemas differ: {list(a.schema)} vs {list(b.schema)}")
    if a.levels == b.levels:
        ka = [tuple(r) for r in a.keys.tolist()]
        kb = [tuple(r) for r in b.keys.tolist()]
    else:
        ka = _label_rows(a)
        kb = _label_rows(b)
    pa = dict(zip(ka, a.probabilities.tolist()))
    pb = dict(zip(kb, b.probabilities.tolist()))
    union = sorted(set(pa) | set(pb))
    return math.fsum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in union)
