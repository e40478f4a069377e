"""Data dictionaries, validated columnar datasets and the views metrics use.

Categorical and ordinal columns are stored as integer codes indexing the
feature's ``levels``; numeric columns are stored as float64.  Every array held
by a :class:`Dataset` is read-only.
"""
from __future__ import annotations

import csv
import io
import json
import os
import pathlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateFeature,
    EmptyFile,
    EmptySelection,
    OutOfDomain,
    ParseError,
    RaggedRow,
    UnknownFeature,
    ValidationError,
)

KINDS = ("categorical", "ordinal", "numeric")
DEFAULT_MAX_BINS = 10


def canonical_label(value) -> str:
    """Normalize a categorical code so ``1``, ``"1"`` and ``"01"`` coincide."""
    if isinstance(value, bool):
        raise ParseError(f"boolean {value!r} is not a valid category code")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if float(value).is_integer():
            return str(int(value))
        return repr(float(value))
    text = str(value).strip()
    try:
        return str(int(text))
    except ValueError:
        pass
    try:
        number = float(text)
    except ValueError:
        return text
    if number.is_integer():
        return str(int(number))
    return text


@dataclass(frozen=True)
class FeatureSpec:
    """One column of a data dictionary.

    ``values`` lists the categorical/ordinal domain; ``ordinal_rank`` (ordinal
    only) orders that domain.  Numeric features declare ``range`` and may
    declare interior cut points in ``bins`` used whenever a metric needs
    histogram bins.
    """

    name: str
    kind: str
    values: tuple = ()
    range: tuple | None = None
    ordinal_rank: tuple | None = None
    is_weight: bool = False
    bins: tuple | None = None
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise ParseError("feature name must be non-empty")
        if self.kind not in KINDS:
            raise ParseError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "numeric":
            if self.range is None or len(self.range) != 2:
                raise ParseError(f"numeric feature {self.name!r} needs a [min, max] range")
            lo, hi = (float(v) for v in self.range)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ParseError(f"feature {self.name!r}: invalid range {self.range!r}")
            object.__setattr__(self, "range", (lo, hi))
            if self.values or self.ordinal_rank:
                raise ParseError(f"numeric feature {self.name!r} cannot declare values")
            if self.bins is not None:
                cuts = tuple(float(c) for c in self.bins)
                if any(b <= a for a, b in zip(cuts, cuts[1:])):
                    raise ParseError(f"feature {self.name!r}: cut points must increase")
                if any(not lo < c < hi for c in cuts):
                    raise ParseError(f"feature {self.name!r}: cut points must lie inside the range")
                object.__setattr__(self, "bins", cuts)
            return

        values = tuple(canonical_label(v) for v in self.values)
        if not values:
            raise ParseError(f"feature {self.name!r}: domain is empty")
        if len(set(values)) != len(values):
            raise ParseError(f"feature {self.name!r}: domain has duplicate values")
        object.__setattr__(self, "values", values)
        if self.range is not None or self.bins is not None:
            raise ParseError(f"feature {self.name!r}: range/bins only apply to numeric features")
        if self.ordinal_rank is not None:
            if self.kind != "ordinal":
                raise ParseError(f"feature {self.name!r}: ordinal_rank on a {self.kind} feature")
            rank = tuple(canonical_label(v) for v in self.ordinal_rank)
            if len(rank) != len(values) or set(rank) != set(values):
                raise ParseError(f"feature {self.name!r}: ordinal_rank must order the whole domain")
            object.__setattr__(self, "ordinal_rank", rank)

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"

    @property
    def levels(self) -> tuple:
        """Labels in code order (the ordinal rank for ordinal features)."""
        if self.is_numeric:
            return self.bin_labels
        return self.ordinal_rank or self.values

    @property
    def cardinality(self) -> int:
        return len(self.levels)

    @cached_property
    def _lookup(self) -> dict:
        return {label: code for code, label in enumerate(self.levels)}

    def code_of(self, value) -> int:
        """Code of a categorical/ordinal value; raises ``KeyError`` if absent."""
        return self._lookup[canonical_label(value)]

    @cached_property
    def bin_edges(self) -> np.ndarray:
        lo, hi = self.range
        if self.bins is not None:
            return np.array([lo, *self.bins, hi])
        if lo == hi:
            return np.array([lo, hi])
        if lo.is_integer() and hi.is_integer():
            n = min(DEFAULT_MAX_BINS, int(hi - lo) + 1)
        else:
            n = DEFAULT_MAX_BINS
        return np.linspace(lo, hi, n + 1)

    @property
    def bin_labels(self) -> tuple:
        edges = self.bin_edges
        fmt = "{:g}".format
        labels = [f"[{fmt(a)},{fmt(b)})" for a, b in zip(edges[:-2], edges[1:-1])]
        labels.append(f"[{fmt(edges[-2])},{fmt(edges[-1])}]")
        return tuple(labels)

    def discretize(self, values: np.ndarray) -> np.ndarray:
        edges = self.bin_edges
        codes = np.searchsorted(edges[1:-1], values, side="right")
        return codes.astype(np.int64)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.is_numeric:
            out["range"] = list(self.range)
            if self.bins is not None:
                out["bins"] = list(self.bins)
        else:
            out["values"] = list(self.values)
            if self.ordinal_rank is not None:
                out["ordinal_rank"] = list(self.ordinal_rank)
        if self.is_weight:
            out["is_weight"] = True
        if self.description:
            out["description"] = self.description
        return out


@dataclass(frozen=True)
class DataDictionary:
    features: tuple
    subsets: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        features = tuple(self.features)
        seen = set()
        for spec in features:
            if spec.name in seen:
                raise DuplicateFeature(f"feature {spec.name!r} declared more than once")
            seen.add(spec.name)
        subsets = {}
        for name, members in dict(self.subsets).items():
            members = tuple(members)
            for m in members:
                if m not in seen:
                    raise UnknownFeature(f"subset {name!r} references undeclared feature {m!r}")
            subsets[name] = members
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "subsets", subsets)

    @cached_property
    def _index(self) -> dict:
        return {spec.name: i for i, spec in enumerate(self.features)}

    @property
    def names(self) -> tuple:
        return tuple(spec.name for spec in self.features)

    def __getitem__(self, name: str) -> FeatureSpec:
        try:
            return self.features[self._index[name]]
        except KeyError:
            raise UnknownFeature(f"unknown feature {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._index

    def __len__(self):
        return len(self.features)

    def index(self, name: str) -> int:
        self[name]
        return self._index[name]

    def metric_features(self) -> tuple:
        """Feature names used by metrics by default (weights excluded)."""
        return tuple(spec.name for spec in self.features if not spec.is_weight)

    def resolve(self, names) -> tuple:
        """Expand a subset name or validate an explicit list of feature names."""
        if isinstance(names, str):
            if names in self.subsets:
                return self.subsets[names]
            names = [names]
        names = tuple(names)
        for n in names:
            self[n]
        return names

    def restrict(self, names: Iterable[str]) -> "DataDictionary":
        """Dictionary over ``names`` in dictionary order, keeping fully covered subsets."""
        keep = set(names)
        for n in keep:
            self[n]
        features = tuple(spec for spec in self.features if spec.name in keep)
        subsets = {k: v for k, v in self.subsets.items() if set(v) <= keep}
        return DataDictionary(features, subsets)

    def to_dict(self) -> dict:
        return {
            "features": [spec.to_dict() for spec in self.features],
            "subsets": {k: list(v) for k, v in self.subsets.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _feature_from_obj(obj) -> FeatureSpec:
    if not isinstance(obj, Mapping):
        raise ParseError(f"feature entry must be an object, got {obj!r}")
    unknown = set(obj) - {"name", "kind", "values", "range", "ordinal_rank", "is_weight",
                          "bins", "description"}
    if unknown:
        raise ParseError(f"feature {obj.get('name')!r}: unknown keys {sorted(unknown)}")
    try:
        name = obj["name"]
        kind = obj["kind"]
    except KeyError as exc:
        raise ParseError(f"feature entry missing key {exc.args[0]!r}") from None
    rank = obj.get("ordinal_rank")
    bins = obj.get("bins")
    rng = obj.get("range")
    return FeatureSpec(
        name=str(name),
        kind=str(kind),
        values=tuple(obj.get("values", ())),
        range=tuple(rng) if rng is not None else None,
        ordinal_rank=tuple(rank) if rank is not None else None,
        is_weight=bool(obj.get("is_weight", False)),
        bins=tuple(bins) if bins is not None else None,
        description=str(obj.get("description", "")),
    )


def load_dictionary(document) -> DataDictionary:
    """Parse a dictionary document (JSON text or an already-decoded mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"dictionary is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping) or "features" not in document:
        raise ParseError("dictionary must be an object with a 'features' array")
    features = document["features"]
    if not isinstance(features, list):
        raise ParseError("'features' must be an array")
    subsets = document.get("subsets", {})
    if not isinstance(subsets, Mapping):
        raise ParseError("'subsets' must be an object")
    return DataDictionary(tuple(_feature_from_obj(f) for f in features), subsets)


def read_dictionary(path) -> DataDictionary:
    with open(path, encoding="utf-8") as fh:
        return load_dictionary(fh.read())


class Dataset:
    """Immutable column store bound to a :class:`DataDictionary`."""

    __slots__ = ("dictionary", "_columns", "row_count")

    def __init__(self, dictionary: DataDictionary, columns: Mapping[str, np.ndarray],
                 *, validate: bool = True):
        if set(columns) != set(dictionary.names):
            raise ValidationError(
                f"columns {sorted(columns)} do not match dictionary features {list(dictionary.names)}")
        lengths = {len(columns[n]) for n in dictionary.names}
        if len(lengths) > 1:
            raise ValidationError(f"columns have unequal lengths {sorted(lengths)}")
        store = {}
        for spec in dictionary.features:
            col = np.asarray(columns[spec.name])
            if spec.is_numeric:
                col = np.array(col, dtype=np.float64)
                if validate:
                    lo, hi = spec.range
                    bad = np.flatnonzero(~((col >= lo) & (col <= hi)))
                    if bad.size:
                        raise OutOfDomain(int(bad[0]) + 1, spec.name, col[bad[0]])
            else:
                col = np.array(col, dtype=np.int32)
                if validate:
                    bad = np.flatnonzero((col < 0) | (col >= spec.cardinality))
                    if bad.size:
                        raise OutOfDomain(int(bad[0]) + 1, spec.name, int(col[bad[0]]))
            col.flags.writeable = False
            store[spec.name] = col
        self.dictionary = dictionary
        self._columns = store
        self.row_count = lengths.pop() if lengths else 0

    @classmethod
    def from_records(cls, dictionary: DataDictionary, records: Iterable[Sequence],
                     columns: Sequence[str] | None = None) -> "Dataset":
        """Build from value tuples given in ``columns`` order (default: dictionary order)."""
        header = list(columns) if columns is not None else list(dictionary.names)
        rows = [[_render(v) for v in rec] for rec in records]
        return _parse_rows(header, rows, dictionary)

    def __len__(self):
        return self.row_count

    def __repr__(self):
        return f"Dataset({self.row_count} rows x {len(self._columns)} features)"

    @property
    def feature_names(self) -> tuple:
        return self.dictionary.names

    def column(self, name: str) -> np.ndarray:
        """Stored column: integer codes, or float values for numeric features."""
        self.dictionary[name]
        return self._columns[name]

    def codes(self, name: str) -> np.ndarray:
        """Bin codes for ``name``; numeric features are discretized."""
        spec = self.dictionary[name]
        col = self._columns[name]
        if spec.is_numeric:
            return spec.discretize(col)
        return col

    def labels(self, name: str) -> list:
        spec = self.dictionary[name]
        col = self._columns[name]
        if spec.is_numeric:
            return [_render(v) for v in col]
        levels = spec.levels
        return [levels[c] for c in col]

    def rows(self) -> Iterable[tuple]:
        cols = [self.labels(n) for n in self.feature_names]
        return zip(*cols)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.dictionary, {n: c[idx] for n, c in self._columns.items()},
                       validate=False)

    def equals(self, other: "Dataset") -> bool:
        return (
            isinstance(other, Dataset)
            and self.dictionary == other.dictionary
            and self.row_count == other.row_count
            and all(np.array_equal(self._columns[n], other._columns[n]) for n in self.feature_names)
        )

    def fingerprint(self) -> dict:
        """Row count and observed cardinality per feature."""
        return {
            "rows": self.row_count,
            "cardinalities": {n: int(np.unique(self._columns[n]).size) for n in self.feature_names},
        }


def _render(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return str(int(value)) if value.is_integer() else repr(value)
    return str(value)


def _parse_rows(header: list, rows: list, dictionary: DataDictionary) -> Dataset:
    header = [h.strip() for h in header]
    seen = set()
    for name in header:
        if name not in dictionary:
            raise UnknownFeature(f"unknown column {name!r}")
        if name in seen:
            raise DuplicateFeature(f"column {name!r} appears twice")
        seen.add(name)
    sub = dictionary.restrict(header)
    width = len(header)
    n = len(rows)
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise RaggedRow(f"row {i} has {len(row)} fields, expected {width}")
    columns = {}
    for j, name in enumerate(header):
        spec = sub[name]
        if spec.is_numeric:
            out = np.empty(n, dtype=np.float64)
            lo, hi = spec.range
            for i, row in enumerate(rows):
                text = row[j].strip()
                try:
                    v = float(text)
                except ValueError:
                    raise OutOfDomain(i + 1, name, text) from None
                if not lo <= v <= hi:
                    raise OutOfDomain(i + 1, name, text)
                out[i] = v
        else:
            out = np.empty(n, dtype=np.int32)
            lookup = spec._lookup
            for i, row in enumerate(rows):
                text = row[j]
                code = lookup.get(text)
                if code is None:
                    code = lookup.get(canonical_label(text)) if text.strip() else None
                    if code is None:
                        raise OutOfDomain(i + 1, name, text)
                out[i] = code
        columns[name] = out
    return Dataset(sub, columns, validate=False)


def load_dataset(table, dictionary: DataDictionary) -> Dataset:
    """Parse comma-separated text with a header row against ``dictionary``.

    ``table`` may be the CSV text itself, a path-like object or an open text
    stream.  The resulting dataset's dictionary is restricted to the columns
    present, in dictionary order.
    """
    if isinstance(table, os.PathLike):
        with open(table, newline="", encoding="utf-8") as fh:
            return load_dataset(fh, dictionary)
    if isinstance(table, str):
        table = io.StringIO(table)
    reader = csv.reader(table)
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise EmptyFile("no header row")
    if header and header[0].startswith("﻿"):
        header[0] = header[0][1:]
    rows = [row for row in reader if row]
    return _parse_rows(header, rows, dictionary)


def read_dataset(path, dictionary: DataDictionary) -> Dataset:
    return load_dataset(pathlib.Path(path), dictionary)


def write_dataset(ds: Dataset, dest=None) -> str | None:
    """Write ``ds`` as CSV to a path or stream; return the text if ``dest`` is None."""
    if dest is None:
        buf = io.StringIO()
        write_dataset(ds, buf)
        return buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_dataset(ds, fh)
        return None
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(ds.feature_names)
    writer.writerows(ds.rows())
    return None


def select_features(ds: Dataset, names) -> Dataset:
    """View of ``ds`` restricted to ``names`` (a list, or a dictionary subset name)."""
    names = ds.dictionary.resolve(names)
    if not names:
        raise EmptySelection("feature selection is empty")
    if len(set(names)) != len(names):
        raise DuplicateFeature(f"feature selection {list(names)} has duplicates")
    sub = ds.dictionary.restrict(names)
    return Dataset(sub, {n: ds.column(n) for n in sub.names}, validate=False)


@dataclass(frozen=True)
class SubgroupSelector:
    """Conjunction of ``feature == value`` tests; the empty selector selects everything."""

    pairs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((str(f), v) for f, v in self.pairs))

    @classmethod
    def of(cls, **equalities) -> "SubgroupSelector":
        return cls(tuple(equalities.items()))

    @classmethod
    def parse(cls, text: str) -> "SubgroupSelector":
        """Parse ``"SEX=1,RAC1P=2"``."""
        pairs = []
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                raise ParseError(f"subgroup term {part!r} is not of the form feature=value")
            f, v = part.split("=", 1)
            pairs.append((f.strip(), v.strip()))
        return cls(tuple(pairs))

    @property
    def label(self) -> str:
        if not self.pairs:
            return "all"
        return ",".join(f"{f}={_render(v)}" for f, v in self.pairs)

    def _resolved(self, dictionary: DataDictionary) -> list:
        out = []
        for f, v in self.pairs:
            spec = dictionary[f]
            if spec.is_numeric:
                try:
                    value = float(v)
                except (TypeError, ValueError):
                    raise OutOfDomain(0, f, v) from None
                lo, hi = spec.range
                if not lo <= value <= hi:
                    raise OutOfDomain(0, f, v)
                out.append((f, value))
            else:
                try:
                    out.append((f, spec.code_of(v)))
                except KeyError:
                    raise OutOfDomain(0, f, v) from None
        return out

    def validate(self, dictionary: DataDictionary) -> None:
        self._resolved(dictionary)

    def mask(self, ds: Dataset) -> np.ndarray:
        keep = np.ones(ds.row_count, dtype=bool)
        for f, code in self._resolved(ds.dictionary):
            keep &= ds.column(f) == code
        return keep


def filter_subgroup(ds: Dataset, selector: SubgroupSelector) -> Dataset:
    return ds.take(np.flatnonzero(selector.mask(ds)))
