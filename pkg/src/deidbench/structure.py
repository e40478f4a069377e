"""Structural diagnostics: PCA comparison in the target's frame, and
consistency rules (records that violate logical constraints between features).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .dataset import DataDictionary, Dataset, SubgroupSelector
from .errors import EmptyDataset, InvalidRule, ParseError, ValidationError
from .fidelity import shared_features

N_COMPONENTS = 5
JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100


def jacobi_eigh(matrix: np.ndarray, tol: float = JACOBI_TOL,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius mass falls below ``tol``
    times the matrix norm.  Returns unsorted eigenvalues and the matrix whose
    columns are the matching eigenvectors.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a))) or 1.0
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def _orient(vec: np.ndarray) -> np.ndarray:
    mags = np.abs(vec)
    i = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    return -vec if vec[i] < 0 else vec


def sorted_components(values: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Components as rows, by decreasing eigenvalue with deterministic signs.

    The largest-magnitude loading of each component is made positive.
    Numerically tied eigenvalues are ordered by their loading vectors,
    compared lexicographically from the first axis.
    """
    comps = [_orient(vectors[:, i]) for i in range(vectors.shape[1])]
    tie = 1e-12 * max(1.0, float(np.abs(values).max(initial=0)))
    order = sorted(range(len(values)), key=lambda i: -values[i])
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and values[order[i]] - values[order[j]] <= tie:
            j += 1
        cluster = sorted(order[i:j], key=lambda k: tuple(-comps[k]))
        out.extend(cluster)
        i = j
    return values[out], np.array([comps[k] for k in out]).reshape(len(out), vectors.shape[0])


def encode_for_pca(ds: Dataset, features) -> tuple[tuple, np.ndarray]:
    """Numeric matrix with one axis per ordinal/numeric feature and one
    indicator axis per categorical value."""
    axes, cols = [], []
    for name in features:
        spec = ds.dictionary[name]
        col = ds.column(name)
        if spec.kind == "categorical":
            for code, label in enumerate(spec.levels):
                axes.append(f"{name}={label}")
                cols.append((col == code).astype(np.float64))
        else:
            axes.append(name)
            cols.append(col.astype(np.float64))
    matrix = np.column_stack(cols) if cols else np.zeros((ds.row_count, 0))
    return tuple(axes), matrix


@dataclass(frozen=True)
class PcaComparison:
    """Target principal components and both datasets projected onto them.

    ``loadings`` has one row per component over ``axes``.  Standardization
    uses the target's mean and (population) standard deviation for both
    datasets.
    """

    axes: tuple
    loadings: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    target_projection: np.ndarray
    deid_projection: np.ndarray
    target_highlight: np.ndarray
    deid_highlight: np.ndarray
    dropped_axes: tuple = ()

    @property
    def n_components(self) -> int:
        return len(self.explained_variance)

    def rows(self) -> list[dict]:
        out = []
        for which, proj, mask in (("target", self.target_projection, self.target_highlight),
                                  ("deid", self.deid_projection, self.deid_highlight)):
            for i, coords in enumerate(proj.tolist()):
                row = {"dataset": which, "record": i, "highlight": int(mask[i])}
                row.update({f"pc{j + 1}": c for j, c in enumerate(coords)})
                out.append(row)
        return out


def _highlight(ds: Dataset, highlight) -> np.ndarray:
    if highlight is None:
        return np.zeros(ds.row_count, dtype=bool)
    if isinstance(highlight, str):
        highlight = SubgroupSelector.parse(highlight)
    if isinstance(highlight, SubgroupSelector):
        return highlight.mask(ds)
    return np.asarray(highlight(ds), dtype=bool)


def pca_compare(t: Dataset, d: Dataset,
                highlight: SubgroupSelector | str | Callable[[Dataset], np.ndarray] | None = None,
                *, n_components: int = N_COMPONENTS, features=None) -> PcaComparison:
    """Project target and deid records onto the target's top principal components."""
    names = shared_features(t, d, features)
    if t.row_count < 2:
        raise EmptyDataset("PCA needs at least two target records")
    axes, xt = encode_for_pca(t, names)
    _, xd = encode_for_pca(d, names)
    if len(axes) < 2:
        raise ValidationError("PCA needs at least two encoded dimensions")
    mean = xt.mean(axis=0)
    std = xt.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    dropped = tuple(a for a, k in zip(axes, keep) if not k)
    if dropped:
        warnings.warn(f"dropping zero-variance axes {list(dropped)}", stacklevel=2)
    axes = tuple(a for a, k in zip(axes, keep) if k)
    zt = (xt[:, keep] - mean[keep]) / std[keep]
    zd = (xd[:, keep] - mean[keep]) / std[keep]
    cov = zt.T @ zt / t.row_count
    total = float(np.trace(cov))
    values, vectors = jacobi_eigh(cov)
    values, comps = sorted_components(values, vectors)
    significant = values > 1e-10 * max(total, 1.0)
    count = min(n_components, int(significant.sum()))
    values, comps = values[:count], comps[:count]
    return PcaComparison(axes, comps, values, total, zt @ comps.T, zd @ comps.T,
                         _highlight(t, highlight), _highlight(d, highlight), dropped)


_OPS = {"==": "==", "=": "==", "!=": "!=", "<": "<", "<=": "<=", "≤": "<=", ">": ">",
        ">=": ">=", "≥": ">="}


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _OPS:
            raise InvalidRule(f"unknown comparator {self.op!r}")
        object.__setattr__(self, "op", _OPS[self.op])

    def _operand(self, dictionary: DataDictionary):
        spec = dictionary[self.feature]
        if spec.kind == "categorical" and self.op not in ("==", "!="):
            raise InvalidRule(f"comparator {self.op!r} is not valid for categorical feature {self.feature!r}")
        if spec.is_numeric:
            try:
                return float(self.value)
            except (TypeError, ValueError):
                raise InvalidRule(f"{self.feature}: {self.value!r} is not a number") from None
        try:
            return spec.code_of(self.value)
        except KeyError:
            raise InvalidRule(f"{self.feature}: {self.value!r} is not in the domain") from None

    def evaluate(self, ds: Dataset) -> np.ndarray:
        col = ds.column(self.feature)
        rhs = self._operand(ds.dictionary)
        return {
            "==": np.equal, "!=": np.not_equal, "<": np.less, "<=": np.less_equal,
            ">": np.greater, ">=": np.greater_equal,
        }[self.op](col, rhs)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "op": self.op, "value": self.value}


@dataclass(frozen=True)
class ConsistencyRule:
    """``when`` all hold, every ``require`` condition must hold too."""

    name: str
    when: tuple
    require: tuple

    @property
    def features(self) -> set:
        return {c.feature for c in self.when + self.require}

    def validate(self, dictionary: DataDictionary) -> None:
        if not self.require:
            raise InvalidRule(f"rule {self.name!r} has no requirement")
        for cond in self.when + self.require:
            try:
                cond._operand(dictionary)
            except KeyError as exc:
                raise InvalidRule(f"rule {self.name!r}: {exc}") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "when": [c.to_dict() for c in self.when],
                "require": [c.to_dict() for c in self.require]}


def _conditions(items, rule_name) -> tuple:
    if not isinstance(items, list):
        raise ParseError(f"rule {rule_name!r}: conditions must be an array")
    out = []
    for item in items:
        try:
            out.append(Condition(str(item["feature"]), str(item["op"]), item["value"]))
        except (KeyError, TypeError):
            raise ParseError(f"rule {rule_name!r}: condition needs feature, op and value") from None
    return tuple(out)


def load_rules(document) -> list[ConsistencyRule]:
    """Rules from a JSON array of ``{name, when: [...], require: [...]}`` objects."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"rules file is not valid JSON: {exc}") from None
    if not isinstance(document, list):
        raise ParseError("rules document must be an array")
    rules = []
    for obj in document:
        if not isinstance(obj, Mapping) or "name" not in obj:
            raise ParseError("every rule needs a name")
        name = str(obj["name"])
        rules.append(ConsistencyRule(name, _conditions(obj.get("when", []), name),
                                     _conditions(obj.get("require", []), name)))
    return rules


DEFAULT_RULES = load_rules([
    {"name": "age: children under 15 have no marital status",
     "when": [{"feature": "AGEP", "op": "<", "value": 15}],
     "require": [{"feature": "MSP", "op": "==", "value": "N"}]},
    {"name": "work: children under 15 have no income decile",
     "when": [{"feature": "AGEP", "op": "<", "value": 15}],
     "require": [{"feature": "PINCP_DECILE", "op": "==", "value": "N"}]},
    {"name": "housing: group-quarters residents neither own nor rent",
     "when": [{"feature": "HOUSING_TYPE", "op": "!=", "value": 1}],
     "require": [{"feature": "OWN_RENT", "op": "==", "value": 0}]},
])


@dataclass(frozen=True)
class RuleResult:
    name: str
    violations: int
    example_rows: tuple

    def to_dict(self) -> dict:
        return {"name": self.name, "violations": self.violations,
                "example_rows": list(self.example_rows)}


def consistency_check(ds: Dataset, rules, *, max_examples: int = 10) -> list[RuleResult]:
    """Count rows where a rule's ``when`` holds but some ``require`` fails."""
    rules = list(rules)
    for rule in rules:
        rule.validate(ds.dictionary)
    out = []
    for rule in rules:
        applies = np.ones(ds.row_count, dtype=bool)
        for cond in rule.when:
            applies &= cond.evaluate(ds)
        satisfied = np.ones(ds.row_count, dtype=bool)
        for cond in rule.require:
            satisfied &= cond.evaluate(ds)
        bad = np.flatnonzero(applies & ~satisfied)
        out.append(RuleResult(rule.name, int(bad.size), tuple(bad[:max_examples].tolist())))
    return out
