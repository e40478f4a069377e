"""Full evaluation runs and their serialized reports.

A report is one JSON document (metadata plus one object per section) and a
set of CSV tables for anything plot-shaped.  Every random stream is derived
from the master seed and a fixed label, so changing one metric's settings
never moves another metric's stream.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import __version__
from .dataset import DataDictionary, Dataset, SubgroupSelector, select_features
from .dispersal import dispersal_profile, profile_step_bounds
from .errors import ParseError, ValidationError
from .fidelity import (
    DEFAULT_ES_GRID,
    KMarginalConfig,
    correlation_difference,
    correlation_features,
    equivalent_subsample,
    kmarginal_by_geography,
    kmarginal_by_group,
    kmarginal_score,
    univariate_report,
)
from .privacy import unique_exact_match
from .structure import DEFAULT_RULES, consistency_check, load_rules, pca_compare
from .tasks import propensity, regression_metric

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIMESTAMP_FIELD = "generated_at"
SECTIONS = ("univariate", "correlations", "kmarginal", "propensity", "regression", "pca",
            "consistency", "privacy", "dispersal")


def derive_seed(master: int, label: str) -> int:
    """Per-metric seed: the first 8 bytes of ``sha256("<master>:<label>")``."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class RunConfig:
    """Settings for :func:`evaluate`.

    ``features`` is a dictionary subset name, a list of features, or ``None``
    for every non-weight feature.  ``regression_x``/``regression_y`` default
    to the first two ordinal or numeric features.  ``rules`` is a rules file
    path; without one the built-in rules run wherever their features exist.
    """

    features: object = None
    kmarginal: KMarginalConfig = field(default_factory=KMarginalConfig)
    es_fractions: tuple = DEFAULT_ES_GRID
    es_trials: int = 10
    group_features: tuple = ()
    geo_feature: str | None = None
    regression_x: str | None = None
    regression_y: str | None = None
    rules: str | None = None
    highlight: str | None = None
    propensity_schema: tuple | None = None
    dispersal_order: tuple | None = None
    dispersal_groups: tuple = ()
    weight: str | None = None
    master_seed: int = 0

    def __post_init__(self):
        for name in ("es_fractions", "group_features", "dispersal_groups"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("propensity_schema", "dispersal_order"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, tuple(getattr(self, name)))
        if isinstance(self.features, list):
            object.__setattr__(self, "features", tuple(self.features))
        if isinstance(self.kmarginal, dict):
            object.__setattr__(self, "kmarginal", KMarginalConfig(**self.kmarginal))

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["kmarginal"] = asdict(self.kmarginal)
        return _plain(out)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ParseError(f"unknown config keys {sorted(unknown)}")
        obj = dict(obj)
        if "kmarginal" in obj:
            km = obj["kmarginal"]
            if not isinstance(km, dict):
                raise ParseError("'kmarginal' must be an object")
            try:
                obj["kmarginal"] = KMarginalConfig(**km)
            except TypeError as exc:
                raise ParseError(f"kmarginal: {exc}") from None
        return cls(**obj)

    def feature_list(self, dictionary: DataDictionary) -> tuple:
        if self.features is None:
            return dictionary.metric_features()
        return dictionary.resolve(self.features)

    def validate(self, dictionary: DataDictionary) -> tuple:
        names = self.feature_list(dictionary)
        if self.kmarginal.k > len(names):
            raise ValidationError(f"k = {self.kmarginal.k} exceeds the {len(names)} selected features")
        for name in (self.group_features + tuple(self.kmarginal.always_include)
                     + tuple(n for n in (self.geo_feature,) if n)):
            if name not in names:
                raise ValidationError(f"feature {name!r} is not among the evaluated features")
        for name in (self.regression_x, self.regression_y, self.weight):
            if name is not None:
                dictionary[name]
        for seq in (self.propensity_schema, self.dispersal_order):
            for name in seq or ():
                dictionary[name]
        for text in self.dispersal_groups + ((self.highlight,) if self.highlight else ()):
            SubgroupSelector.parse(text).validate(dictionary)
        return names


def load_config(document) -> RunConfig:
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ParseError("config must be a JSON object")
    return RunConfig.from_dict(document)


def _plain(obj):
    """JSON-ready copy: numpy to Python, tuples to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


@dataclass
class EvaluationReport:
    metadata: dict
    sections: dict
    tables: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"schema_version": SCHEMA_VERSION, "metadata": self.metadata,
               "sections": self.sections}
        return json.dumps(_plain(doc), indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"report is not valid JSON: {exc}") from None
        version = doc.get("schema_version") if isinstance(doc, dict) else None
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported report schema version {version!r}")
        return cls(doc["metadata"], doc["sections"])

    def status(self) -> dict:
        return {name: sec["status"] for name, sec in self.sections.items()}

    def write(self, out_dir) -> list:
        """Write ``report.json`` and one CSV per table; returns the paths written."""
        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, "report.json")]
        with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
        for name, rows in self.tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            write_table(rows, path)
            paths.append(path)
        return paths


def _cell(v):
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, list):
        return ";".join(str(x) for x in v)
    return v


def write_table(rows: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})


def _skipped(reason: str) -> dict:
    return {"status": "skipped", "reason": reason}


def _run(fn: Callable) -> tuple:
    try:
        body, tables = fn()
    except Exception as exc:  # one failing section must not abort the others
        log.warning("section failed: %s: %s", type(exc).__name__, exc)
        return {"status": "error", "error": type(exc).__name__, "message": str(exc)}, {}
    if body.get("status") == "skipped":
        return body, tables
    return {"status": "ok", **body}, tables


class _Evaluation:
    def __init__(self, t: Dataset, d: Dataset, cfg: RunConfig, names: tuple, workers: int):
        self.t, self.d, self.cfg, self.names, self.workers = t, d, cfg, names, workers
        self.seeds = {label: derive_seed(cfg.master_seed, label)
                      for label in ("kmarginal", "equivalent_subsample")}

    def univariate(self):
        comps = univariate_report(select_features(self.t, self.names + _w(self.cfg)),
                                  select_features(self.d, self.names + _w(self.cfg)),
                                  weight=self.cfg.weight)
        rows = []
        body = {}
        for name, c in comps.items():
            body[name] = {"values": c.labels, "target": c.target, "deid": c.deid, "tvd": c.tvd}
            rows += [{"feature": name, "value": v, "target": a, "deid": b}
                     for v, a, b in zip(c.labels, c.target.tolist(), c.deid.tolist())]
        return {"features": body}, {"univariate": rows}

    def correlations(self):
        feats = tuple(n for n in correlation_features(self.t) if n in self.names)
        if len(feats) < 2:
            return _skipped("fewer than two ordinal or numeric features"), {}
        body, rows = {}, []
        for method in ("pearson", "kendall_tau_b"):
            c = correlation_difference(self.t, self.d, method, feats)
            body[method] = {"features": c.features, "target": c.target, "deid": c.deid,
                            "delta": c.delta,
                            "max_delta": float(np.nanmax(c.delta)) if not c.undefined.all() else None}
            for i, a in enumerate(c.features):
                for j in range(i + 1, len(c.features)):
                    rows.append({"method": method, "feature_a": a, "feature_b": c.features[j],
                                 "target": c.target[i, j], "deid": c.deid[i, j],
                                 "delta": c.delta[i, j]})
        return body, {"correlations": rows}

    def kmarginal(self):
        cfg = replace(self.cfg.kmarginal, seed=self.seeds["kmarginal"])
        overall = kmarginal_score(self.t, self.d, cfg, features=self.names, workers=self.workers)
        body = {"overall": {**overall.to_dict(), "subsets": [
            {"features": s, "tvd": v} for s, v in overall.per_subset]}}
        tables = {}

        def geography():
            if not self.cfg.geo_feature:
                return _skipped("no geography feature configured"), {}
            g = kmarginal_by_geography(self.t, self.d, self.cfg.geo_feature, cfg, workers=self.workers)
            rows = [{"value": s.group[0][1], "n_target": s.n_target, "n_deid": s.n_deid,
                     "score": s.score.score, "missing_in_deid": s.missing_in_deid} for s in g.scores]
            return {"feature": g.feature, "worst": g.worst, "scores": rows}, {"kmarginal_geography": rows}

        def groups():
            if not self.cfg.group_features:
                return _skipped("no group features configured"), {}
            res = kmarginal_by_group(self.t, self.d, self.cfg.group_features, cfg, workers=self.workers)
            rows = [{"group": s.label, "n_target": s.n_target, "n_deid": s.n_deid,
                     "score": s.score.score, "missing_in_deid": s.missing_in_deid} for s in res]
            return {"features": self.cfg.group_features, "scores": rows}, {"kmarginal_groups": rows}

        def es():
            r = equivalent_subsample(self.t, overall, self.cfg.es_fractions, self.cfg.es_trials,
                                     self.seeds["equivalent_subsample"], workers=self.workers)
            return r.to_dict(), {}

        for key, fn in (("by_geography", geography), ("by_group", groups),
                        ("equivalent_subsample", es)):
            body[key], extra = _run(fn)
            tables.update(extra)
        return body, tables

    def propensity(self):
        schema = self.cfg.propensity_schema or self.names
        p = propensity(self.t, self.d, schema)
        spike = int(p.target_trace[50] + p.deid_trace[50]) == self.t.row_count + self.d.row_count
        return ({"schema": p.schema, "divergence": p.divergence, "auc": p.auc,
                 "spike_at_half": spike}, {"propensity": p.rows()})

    def regression(self):
        x, y = self.cfg.regression_x, self.cfg.regression_y
        if x is None or y is None:
            feats = [n for n in correlation_features(self.t) if n in self.names]
            if len(feats) < 2:
                return _skipped("no ordinal or numeric feature pair for regression"), {}
            x = x or next(f for f in feats if f != y)
            y = y or next(f for f in feats if f != x)
        r = regression_metric(self.t, self.d, x, y, self.cfg.group_features)
        rows = []
        max_dev = 0.0
        for g in r.groups:
            max_dev = max(max_dev, float(np.abs(g.deviation_heatmap).max(initial=0.0)))
            for iy, yl in enumerate(r.y_levels):
                for ix, xl in enumerate(r.x_levels):
                    rows.append({"group": g.label, "x": xl, "y": yl,
                                 "target": g.target_heatmap[iy, ix], "deid": g.deid_heatmap[iy, ix],
                                 "deviation": g.deviation_heatmap[iy, ix]})
        groups = []
        for g, line in zip(r.groups, r.lines()):
            line["empty_target_columns"] = g.empty_target_columns
            groups.append(line)
        return ({"x": x, "y": y, "groups": groups, "max_abs_deviation": max_dev},
                {"regression_heatmaps": rows})

    def pca(self):
        highlight = SubgroupSelector.parse(self.cfg.highlight) if self.cfg.highlight else None
        c = pca_compare(self.t, self.d, highlight, features=self.names)
        return ({"axes": c.axes, "loadings": c.loadings, "explained_variance": c.explained_variance,
                 "total_variance": c.total_variance, "dropped_axes": c.dropped_axes,
                 "highlight": self.cfg.highlight,
                 "highlighted": {"target": int(c.target_highlight.sum()),
                                 "deid": int(c.deid_highlight.sum())}},
                {"pca_projection": c.rows()})

    def consistency(self):
        if self.cfg.rules:
            with open(self.cfg.rules, encoding="utf-8") as fh:
                rules = load_rules(fh.read())
            skipped = []
        else:
            have = set(self.t.feature_names) & set(self.d.feature_names)
            rules = [r for r in DEFAULT_RULES if r.features <= have]
            skipped = [r.name for r in DEFAULT_RULES if not r.features <= have]
        if not rules:
            return _skipped("no rule applies to these features"), {}
        body = {"skipped_rules": skipped}
        rows = []
        for which, ds in (("target", self.t), ("deid", self.d)):
            res = consistency_check(ds, rules)
            body[which] = [r.to_dict() for r in res]
            rows += [{"dataset": which, "rule": r.name, "violations": r.violations} for r in res]
        return body, {"consistency": rows}

    def privacy(self):
        return {"uem": unique_exact_match(self.t, self.d, self.names).to_dict()}, {}

    def dispersal(self):
        order = self.cfg.dispersal_order
        if not order:
            return _skipped("no dispersal order configured"), {}
        groups = [SubgroupSelector.parse(g) for g in self.cfg.dispersal_groups] or [SubgroupSelector()]
        prof = dispersal_profile(self.t, order, groups, workers=self.workers)
        steps = [row for g in groups for row in profile_step_bounds(self.t, order, g)]
        return ({"order": order, "profile": prof.rows(), "steps": steps},
                {"dispersal_profile": prof.rows(), "dispersal_steps": steps})


def _w(cfg: RunConfig) -> tuple:
    return (cfg.weight,) if cfg.weight else ()


def evaluate(target: Dataset, deid: Dataset, cfg: RunConfig | None = None, *,
             workers: int = 1, timestamp: str | None = None) -> EvaluationReport:
    """Run every metric section and collect the results.

    Features the deid data lacks are dropped from the run and listed in the
    metadata.  A section that raises is recorded with ``status: "error"`` and
    the remaining sections still run.
    """
    cfg = cfg or RunConfig()
    dictionary = target.dictionary
    names = cfg.validate(dictionary)
    missing = tuple(n for n in names if n not in deid.dictionary)
    names = tuple(n for n in names if n not in missing)
    if not names:
        raise ValidationError("the deidentified data shares no evaluated feature with the target")
    shared = [n for n in dictionary.names if n in deid.dictionary]
    t = select_features(target, shared)
    d = select_features(deid, shared)
    run = _Evaluation(t, d, cfg, names, workers)
    jobs = [getattr(run, name) for name in SECTIONS]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = [_run(job) for job in jobs]
    sections, tables = {}, {}
    for name, (body, extra) in zip(SECTIONS, results):
        sections[name] = body
        tables.update(extra)
    metadata = {
        "tool": "deidbench",
        "version": __version__,
        "master_seed": cfg.master_seed,
        "seeds": run.seeds,
        "config": cfg.to_dict(),
        "features": names,
        "features_missing_in_deid": missing,
        "fingerprints": {"target": target.fingerprint(), "deid": deid.fingerprint()},
        TIMESTAMP_FIELD: timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return EvaluationReport(_plain(metadata), _plain(sections), tables)


def mask_timestamp(report_json: str) -> str:
    """Report text with the timestamp blanked, for determinism comparisons."""
    doc = json.loads(report_json)
    doc["metadata"][TIMESTAMP_FIELD] = None
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
