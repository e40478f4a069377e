"""Empirical privacy: unique exact matches between target and deid records."""
from __future__ import annotations

from dataclasses import dataclass

from .dataset import Dataset
from .errors import ValidationError
from .fidelity import shared_features
from .partition import aligned_counts, encode

NO_UNIQUE_RECORDS = "NoUniqueRecords"


@dataclass(frozen=True)
class UemResult:
    """Target records unique over the schema, and how many of them reappear
    unaltered in the deid data.  ``flag`` is set when the target has no
    unique records (``percent`` is then 0)."""

    unique_target_records: int
    matched_unique: int
    percent: float
    flag: str | None = None

    def to_dict(self) -> dict:
        return {"unique_target_records": self.unique_target_records,
                "matched_unique": self.matched_unique, "percent": self.percent,
                "flag": self.flag}


def unique_exact_match(t: Dataset, d: Dataset, schema=None) -> UemResult:
    """Percent of target singletons whose exact value tuple occurs in ``d``.

    Numeric features are matched on their raw values, not on bins.
    Matching is presence-based, so duplicating deid rows changes nothing.
    """
    schema = shared_features(t, d, schema)
    if not schema:
        raise ValidationError("unique exact match needs a non-empty schema")
    (ct, cd), enc = encode([t, d], schema, exact_numeric=True)
    _, nt, nd = aligned_counts(ct, cd, enc)
    unique = nt == 1
    n_unique = int(unique.sum())
    matched = int((unique & (nd > 0)).sum())
    if n_unique == 0:
        return UemResult(0, 0, 0.0, NO_UNIQUE_RECORDS)
    return UemResult(n_unique, matched, 100.0 * matched / n_unique)
