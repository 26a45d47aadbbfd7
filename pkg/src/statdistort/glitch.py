"""Glitch detection and glitch scoring.

Three glitch types are tracked per cell, always in the order
``(missing, inconsistent, outlier)``. Detectors accept one observation
(shape ``(v,)``) or a stack of them (shape ``(N, v)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset

MISSING, INCONSISTENT, OUTLIER = 0, 1, 2
GLITCH_TYPES = ("missing", "inconsistent", "outlier")
DEFAULT_WEIGHTS = (0.25, 0.25, 0.5)

RULE_KINDS = ("lower-bound", "range", "conditional-populated")


@dataclass(frozen=True)
class ConstraintRule:
    """A consistency constraint whose violation flags attribute ``attr``.

    lower-bound: ``x[attr] >= lo``
    range: ``lo <= x[attr] <= hi``
    conditional-populated: ``x[attr]`` must be missing whenever ``x[other]`` is.
    """

    kind: str
    attr: int
    lo: float | None = None
    hi: float | None = None
    other: int | None = None

    @classmethod
    def lower_bound(cls, attr, bound):
        return cls("lower-bound", attr, lo=float(bound))

    @classmethod
    def in_range(cls, attr, lo, hi):
        return cls("range", attr, lo=float(lo), hi=float(hi))

    @classmethod
    def conditional_populated(cls, attr, other):
        return cls("conditional-populated", attr, other=other)

    def validate(self, v: int) -> None:
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if not 0 <= self.attr < v:
            raise ValueError(f"rule attribute {self.attr} out of range for v={v}")
        if self.kind == "lower-bound" and self.lo is None:
            raise ValueError("lower-bound rule needs a bound")
        if self.kind == "range" and not (self.lo is not None and self.hi is not None and self.lo < self.hi):
            raise ValueError("range rule needs lo < hi")
        if self.kind == "conditional-populated":
            if self.other is None or not 0 <= self.other < v or self.other == self.attr:
                raise ValueError("conditional-populated rule needs a distinct second attribute")

    def violated(self, values: np.ndarray) -> np.ndarray:
        x = values[..., self.attr]
        with np.errstate(invalid="ignore"):
            if self.kind == "lower-bound":
                return x < self.lo
            if self.kind == "range":
                return (x < self.lo) | (x > self.hi)
        return np.isnan(values[..., self.other]) & ~np.isnan(x)


def default_rules() -> list[ConstraintRule]:
    """Default constraints for three attributes: attr1 >= 0, attr3 in [0, 1], attr3 populated whenever attr1 is."""
    return [
        ConstraintRule.lower_bound(0, 0.0),
        ConstraintRule.in_range(2, 0.0, 1.0),
        ConstraintRule.conditional_populated(0, 2),
    ]


@dataclass(frozen=True)
class OutlierLimits:
    mean: np.ndarray
    std: np.ndarray
    n_sigma: float = 3.0

    @property
    def lo(self) -> np.ndarray:
        return self.mean - self.n_sigma * self.std

    @property
    def hi(self) -> np.ndarray:
        return self.mean + self.n_sigma * self.std


def as_weights(W) -> np.ndarray:
    w = np.asarray(W, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("glitch weights must be 3 non-negative values, at least one positive")
    return w


# -- detectors ------------------------------------------------------------


def detect_missing(values) -> np.ndarray:
    return np.isnan(np.asarray(values, dtype=float))


def detect_inconsistent(values, rules) -> np.ndarray:
    """Bit per attribute: set when any rule flagging that attribute is violated.

    Bound and range rules skip missing operands; a missing value is its own
    glitch type.
    """
    x = np.asarray(values, dtype=float)
    out = np.zeros(x.shape, dtype=bool)
    for rule in rules:
        out[..., rule.attr] |= rule.violated(x)
    return out


def fit_outlier_limits(ideal: Dataset, n_sigma: float = 3.0) -> OutlierLimits:
    """Per-attribute mean and sample std (ddof=1) over every observed ideal value."""
    x = ideal.values
    ok = ideal.eligible
    mean = np.empty(ideal.v)
    std = np.empty(ideal.v)
    for a in range(ideal.v):
        col = x[ok[:, a], a]
        if len(col) < 2:
            raise ValueError(f"attribute {ideal.attribute_names[a]!r} has fewer than 2 observed ideal values")
        mean[a] = col.mean()
        std[a] = col.std(ddof=1)
    return OutlierLimits(mean, std, n_sigma)


def detect_outliers(values, limits: OutlierLimits, eligible=None) -> np.ndarray:
    """Observed values strictly outside ``[lo, hi]``; the limits themselves are acceptable."""
    x = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore"):
        out = (x < limits.lo) | (x > limits.hi)
    if eligible is not None:
        out &= eligible
    return out


def build_glitch_matrix(obs, rules, limits: OutlierLimits) -> np.ndarray:
    """``(v, 3)`` bit matrix for one observation (or ``(N, v, 3)`` for a stack)."""
    x = np.asarray(obs, dtype=float)
    return np.stack([detect_missing(x), detect_inconsistent(x, rules), detect_outliers(x, limits)], axis=-1)


def glitch_bits(ds: Dataset, rules, limits: OutlierLimits) -> np.ndarray:
    """``(N, v, 3)`` bits for every observation of ``ds``.

    Rules are checked in the original value space; outliers in the working
    space. Cells left raw by a log transform are never outliers.
    """
    miss = ds.missing
    inc = detect_inconsistent(ds.raw_values(), rules)
    out = detect_outliers(ds.values, limits, eligible=ds.eligible)
    return np.stack([miss, inc, out], axis=-1)


# -- scores ---------------------------------------------------------------


def cell_glitch_index(ds: Dataset, rules, limits, W=DEFAULT_WEIGHTS, bits=None) -> float:
    """Weighted count of glitch bits over all cells."""
    bits = glitch_bits(ds, rules, limits) if bits is None else bits
    counts = bits.reshape(-1, 3).sum(axis=0)
    return float(counts @ as_weights(W))


def series_scores(ds: Dataset, W=DEFAULT_WEIGHTS, bits=None, rules=None, limits=None) -> np.ndarray:
    """Per-series glitch score, each series' bit sums divided by its length."""
    bits = glitch_bits(ds, rules, limits) if bits is None else bits
    per_row = bits.sum(axis=1).astype(float)  # (N, 3), summed over attributes
    sums = np.add.reduceat(per_row, ds.offsets[:-1], axis=0) if ds.n_series else np.zeros((0, 3))
    return (sums / ds.lengths[:, None]) @ as_weights(W)


def normalized_glitch_score(ds: Dataset, rules, limits, W=DEFAULT_WEIGHTS, bits=None) -> float:
    return float(series_scores(ds, W, bits=bits, rules=rules, limits=limits).sum())


def rank_order(ds: Dataset, scores: np.ndarray) -> np.ndarray:
    """Series indices by descending score; ties by ascending node, then instance id."""
    keys = (ds.instance_ids, ds.nodes[:, 2], ds.nodes[:, 1], ds.nodes[:, 0], -scores)
    return np.lexsort(keys)


def series_glitch_rank(ds: Dataset, rules, limits, W=DEFAULT_WEIGHTS, bits=None) -> list[tuple[int, float]]:
    """``(instance id, score)`` pairs, dirtiest first."""
    scores = series_scores(ds, W, bits=bits, rules=rules, limits=limits)
    return [(int(ds.instance_ids[s]), float(scores[s])) for s in rank_order(ds, scores)]


def glitch_percentages(ds: Dataset, rules, limits, bits=None) -> np.ndarray:
    """Percent of all cells carrying each glitch type."""
    bits = glitch_bits(ds, rules, limits) if bits is None else bits
    cells = ds.n_obs * ds.v
    if cells == 0:
        return np.zeros(3)
    return 100.0 * bits.reshape(-1, 3).sum(axis=0) / cells


def series_percentages(ds: Dataset, bits: np.ndarray) -> np.ndarray:
    """``(S, 3)`` per-series percent of cells with each glitch type."""
    per_row = bits.sum(axis=1).astype(float)
    sums = np.add.reduceat(per_row, ds.offsets[:-1], axis=0)
    return 100.0 * sums / (ds.lengths[:, None] * ds.v)


def counts_by_time(ds: Dataset, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Glitch counts per time index, summed over series and attributes."""
    per_row = bits.sum(axis=1)
    ts = np.unique(ds.times)
    pos = np.searchsorted(ts, ds.times)
    counts = np.zeros((len(ts), 3), dtype=np.int64)
    np.add.at(counts, pos, per_row)
    return ts, counts
