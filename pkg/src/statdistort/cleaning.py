"""Cleaning methods and the five cleaning strategies.

Target sets are boolean ``(N, v)`` masks over a dataset's cells. An iterable
of ``(series, t, attr)`` triples is accepted too and converted with
:func:`targets_mask`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Dataset, Transform, apply_transform
from .glitch import (
    DEFAULT_WEIGHTS,
    INCONSISTENT,
    MISSING,
    OUTLIER,
    OutlierLimits,
    fit_outlier_limits,
    glitch_bits,
    rank_order,
    series_scores,
)

IMPUTE_METHODS = ("gaussian-impute", "mean-replace", "none")
OUTLIER_METHODS = ("winsorize", "none")


@dataclass(frozen=True)
class Strategy:
    id: int
    missing_inconsistent_method: str
    outlier_method: str

    def __post_init__(self):
        if self.missing_inconsistent_method not in IMPUTE_METHODS:
            raise ValueError(f"unknown imputation method {self.missing_inconsistent_method!r}")
        if self.outlier_method not in OUTLIER_METHODS:
            raise ValueError(f"unknown outlier method {self.outlier_method!r}")


STRATEGIES = {
    1: Strategy(1, "gaussian-impute", "winsorize"),
    2: Strategy(2, "gaussian-impute", "none"),
    3: Strategy(3, "none", "winsorize"),
    4: Strategy(4, "mean-replace", "none"),
    5: Strategy(5, "mean-replace", "winsorize"),
}


def get_strategy(spec) -> Strategy:
    """Strategy by id (1-5), by ``(imputation, outlier)`` method pair, or passthrough."""
    if isinstance(spec, Strategy):
        return spec
    if isinstance(spec, (int, np.integer)):
        try:
            return STRATEGIES[int(spec)]
        except KeyError:
            raise ValueError(f"strategy id must be 1-5, got {spec}") from None
    imp, out = spec
    for s in STRATEGIES.values():
        if (s.missing_inconsistent_method, s.outlier_method) == (imp, out):
            return s
    return Strategy(0, imp, out)


def targets_mask(ds: Dataset, targets) -> np.ndarray:
    if isinstance(targets, np.ndarray) and targets.dtype == bool:
        if targets.shape != ds.values.shape:
            raise ValueError("target mask shape does not match the dataset")
        return targets
    mask = np.zeros(ds.values.shape, dtype=bool)
    for s, t, a in targets:
        lo, hi = ds.offsets[s], ds.offsets[s + 1]
        pos = np.searchsorted(ds.times[lo:hi], t)
        if pos >= hi - lo or ds.times[lo + pos] != t:
            raise KeyError(f"series {s} has no time {t}")
        mask[lo + pos, a] = True
    return mask


def winsorize(ds: Dataset, limits: OutlierLimits, targets) -> Dataset:
    """Clamp each targeted value into ``[lo, hi]``."""
    mask = targets_mask(ds, targets)
    if not mask.any():
        return ds
    if np.isnan(ds.values[mask]).any():
        raise ValueError("cannot winsorize a missing value")
    clipped = np.clip(ds.values, limits.lo, limits.hi)
    return ds.with_values(np.where(mask, clipped, ds.values), written=mask)


def ideal_means(ideal: Dataset) -> np.ndarray:
    x = np.where(ideal.eligible, ideal.values, np.nan)
    return np.nanmean(x, axis=0)


def mean_replace(ds: Dataset, means, targets) -> Dataset:
    mask = targets_mask(ds, targets)
    if not mask.any():
        return ds
    means = np.broadcast_to(np.asarray(means, dtype=float), ds.values.shape)
    return ds.with_values(np.where(mask, means, ds.values), written=mask)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray
    ridge: float = 0.0


def fit_gaussian(ideal: Dataset, rel_floor: float = 1e-10) -> GaussianModel:
    """Mean and covariance of the complete-case ideal observations.

    A ridge is added to the diagonal when the smallest eigenvalue falls below
    ``rel_floor`` times the largest, so the model is always positive definite.
    """
    rows = ideal.values[ideal.eligible.all(axis=1)]
    v = ideal.v
    if len(rows) < v + 1:
        raise ValueError(f"need at least {v + 1} complete ideal observations, got {len(rows)}")
    mean = rows.mean(axis=0)
    cov = np.atleast_2d(np.cov(rows, rowvar=False))
    cov = 0.5 * (cov + cov.T)
    eig = np.linalg.eigvalsh(cov)
    ridge = 0.0
    floor = rel_floor * max(eig[-1], 1.0)
    if eig[0] < rel_floor * eig[-1] or eig[-1] <= 0:
        ridge = floor - min(eig[0], 0.0)
        cov = cov + ridge * np.eye(v)
    return GaussianModel(mean, cov, ridge)


def _psd_sqrt(cov):
    # conditional covariances can lose definiteness to rounding
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def gaussian_impute(ds: Dataset, model: GaussianModel, targets, seed) -> Dataset:
    """Redraw targeted cells from the model conditioned on each row's other observed cells.

    One standard-normal vector is drawn per observation row from ``seed``; a
    row's imputed values depend only on that vector, the model and the row,
    so a cell receives the same draw whichever other rows are targeted.
    """
    mask = targets_mask(ds, targets)
    if not mask.any():
        return ds
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(ds.values.shape)
    x = ds.values.copy()
    given = ds.eligible & ~mask
    rows = np.flatnonzero(mask.any(axis=1))
    v = ds.v
    pow2 = 1 << np.arange(v)
    code = (mask[rows] @ pow2) * (1 << v) + given[rows] @ pow2
    mu, S = model.mean, model.cov
    for c in np.unique(code):
        r = rows[code == c]
        M = mask[r[0]]
        O = given[r[0]]
        S_mm = S[np.ix_(M, M)]
        if O.any():
            S_mo = S[np.ix_(M, O)]
            K = np.linalg.solve(S[np.ix_(O, O)], S_mo.T).T
            cmean = mu[M] + (x[np.ix_(r, O)] - mu[O]) @ K.T
            ccov = S_mm - K @ S_mo.T
        else:
            cmean = np.broadcast_to(mu[M], (len(r), M.sum()))
            ccov = S_mm
        L = _psd_sqrt(ccov)
        x[np.ix_(r, M)] = cmean + z[np.ix_(r, M)] @ L.T
    return ds.with_values(x, written=mask)


# -- strategy application -------------------------------------------------


@dataclass(frozen=True, eq=False)
class CleaningContext:
    """Everything fitted from one ideal sample."""

    limits: OutlierLimits
    means: np.ndarray
    model: GaussianModel | None

    @classmethod
    def fit(cls, ideal: Dataset, limits: OutlierLimits | None = None, need_model: bool = True) -> "CleaningContext":
        limits = fit_outlier_limits(ideal) if limits is None else limits
        model = fit_gaussian(ideal) if need_model else None
        return cls(limits, ideal_means(ideal), model)


def n_selected(n_series: int, cost_fraction: float) -> int:
    """Series count for a cost fraction: ceil(x% of n), exact for decimal x."""
    x = Fraction(str(cost_fraction))
    if not 0 <= x <= 100:
        raise ValueError("cost fraction must lie in [0, 100]")
    return min(n_series, math.ceil(x * n_series / 100))


@dataclass(frozen=True, eq=False)
class Treatment:
    """Treated dataset plus the cell sets each method touched."""

    treated: Dataset
    selected: np.ndarray
    impute_targets: np.ndarray
    winsor_targets: np.ndarray
    bits: np.ndarray


def treat(
    dirty: Dataset,
    strategy,
    rules,
    context: CleaningContext,
    cost_fraction: float = 100.0,
    seed=0,
    W=DEFAULT_WEIGHTS,
    bits=None,
) -> Treatment:
    strategy = get_strategy(strategy)
    bits = glitch_bits(dirty, rules, context.limits) if bits is None else bits
    k = n_selected(dirty.n_series, cost_fraction)
    order = rank_order(dirty, series_scores(dirty, W, bits=bits))
    selected = np.zeros(dirty.n_series, dtype=bool)
    selected[order[:k]] = True
    row_sel = selected[dirty.row_series][:, None]
    imp = (bits[..., MISSING] | bits[..., INCONSISTENT]) & row_sel
    win = bits[..., OUTLIER] & row_sel

    out = dirty
    method = strategy.missing_inconsistent_method
    if method == "gaussian-impute":
        if context.model is None:
            raise ValueError("gaussian imputation needs a fitted model")
        out = gaussian_impute(out, context.model, imp, seed)
    elif method == "mean-replace":
        out = mean_replace(out, context.means, imp)
    if strategy.outlier_method == "winsorize":
        out = winsorize(out, context.limits, win)
    return Treatment(out.with_values(out.values, role="treated"), selected, imp, win, bits)


def apply_strategy(
    pair,
    strategy,
    rules,
    W=DEFAULT_WEIGHTS,
    transform: Transform | None = None,
    cost_fraction: float = 100.0,
    seed=0,
    context: CleaningContext | None = None,
) -> Dataset:
    """Treat the dirty half of a ``(dirty, ideal)`` test pair.

    Glitches are detected on the dirty sample with limits fitted on the ideal
    sample. The top ``ceil(x%)`` series by normalized glitch score are
    treated: missing and inconsistent cells by the strategy's imputation
    method first, then outlier cells by its outlier method. Other series pass
    through untouched.
    """
    dirty, ideal = pair
    if transform is not None and not transform.is_identity:
        if dirty.transform is None:
            dirty = apply_transform(dirty, transform)
        if ideal.transform is None:
            ideal = apply_transform(ideal, transform)
    strategy = get_strategy(strategy)
    if context is None:
        context = CleaningContext.fit(ideal, need_model=strategy.missing_inconsistent_method == "gaussian-impute")
    return treat(dirty, strategy, rules, context, cost_fraction, seed, W).treated
