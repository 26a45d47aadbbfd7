"""Statistical distortion: joint histograms and exact Earth Mover's Distance.

Bins are equal-width over the pooled support of the two datasets being
compared. Ground distance is Euclidean after rescaling each dimension to unit
range, so in bin units a center sits at ``(index + 0.5) / count``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _accel
from ._accel import njit
from ._transport import transport_kernel
from .core import Dataset

DEFAULT_BINS = 8


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BinningSpec:
    mins: np.ndarray
    maxs: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        mins = np.atleast_1d(np.asarray(self.mins, dtype=float))
        maxs = np.atleast_1d(np.asarray(self.maxs, dtype=float))
        counts = np.atleast_1d(np.asarray(self.counts, dtype=np.int64))
        if not (mins.shape == maxs.shape == counts.shape):
            raise ValueError("mins, maxs and counts must have one entry per dimension")
        if np.any(maxs < mins):
            raise ValueError("max below min")
        degenerate = maxs == mins
        if np.any(counts[~degenerate] < 2):
            raise ValueError("need at least 2 bins per non-degenerate dimension")
        counts = np.where(degenerate, 1, counts)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_points(cls, *pools, bins=DEFAULT_BINS) -> "BinningSpec":
        pts = np.vstack([np.asarray(p, dtype=float).reshape(len(p), -1) for p in pools])
        if len(pts) == 0:
            raise ValueError("no complete observations")
        d = pts.shape[1]
        return cls(pts.min(axis=0), pts.max(axis=0), np.broadcast_to(np.asarray(bins), (d,)))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def widths(self) -> np.ndarray:
        return (self.maxs - self.mins) / self.counts

    def __eq__(self, other):
        if not isinstance(other, BinningSpec):
            return NotImplemented
        return (
            np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Histogram:
    """Nonempty bins only: integer bin coordinates ``index`` (K, d) and ``mass`` (K,)."""

    spec: BinningSpec
    index: np.ndarray
    mass: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return self.spec.mins + (self.index + 0.5) * self.spec.widths

    @property
    def flat(self) -> np.ndarray:
        return np.ravel_multi_index(self.index.T, self.spec.counts)

    def dense(self) -> np.ndarray:
        out = np.zeros(int(np.prod(self.spec.counts)))
        out[self.flat] = self.mass
        return out

    @classmethod
    def from_masses(cls, masses, spec: BinningSpec | None = None) -> "Histogram":
        """1-D histogram from a dense mass vector over ``len(masses)`` bins on [0, 1]."""
        masses = np.asarray(masses, dtype=float)
        spec = spec or BinningSpec([0.0], [1.0], [len(masses)])
        nz = np.flatnonzero(masses > 0)
        return cls(spec, nz.reshape(-1, 1), masses[nz] / masses.sum())


@dataclass(frozen=True, eq=False)
class FlowSolution:
    flows: np.ndarray
    objective: float
    iterations: int = 0


# -- binning kernels ------------------------------------------------------


@njit(cache=True)
def _bin_counts_loop(points, mins, maxs, counts):
    n, d = points.shape
    flat = np.empty(n, np.int64)
    for r in range(n):
        key = 0
        for c in range(d):
            span = maxs[c] - mins[c]
            if span > 0.0:
                b = int(np.floor((points[r, c] - mins[c]) / span * counts[c]))
                if b >= counts[c]:
                    b = counts[c] - 1
                if b < 0:
                    b = 0
            else:
                b = 0
            key = key * counts[c] + b
        flat[r] = key
    return flat


def _bin_counts_vectorized(points, mins, maxs, counts):
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    idx = np.floor((points - mins) / safe * counts).astype(np.int64)
    idx = np.clip(idx, 0, counts - 1)
    idx[:, span == 0] = 0
    return np.ravel_multi_index(idx.T, counts)


def bin_flat_index(points, spec: BinningSpec, use_numba: bool | None = None) -> np.ndarray:
    """Flat bin index per point (half-open bins, last bin closed)."""
    points = np.ascontiguousarray(points, dtype=float)
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    if use_numba:
        return _bin_counts_loop(points, spec.mins, spec.maxs, spec.counts)
    return _bin_counts_vectorized(points, spec.mins, spec.maxs, spec.counts)


def build_histogram(points, spec: BinningSpec) -> Histogram:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if spec.dim == 1 else pts.reshape(1, -1)
    if len(pts) == 0:
        raise ValueError("no complete observations")
    if pts.shape[1] != spec.dim:
        raise ValueError(f"points have {pts.shape[1]} dimensions, spec has {spec.dim}")
    if np.isnan(pts).any():
        raise ValueError("histogram points must be complete (no missing values)")
    if np.any(pts < spec.mins) or np.any(pts > spec.maxs):
        raise ValueError("point outside the binning support")
    flat = bin_flat_index(pts, spec)
    keys, cnt = np.unique(flat, return_counts=True)
    index = np.stack(np.unravel_index(keys, spec.counts), axis=1)
    return Histogram(spec, index.astype(np.int64), cnt / cnt.sum())


# -- ground distance and transport ----------------------------------------


def _unit_coords(spec: BinningSpec, index) -> np.ndarray:
    # degenerate dimensions have count 1, so every center lands on 0.5
    return (np.asarray(index) + 0.5) / spec.counts


def ground_distance(a, b, spec: BinningSpec) -> float:
    """Euclidean distance between bin centers after rescaling each dimension to unit range."""
    span = spec.maxs - spec.mins
    safe = np.where(span > 0, span, 1.0)
    diff = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) / safe
    diff = np.where(span > 0, diff, 0.0)
    return float(np.sqrt(np.sum(diff**2)))


def cost_matrix(spec: BinningSpec, index_a, index_b) -> np.ndarray:
    ca = _unit_coords(spec, index_a)
    cb = _unit_coords(spec, index_b)
    return np.sqrt(((ca[:, None, :] - cb[None, :, :]) ** 2).sum(axis=-1))


def transport(supply, demand, cost, max_iter=None, tol=None) -> FlowSolution:
    """Exact minimum-cost transportation plan between two equal-total mass vectors."""
    a = np.ascontiguousarray(supply, dtype=float)
    b = np.ascontiguousarray(demand, dtype=float)
    C = np.ascontiguousarray(cost, dtype=float)
    m, n = len(a), len(b)
    if C.shape != (m, n):
        raise ValueError("cost matrix shape does not match supply/demand")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("masses must be non-negative")
    total = max(a.sum(), b.sum(), 1e-300)
    if abs(a.sum() - b.sum()) > 1e-9 * total:
        raise ValueError("supply and demand totals differ")
    if m == 0 or n == 0:
        return FlowSolution(np.zeros((m, n)), 0.0)
    scale = max(float(np.abs(C).max()), 1.0)
    tol = 1e-12 * scale if tol is None else tol
    max_iter = 50 * (m + n) * max(m, n) + 1000 if max_iter is None else max_iter
    bi, bj, bx, iters, status = transport_kernel(a, b, C, max_iter, tol)
    if status != 0:
        raise SolverError(f"transportation simplex did not converge in {max_iter} iterations")
    flows = np.zeros((m, n))
    np.add.at(flows, (bi, bj), bx)
    return FlowSolution(flows, float((flows * C).sum()), int(iters))


def _check_same_spec(P: Histogram, Q: Histogram):
    if P.spec != Q.spec:
        raise ValueError("histograms were built on different binning specs")


def emd_flow(P: Histogram, Q: Histogram) -> tuple[FlowSolution, np.ndarray, np.ndarray]:
    """Optimal plan between the nonempty bins of ``P`` (rows) and ``Q`` (columns).

    Mass shared by a bin in both histograms stays in place; with a metric
    ground distance some optimal plan always does this, so only the surplus
    and deficit bins enter the solver.
    """
    _check_same_spec(P, Q)
    fp, fq = P.flat, Q.flat
    common, ip, iq = np.intersect1d(fp, fq, assume_unique=True, return_indices=True)
    stay = np.minimum(P.mass[ip], Q.mass[iq])
    sup = P.mass.copy()
    dem = Q.mass.copy()
    sup[ip] -= stay
    dem[iq] -= stay
    rows = np.flatnonzero(sup > 0)
    cols = np.flatnonzero(dem > 0)
    flows = np.zeros((len(fp), len(fq)))
    flows[ip, iq] = stay
    if len(rows) and len(cols):
        a, b = sup[rows], dem[cols]
        b = b * (a.sum() / b.sum())
        C = cost_matrix(P.spec, P.index[rows], Q.index[cols])
        sol = transport(a, b, C)
        flows[np.ix_(rows, cols)] += sol.flows
        iters = sol.iterations
    else:
        iters = 0
    C_full = cost_matrix(P.spec, P.index, Q.index)
    return FlowSolution(flows, float((flows * C_full).sum()), iters), P.index, Q.index


def emd(P: Histogram, Q: Histogram) -> float:
    """Earth Mover's Distance between two histograms on one spec (both of unit mass)."""
    sol, _, _ = emd_flow(P, Q)
    total = sol.flows.sum()
    return sol.objective / total if total > 0 else 0.0


def emd_1d_oracle(P: Histogram, Q: Histogram) -> float:
    """Closed-form 1-D EMD: sum of |CDF_P - CDF_Q| times the center spacing."""
    _check_same_spec(P, Q)
    if P.spec.dim != 1:
        raise ValueError("the CDF oracle only applies to 1-D histograms")
    return emd_1d_cdf(P.dense(), Q.dense(), 1.0 / P.spec.counts[0])


def emd_1d_cdf(p, q, spacing=1.0) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum() * spacing)


# -- dataset level --------------------------------------------------------


def complete_rows(ds: Dataset) -> np.ndarray:
    """Rows whose every attribute holds an observed working-space value."""
    return ds.values[ds.eligible.all(axis=1)]


def statistical_distortion(dirty: Dataset, treated: Dataset, bins=DEFAULT_BINS, mode: str = "joint") -> float:
    """EMD between the empirical distributions of two datasets.

    ``mode="joint"`` bins complete v-tuples jointly; ``"per-attribute"`` sums
    1-D distances over attributes, each on its own observed values.
    """
    if dirty.v != treated.v:
        raise ValueError(f"datasets differ in attribute count ({dirty.v} vs {treated.v})")
    if mode == "joint":
        a, b = complete_rows(dirty), complete_rows(treated)
        if len(a) == 0 or len(b) == 0:
            raise ValueError("no complete observations")
        spec = BinningSpec.from_points(a, b, bins=bins)
        return emd(build_histogram(a, spec), build_histogram(b, spec))
    if mode == "per-attribute":
        total = 0.0
        for c in range(dirty.v):
            a = dirty.values[dirty.eligible[:, c], c]
            b = treated.values[treated.eligible[:, c], c]
            if len(a) == 0 or len(b) == 0:
                raise ValueError("no complete observations")
            spec = BinningSpec.from_points(a, b, bins=bins)
            total += emd(build_histogram(a, spec), build_histogram(b, spec))
        return total
    raise ValueError(f"unknown distortion mode {mode!r}")


def write_histogram_csv(hist: Histogram, path) -> None:
    centers = hist.centers
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"center{c + 1}" for c in range(hist.spec.dim)] + ["mass"])
        for row, m in zip(centers, hist.mass):
            w.writerow([repr(float(x)) for x in row] + [repr(float(m))])
