"""Bootstrap replication harness: ideal-set extraction, paired sampling, sweeps."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cleaning import CleaningContext, get_strategy, treat
from .core import Dataset, Transform, apply_transform
from .distortion import DEFAULT_BINS, statistical_distortion
from .glitch import (
    DEFAULT_WEIGHTS,
    OutlierLimits,
    as_weights,
    cell_glitch_index,
    default_rules,
    fit_outlier_limits,
    glitch_bits,
    glitch_percentages,
    normalized_glitch_score,
    series_percentages,
)

log = logging.getLogger(__name__)

LIMIT_MODES = ("replication", "global")


@dataclass
class ExperimentConfig:
    replications: int = 50
    series_per_sample: int = 100
    strategies: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    cost_fractions: list = field(default_factory=lambda: [0, 20, 50, 100])
    ideal_threshold: float = 5.0
    weights: tuple = DEFAULT_WEIGHTS
    transform: Transform | None = None
    master_seed: int = 0
    rules: list = field(default_factory=default_rules)
    limits: str = "replication"
    bins: int = DEFAULT_BINS
    distortion_mode: str = "joint"
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.series_per_sample < 1:
            raise ValueError("series_per_sample must be >= 1")
        for x in self.cost_fractions:
            if not 0 <= x <= 100:
                raise ValueError(f"cost fraction {x} outside [0, 100]")
        if self.limits not in LIMIT_MODES:
            raise ValueError(f"limits must be one of {LIMIT_MODES}")
        self.weights = tuple(as_weights(self.weights))
        self.strategies = [get_strategy(s) for s in self.strategies]


@dataclass
class ReplicationResult:
    replication: int
    strategy: int
    fraction: float
    glitch_improvement: float = float("nan")
    index_improvement: float = float("nan")
    emd: float = float("nan")
    dirty_score: float = float("nan")
    treated_score: float = float("nan")
    dirty_pct: tuple = (float("nan"),) * 3
    treated_pct: tuple = (float("nan"),) * 3
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


# -- seeds ----------------------------------------------------------------


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed mixed from the master seed and integer keys via SeedSequence hashing."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])


SAMPLE_STREAM, IMPUTE_STREAM = 0, 1


# -- ideal extraction and sampling ----------------------------------------


def extract_ideal(ds: Dataset, rules, threshold: float = 5.0, return_limits: bool = False):
    """Series with strictly under ``threshold`` percent of every glitch type.

    Pass 1 screens on missing and inconsistent percentages; pass 2 fits 3-sigma
    limits on the pass-1 survivors and applies the full three-type screen.
    """
    if ds.n_series == 0:
        raise ValueError("empty dataset")
    no_outliers = _null_limits(ds.v)
    pct = series_percentages(ds, glitch_bits(ds, rules, no_outliers))
    keep1 = np.flatnonzero((pct[:, 0] < threshold) & (pct[:, 1] < threshold))
    if len(keep1) == 0:
        raise ValueError("empty ideal set")
    limits = fit_outlier_limits(ds.take_series(keep1))
    pct = series_percentages(ds, glitch_bits(ds, rules, limits))
    keep = np.flatnonzero(np.all(pct < threshold, axis=1))
    if len(keep) == 0:
        raise ValueError("empty ideal set")
    ideal = ds.take_series(keep, role="ideal")
    return (ideal, limits) if return_limits else ideal


def _null_limits(v):
    return OutlierLimits(np.zeros(v), np.full(v, np.inf))


def sample_pair(dirty: Dataset, ideal: Dataset, B: int, seed) -> tuple[Dataset, Dataset]:
    """Draw B whole series with replacement from each source."""
    if dirty.n_series == 0 or ideal.n_series == 0:
        raise ValueError("cannot sample from an empty dataset")
    rng = np.random.default_rng(seed)
    di = rng.integers(0, dirty.n_series, B)
    ii = rng.integers(0, ideal.n_series, B)
    ids = np.arange(B, dtype=np.int64)
    return (
        dirty.take_series(di, role="sampled-dirty", instance_ids=ids),
        ideal.take_series(ii, role="sampled-ideal", instance_ids=ids),
    )


# -- replications ---------------------------------------------------------


def _prepare(dirty: Dataset, config: ExperimentConfig):
    if config.transform is not None and not config.transform.is_identity and dirty.transform is None:
        dirty = apply_transform(dirty, config.transform)
    ideal, limits = extract_ideal(dirty, config.rules, config.ideal_threshold, return_limits=True)
    global_limits = fit_outlier_limits(ideal) if config.limits == "global" else None
    return dirty, ideal, global_limits


def replication_pair(dirty: Dataset, ideal: Dataset, config: ExperimentConfig, i: int):
    return sample_pair(dirty, ideal, config.series_per_sample, derive_seed(config.master_seed, i, SAMPLE_STREAM))


def _run_one(dirty, ideal, config, i, global_limits=None, strategies=None, fractions=None):
    strategies = config.strategies if strategies is None else strategies
    fractions = config.cost_fractions if fractions is None else fractions
    results = []
    try:
        d_i, ideal_i = replication_pair(dirty, ideal, config, i)
        need_model = any(s.missing_inconsistent_method == "gaussian-impute" for s in strategies)
        ctx = CleaningContext.fit(ideal_i, limits=global_limits, need_model=need_model)
        bits = glitch_bits(d_i, config.rules, ctx.limits)
        dirty_score = normalized_glitch_score(d_i, config.rules, ctx.limits, config.weights, bits=bits)
        dirty_index = cell_glitch_index(d_i, config.rules, ctx.limits, config.weights, bits=bits)
        dirty_pct = tuple(glitch_percentages(d_i, config.rules, ctx.limits, bits=bits))
    except Exception as exc:  # recorded per result row
        log.warning("replication %d failed: %s", i, exc)
        return [ReplicationResult(i, s.id, float(x), error=f"{type(exc).__name__}: {exc}") for s in strategies for x in fractions]

    impute_seed = derive_seed(config.master_seed, i, IMPUTE_STREAM)
    for s in strategies:
        for x in fractions:
            try:
                tr = treat(d_i, s, config.rules, ctx, x, impute_seed, config.weights, bits=bits)
                tbits = glitch_bits(tr.treated, config.rules, ctx.limits)
                t_score = normalized_glitch_score(tr.treated, config.rules, ctx.limits, config.weights, bits=tbits)
                t_index = cell_glitch_index(tr.treated, config.rules, ctx.limits, config.weights, bits=tbits)
                dist = statistical_distortion(d_i, tr.treated, bins=config.bins, mode=config.distortion_mode)
                results.append(ReplicationResult(
                    replication=i,
                    strategy=s.id,
                    fraction=float(x),
                    glitch_improvement=dirty_score - t_score,
                    index_improvement=dirty_index - t_index,
                    emd=dist,
                    dirty_score=dirty_score,
                    treated_score=t_score,
                    dirty_pct=dirty_pct,
                    treated_pct=tuple(glitch_percentages(tr.treated, config.rules, ctx.limits, bits=tbits)),
                ))
            except Exception as exc:
                log.warning("replication %d strategy %d fraction %s failed: %s", i, s.id, x, exc)
                results.append(ReplicationResult(i, s.id, float(x), error=f"{type(exc).__name__}: {exc}"))
    return results


def run_replication(dirty: Dataset, ideal: Dataset, config: ExperimentConfig, strategy, x: float, i: int) -> ReplicationResult:
    """One test pair, one strategy, one cost fraction.

    ``dirty`` and ``ideal`` are expected in working space (see :func:`prepare`).
    """
    global_limits = fit_outlier_limits(ideal) if config.limits == "global" else None
    return _run_one(dirty, ideal, config, i, global_limits, [get_strategy(strategy)], [x])[0]


def prepare(dirty: Dataset, config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Working-space dirty data and its extracted ideal set."""
    d, ideal, _ = _prepare(dirty, config)
    return d, ideal


def _worker(args):
    return _run_one(*args)


def run_experiment(dirty: Dataset, config: ExperimentConfig) -> list[ReplicationResult]:
    """All replications x strategies x cost fractions, ordered by that key.

    Every strategy and fraction in replication ``i`` sees the same test pair.
    """
    if not config.strategies or not config.cost_fractions:
        return []
    dirty, ideal, global_limits = _prepare(dirty, config)
    jobs = [(dirty, ideal, config, i, global_limits) for i in range(config.replications)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_worker, jobs))
    else:
        chunks = [_worker(j) for j in jobs]
    return [r for chunk in chunks for r in chunk]


# -- aggregation and output -----------------------------------------------


@dataclass
class SummaryRow:
    strategy: int
    fraction: float
    n: int
    n_failed: int
    improvement_mean: float
    improvement_std: float
    emd_mean: float
    emd_std: float
    dirty_pct: tuple
    treated_pct: tuple


def summarize(results) -> list[SummaryRow]:
    """Mean and (population) standard deviation per (strategy, fraction).

    Failed replications are counted but excluded from every aggregate.
    """
    groups: dict[tuple, list[ReplicationResult]] = {}
    for r in results:
        groups.setdefault((r.strategy, r.fraction), []).append(r)
    rows = []
    for (s, x), rs in sorted(groups.items()):
        ok = [r for r in rs if not r.failed]
        imp = np.array([r.glitch_improvement for r in ok])
        em = np.array([r.emd for r in ok])
        nan3 = (float("nan"),) * 3
        rows.append(SummaryRow(
            strategy=s,
            fraction=x,
            n=len(ok),
            n_failed=len(rs) - len(ok),
            improvement_mean=float(imp.mean()) if len(ok) else float("nan"),
            improvement_std=float(imp.std()) if len(ok) else float("nan"),
            emd_mean=float(em.mean()) if len(ok) else float("nan"),
            emd_std=float(em.std()) if len(ok) else float("nan"),
            dirty_pct=tuple(np.mean([r.dirty_pct for r in ok], axis=0)) if ok else nan3,
            treated_pct=tuple(np.mean([r.treated_pct for r in ok], axis=0)) if ok else nan3,
        ))
    return rows


def _fmt(x) -> str:
    return repr(float(x))


RESULT_COLUMNS = [
    "replication", "strategy", "fraction", "glitch_improvement", "index_improvement", "emd",
    "dirty_score", "treated_score",
    "dirty_missing_pct", "dirty_inconsistent_pct", "dirty_outlier_pct",
    "treated_missing_pct", "treated_inconsistent_pct", "treated_outlier_pct",
]


def write_results_csv(results, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            if r.failed:
                continue
            w.writerow([
                r.replication, r.strategy, _fmt(r.fraction), _fmt(r.glitch_improvement),
                _fmt(r.index_improvement), _fmt(r.emd), _fmt(r.dirty_score), _fmt(r.treated_score),
                *map(_fmt, r.dirty_pct), *map(_fmt, r.treated_pct),
            ])


def write_failures_csv(results, path) -> int:
    failed = [r for r in results if r.failed]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "strategy", "fraction", "error"])
        for r in failed:
            w.writerow([r.replication, r.strategy, _fmt(r.fraction), r.error])
    return len(failed)


def write_summary_csv(rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([
            "strategy", "fraction", "n", "n_failed", "improvement_mean", "improvement_std",
            "emd_mean", "emd_std",
            "dirty_missing_pct", "dirty_inconsistent_pct", "dirty_outlier_pct",
            "treated_missing_pct", "treated_inconsistent_pct", "treated_outlier_pct",
        ])
        for r in rows:
            w.writerow([
                r.strategy, _fmt(r.fraction), r.n, r.n_failed, _fmt(r.improvement_mean),
                _fmt(r.improvement_std), _fmt(r.emd_mean), _fmt(r.emd_std),
                *map(_fmt, r.dirty_pct), *map(_fmt, r.treated_pct),
            ])


def write_scatter_csv(results, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "fraction", "improvement", "emd"])
        for r in results:
            if not r.failed:
                w.writerow([r.strategy, _fmt(r.fraction), _fmt(r.glitch_improvement), _fmt(r.emd)])
