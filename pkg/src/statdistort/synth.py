"""Seeded synthetic hierarchical time-series data with injected glitches.

Clean values respect the default constraints: attr1 is lognormal
(non-negative, right-skewed), attr2 normal, attr3 beta on [0, 1] with its bulk
near 1. Glitches are injected per cell at rates scaled by a per-series
intensity drawn from a two-component mixture, so a minority of series stays
clean enough to form an ideal set.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import Dataset, TimeSeries

ATTRIBUTE_NAMES = ("attr1", "attr2", "attr3")


@dataclass(frozen=True)
class SynthSpec:
    n_i: int = 5
    n_j: int = 8
    n_k: int = 5
    length: int = 170
    min_length: int | None = None

    attr1_logmean: float = 0.0
    attr1_logsd: float = 0.5
    attr2_mean: float = 50.0
    attr2_sd: float = 2.0
    attr3_a: float = 8.0
    attr3_b: float = 1.5

    p_missing: float = 0.15
    p_inconsistent_extra: float = 0.5
    p_outlier: float = 0.07
    # attributes that receive injected rule violations (0 = attr1, 2 = attr3)
    inconsistent_attrs: tuple = (0,)

    clean_fraction: float = 0.3
    clean_intensity: float = 0.1
    # multiplicative outlier factors per attribute; attr3 shrinks so it stays in [0, 1]
    outlier_factors: tuple = ((3.0, 6.0), (1.6, 2.4), (0.2, 0.5))
    seed: int = 0

    def __post_init__(self):
        for name in ("p_missing", "p_inconsistent_extra", "p_outlier", "clean_fraction"):
            val = getattr(self, name)
            if not 0 <= val < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {val}")
        if min(self.n_i, self.n_j, self.n_k) < 1 or self.length < 1:
            raise ValueError("node counts and length must be positive")
        if self.min_length is not None and not 1 <= self.min_length <= self.length:
            raise ValueError("min_length must lie in [1, length]")
        factors = tuple((float(lo), float(hi)) for lo, hi in self.outlier_factors)
        if len(factors) != 3 or any(not 0 < lo <= hi for lo, hi in factors):
            raise ValueError("need one (lo, hi) factor range with 0 < lo <= hi per attribute")
        object.__setattr__(self, "outlier_factors", factors)
        targets = tuple(sorted(set(int(a) for a in self.inconsistent_attrs)))
        if not set(targets) <= {0, 2}:
            raise ValueError("only attr1 (0) and attr3 (2) carry rules that injection can violate")
        object.__setattr__(self, "inconsistent_attrs", targets)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        d = dict(d)
        if "outlier_factors" in d:
            d["outlier_factors"] = tuple(tuple(f) for f in d["outlier_factors"])
        if "inconsistent_attrs" in d:
            d["inconsistent_attrs"] = tuple(d["inconsistent_attrs"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


REFERENCE_SPEC = SynthSpec(seed=20120827)


def series_intensity(rng, n: int, clean_fraction: float, clean_intensity: float) -> np.ndarray:
    """Per-series glitch-rate multipliers with mean exactly 1."""
    n_clean = int(round(clean_fraction * n))
    m = np.empty(n)
    m[:n_clean] = rng.uniform(0.0, 2 * clean_intensity, n_clean)
    m[n_clean:] = rng.uniform(0.6, 1.4, n - n_clean)
    rng.shuffle(m)
    mean = m.mean()
    return m / mean if mean > 0 else np.ones(n)


def generate(spec: SynthSpec = REFERENCE_SPEC) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    nodes = [(i, j, k) for i in range(spec.n_i) for j in range(spec.n_j) for k in range(spec.n_k)]
    S = len(nodes)
    if spec.min_length is None:
        lengths = np.full(S, spec.length)
    else:
        lengths = rng.integers(spec.min_length, spec.length + 1, S)
    intensity = series_intensity(rng, S, spec.clean_fraction, spec.clean_intensity)

    series = []
    for s, node in enumerate(nodes):
        T = int(lengths[s])
        x = np.empty((T, 3))
        x[:, 0] = rng.lognormal(spec.attr1_logmean, spec.attr1_logsd, T)
        x[:, 1] = rng.normal(spec.attr2_mean, spec.attr2_sd, T)
        x[:, 2] = rng.beta(spec.attr3_a, spec.attr3_b, T)

        m = intensity[s]
        u_miss, u_inc, u_out = rng.random((3, T, 3))
        missing = u_miss < min(spec.p_missing * m, 0.95)
        # rule-violating values on the constrained attributes, kept inside 3-sigma
        inc = (u_inc < min(spec.p_inconsistent_extra * m, 0.95)) & ~missing
        inc[:, [a for a in range(3) if a not in spec.inconsistent_attrs]] = False
        x[inc[:, 0], 0] = -rng.uniform(0.05, 1.0, inc[:, 0].sum())
        x[inc[:, 2], 2] = rng.uniform(1.005, 1.04, inc[:, 2].sum())
        # extremes attached to the clean support; no attr1 extremes on rows where
        # rule 3 already flags attr1
        out = (u_out < min(spec.p_outlier * m, 0.95)) & ~missing & ~inc
        out[:, 0] &= ~missing[:, 2]
        for a, (lo, hi) in enumerate(spec.outlier_factors):
            rows = out[:, a]
            x[rows, a] *= rng.uniform(lo, hi, rows.sum())
        x[missing] = np.nan
        series.append(TimeSeries(node, np.arange(T), x))
    return Dataset.from_series(series, ATTRIBUTE_NAMES, max_length=None)


def reference_dataset() -> Dataset:
    """Canonical 200-series, T = 170, v = 3 dataset used by the acceptance suite."""
    return generate(REFERENCE_SPEC)
