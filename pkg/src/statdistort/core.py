"""Dataset container, CSV ingestion/persistence and attribute transforms.

A dataset is a collection of time series, one per leaf node (i, j, k) of a
three-layer network. Observations are stored row-wise in one ``(N, v)`` float
array with ``NaN`` marking a missing value; ``offsets`` delimits the series.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

ROLES = ("dirty", "ideal", "sampled-dirty", "sampled-ideal", "treated")
DEFAULT_MAX_LENGTH = 170


class DataFormatError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


class NodeId(NamedTuple):
    i: int
    j: int
    k: int


class Observation(NamedTuple):
    t: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class TimeSeries:
    node: NodeId
    times: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def observations(self) -> list[Observation]:
        return [Observation(int(t), row) for t, row in zip(self.times, self.values)]


@dataclass(frozen=True)
class Transform:
    """Per-attribute working-space transform: ``"identity"`` or ``"log"``."""

    flags: tuple[str, ...]

    def __post_init__(self):
        flags = tuple(self.flags)
        for f in flags:
            if f not in ("identity", "log"):
                raise ValueError(f"unknown transform flag {f!r}")
        object.__setattr__(self, "flags", flags)

    @classmethod
    def identity(cls, v: int) -> "Transform":
        return cls(("identity",) * v)

    @classmethod
    def log_on(cls, v: int, attrs: Iterable[int]) -> "Transform":
        attrs = set(attrs)
        return cls(tuple("log" if a in attrs else "identity" for a in range(v)))

    @property
    def log_mask(self) -> np.ndarray:
        return np.array([f == "log" for f in self.flags], dtype=bool)

    @property
    def is_identity(self) -> bool:
        return not self.log_mask.any()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of series sharing ``v`` attributes.

    ``raw_mask`` marks cells that a log transform left untransformed because
    the observed value was non-positive; those cells carry raw-space values.
    """

    nodes: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    values: np.ndarray
    attribute_names: tuple[str, ...]
    role: str = "dirty"
    instance_ids: np.ndarray | None = None
    transform: Transform | None = None
    raw_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1, 3)
        offsets = np.asarray(self.offsets, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.attribute_names)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise DataFormatError("values must be (N, v) with one column per attribute name")
        if offsets.shape != (len(nodes) + 1,) or offsets[0] != 0 or offsets[-1] != len(values):
            raise DataFormatError("offsets do not delimit the observation rows")
        if len(times) != len(values):
            raise DataFormatError("times and values differ in length")
        if np.any(np.diff(offsets) < 1):
            raise DataFormatError("every series needs at least one observation")
        if self.role not in ROLES:
            raise ValueError(f"unknown dataset role {self.role!r}")
        ids = self.instance_ids
        ids = np.arange(len(nodes), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape != (len(nodes),):
            raise DataFormatError("one instance id per series required")
        raw = self.raw_mask
        if raw is not None:
            raw = np.asarray(raw, dtype=bool)
            if raw.shape != values.shape:
                raise DataFormatError("raw_mask must match values")
            if not raw.any():
                raw = None
        for arr in (nodes, offsets, times, values, ids):
            arr.setflags(write=False)
        if raw is not None:
            raw.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "attribute_names", names)
        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "raw_mask", raw)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_series(
        cls,
        series: Sequence[TimeSeries],
        attribute_names: Sequence[str],
        role: str = "dirty",
        max_length: int | None = DEFAULT_MAX_LENGTH,
    ) -> "Dataset":
        v = len(attribute_names)
        seen = set()
        nodes, times, values, offsets = [], [], [], [0]
        for ts in series:
            node = NodeId(*map(int, ts.node))
            if node in seen:
                raise DataFormatError(f"duplicate node {tuple(node)}")
            seen.add(node)
            t = np.asarray(ts.times, dtype=np.int64)
            x = np.asarray(ts.values, dtype=np.float64).reshape(len(t), -1)
            if x.shape[1] != v:
                raise DataFormatError(f"series {tuple(node)} has {x.shape[1]} attributes, expected {v}")
            if len(t) == 0:
                raise DataFormatError(f"series {tuple(node)} is empty")
            if np.any(np.diff(t) <= 0):
                raise DataFormatError(f"series {tuple(node)} time indices are not strictly increasing")
            if max_length is not None and len(t) > max_length:
                raise DataFormatError(f"series {tuple(node)} longer than {max_length}")
            nodes.append(node)
            times.append(t)
            values.append(x)
            offsets.append(offsets[-1] + len(t))
        return cls(
            nodes=np.array(nodes, dtype=np.int64).reshape(-1, 3),
            offsets=np.array(offsets),
            times=np.concatenate(times) if times else np.zeros(0, np.int64),
            values=np.vstack(values) if values else np.zeros((0, v)),
            attribute_names=attribute_names,
            role=role,
        )

    # -- shape ------------------------------------------------------------

    @property
    def v(self) -> int:
        return len(self.attribute_names)

    @property
    def n_series(self) -> int:
        return len(self.nodes)

    @property
    def n_obs(self) -> int:
        return len(self.values)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def row_series(self) -> np.ndarray:
        """Series index of every observation row."""
        return np.repeat(np.arange(self.n_series), self.lengths)

    def series(self, s: int) -> TimeSeries:
        lo, hi = self.offsets[s], self.offsets[s + 1]
        return TimeSeries(NodeId(*map(int, self.nodes[s])), self.times[lo:hi], self.values[lo:hi])

    def __iter__(self):
        return (self.series(s) for s in range(self.n_series))

    def __len__(self):
        return self.n_series

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def eligible(self) -> np.ndarray:
        """Cells holding an observed working-space value."""
        ok = ~np.isnan(self.values)
        if self.raw_mask is not None:
            ok &= ~self.raw_mask
        return ok

    def raw_values(self) -> np.ndarray:
        """Values mapped back to the original (untransformed) space."""
        if self.transform is None or self.transform.is_identity:
            return self.values
        out = self.values.copy()
        cols = self.transform.log_mask
        sub = out[:, cols]
        keep = np.zeros_like(sub, dtype=bool) if self.raw_mask is None else self.raw_mask[:, cols]
        out[:, cols] = np.where(keep, sub, np.exp(sub))
        return out

    # -- derivation -------------------------------------------------------

    def with_values(self, values: np.ndarray, written: np.ndarray | None = None, role: str | None = None) -> "Dataset":
        """New dataset with replaced values; ``written`` cells drop their raw flag."""
        raw = self.raw_mask
        if raw is not None and written is not None:
            raw = raw & ~written
        return replace(self, values=values, raw_mask=raw, role=role or self.role)

    def take_series(self, idx, role: str | None = None, instance_ids=None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        lengths = self.lengths[idx]
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        rows = np.concatenate([np.arange(self.offsets[s], self.offsets[s + 1]) for s in idx]) if len(idx) else np.zeros(0, np.int64)
        return replace(
            self,
            nodes=self.nodes[idx],
            offsets=offsets,
            times=self.times[rows],
            values=self.values[rows],
            instance_ids=self.instance_ids[idx] if instance_ids is None else instance_ids,
            raw_mask=None if self.raw_mask is None else self.raw_mask[rows],
            role=role or self.role,
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.attribute_names != self.attribute_names:
            raise DataFormatError("attribute names differ")
        raw = None
        if self.raw_mask is not None or other.raw_mask is not None:
            raw = np.vstack([
                np.zeros(self.values.shape, bool) if self.raw_mask is None else self.raw_mask,
                np.zeros(other.values.shape, bool) if other.raw_mask is None else other.raw_mask,
            ])
        return replace(
            self,
            nodes=np.vstack([self.nodes, other.nodes]),
            offsets=np.concatenate([self.offsets, other.offsets[1:] + self.offsets[-1]]),
            times=np.concatenate([self.times, other.times]),
            values=np.vstack([self.values, other.values]),
            instance_ids=np.concatenate([self.instance_ids, other.instance_ids + self.n_series]),
            raw_mask=raw,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.attribute_names == other.attribute_names
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


# -- CSV ------------------------------------------------------------------


@dataclass(frozen=True)
class Schema:
    """Column mapping for CSV input. ``attributes=None`` takes every other column."""

    node_columns: tuple[str, str, str] = ("i", "j", "k")
    time_column: str = "t"
    attributes: tuple[str, ...] | None = None


def _parse_int(text, name, lineno):
    try:
        val = int(text)
    except ValueError:
        raise DataFormatError(f"line {lineno}: column {name!r} is not an integer: {text!r}") from None
    if val < 0:
        raise DataFormatError(f"line {lineno}: column {name!r} must be >= 0")
    return val


def _parse_float(text, name, lineno):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"line {lineno}: column {name!r} is not a number: {text!r}") from None


def load_dataset(path, schema: Schema | None = None, max_length: int | None = DEFAULT_MAX_LENGTH) -> Dataset:
    """Read ``i,j,k,t,attr1,...,attrv`` CSV; empty attribute fields are missing."""
    schema = schema or Schema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: no data rows")
        header = [h.strip() for h in header]
        key_cols = list(schema.node_columns) + [schema.time_column]
        for col in key_cols:
            if col not in header:
                raise DataFormatError(f"{path}: header lacks column {col!r}")
        attrs = schema.attributes or tuple(h for h in header if h not in key_cols)
        if not attrs:
            raise DataFormatError(f"{path}: no attribute columns")
        for a in attrs:
            if a not in header:
                raise DataFormatError(f"{path}: header lacks attribute {a!r}")
        key_pos = [header.index(c) for c in key_cols]
        attr_pos = [header.index(a) for a in attrs]

        rows: dict[NodeId, dict[int, list[float]]] = {}
        n_rows = 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            i, j, k, t = (_parse_int(rec[p], key_cols[n], lineno) for n, p in enumerate(key_pos))
            vals = [_parse_float(rec[p], attrs[n], lineno) for n, p in enumerate(attr_pos)]
            per_node = rows.setdefault(NodeId(i, j, k), {})
            if t in per_node:
                raise DataFormatError(f"line {lineno}: duplicate time {t} for node {(i, j, k)}")
            per_node[t] = vals
            n_rows += 1
    if n_rows == 0:
        raise DataFormatError(f"{path}: no data rows")

    series = []
    for node in sorted(rows):
        obs = rows[node]
        ts = sorted(obs)
        series.append(TimeSeries(node, np.array(ts), np.array([obs[t] for t in ts], dtype=float)))
    return Dataset.from_series(series, attrs, max_length=max_length)


def save_dataset(ds: Dataset, path) -> None:
    """Write raw-space values; ``repr`` floats round-trip exactly."""
    path = Path(path)
    vals = ds.raw_values()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "k", "t", *ds.attribute_names])
        for s in range(ds.n_series):
            i, j, k = (int(x) for x in ds.nodes[s])
            for r in range(ds.offsets[s], ds.offsets[s + 1]):
                w.writerow([i, j, k, int(ds.times[r]), *("" if math.isnan(x) else repr(float(x)) for x in vals[r])])


# -- transforms -----------------------------------------------------------


def apply_transform(ds: Dataset, tf: Transform) -> Dataset:
    """Move ``ds`` into working space.

    Observed positive values on log-flagged attributes become ``ln(x)``.
    Non-positive observed values are left as they are and flagged in
    ``raw_mask`` so rule checks still see them.
    """
    if len(tf.flags) != ds.v:
        raise ValueError(f"transform has {len(tf.flags)} flags for {ds.v} attributes")
    if ds.transform is not None and not ds.transform.is_identity:
        raise ValueError("dataset is already transformed")
    cols = tf.log_mask
    values = ds.values.copy()
    raw = np.zeros(values.shape, dtype=bool)
    if cols.any():
        sub = values[:, cols]
        pos = sub > 0
        raw[:, cols] = ~np.isnan(sub) & ~pos
        with np.errstate(invalid="ignore", divide="ignore"):
            values[:, cols] = np.where(pos, np.log(np.where(pos, sub, 1.0)), sub)
    return replace(ds, values=values, transform=tf, raw_mask=raw)


def inverse_transform(ds: Dataset) -> Dataset:
    if ds.transform is None:
        return ds
    return replace(ds, values=ds.raw_values(), transform=None, raw_mask=None)
