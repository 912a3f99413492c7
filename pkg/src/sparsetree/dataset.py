"""Datasets for binary classification over thresholded numeric features.

A raw dataset holds continuous (or already 0/1) feature columns plus 0/1
labels.  Binarization turns every threshold into an indicator column
(bit = 1 iff value <= threshold); thresholds sit halfway between consecutive
distinct values of a feature.  Binary columns are stored as integer bitmasks
over samples, which is what the solver operates on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DataFormatError(ValueError):
    """Malformed input data; message carries a 1-based row/column position."""


# ---------------------------------------------------------------- bit helpers

def bits_to_bools(bits: int, n: int) -> np.ndarray:
    """Expand an n-sample bitmask into a boolean vector (index order)."""
    raw = bits.to_bytes((n + 7) // 8, "little")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n].astype(bool)


def bools_to_bits(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(np.asarray(mask, dtype=bool), bitorder="little").tobytes(), "little")


# ---------------------------------------------------------------- raw data

@dataclass(frozen=True)
class RawDataset:
    """Feature matrix (n, m) of finite float64 plus 0/1 labels."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int]) -> "RawDataset":
        idx = np.asarray(indices, dtype=int)
        return RawDataset(self.features[idx], self.labels[idx], self.feature_names)


def make_raw(features, labels, feature_names=None) -> RawDataset:
    """Validate and wrap arrays as a RawDataset."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataFormatError("feature matrix must be 2-dimensional")
    n, m = x.shape
    if n < 1:
        raise DataFormatError("no samples")
    if m < 1:
        raise DataFormatError("no feature columns")
    if not np.all(np.isfinite(x)):
        i, j = np.argwhere(~np.isfinite(x))[0]
        raise DataFormatError(f"non-finite feature value at row {i + 1}, column {j + 1}")
    y = np.asarray(labels)
    if y.shape != (n,):
        raise DataFormatError("labels must be one value per sample")
    if not np.all((y == 0) | (y == 1)):
        i = int(np.argwhere(~((y == 0) | (y == 1)))[0][0])
        raise DataFormatError(f"label outside {{0,1}} at row {i + 1}")
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(m))
    else:
        feature_names = tuple(feature_names)
        if len(feature_names) != m:
            raise DataFormatError("feature name count does not match columns")
        if len(set(feature_names)) != m:
            raise DataFormatError("duplicate feature names")
    return RawDataset(x, y.astype(np.int8), feature_names)


def load_csv(path) -> RawDataset:
    """Load a CSV of numeric feature columns; the last column is the 0/1 label.

    Row positions in error messages are 1-based over data rows (the header
    is not counted); columns are 1-based.
    """
    try:
        fh = open(path, "r", newline="")
    except OSError as e:
        raise DataFormatError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file: missing header") from None
        if len(header) < 2:
            raise DataFormatError("header must list at least one feature and the label")
        names = [h.strip() for h in header[:-1]]
        rows, labels = [], []
        for r, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise DataFormatError(f"row {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for c, cell in enumerate(rec[:-1], start=1):
                text = cell.strip()
                if not text:
                    raise DataFormatError(f"missing value at row {r}, column {c}")
                try:
                    v = float(text)
                except ValueError:
                    raise DataFormatError(f"non-numeric value {text!r} at row {r}, column {c}") from None
                if not np.isfinite(v):
                    raise DataFormatError(f"non-finite value at row {r}, column {c}")
                vals.append(v)
            ltext = rec[-1].strip()
            try:
                lv = float(ltext)
            except ValueError:
                raise DataFormatError(f"non-numeric label {ltext!r} at row {r}") from None
            if lv not in (0.0, 1.0):
                raise DataFormatError(f"label outside {{0,1}} at row {r}")
            rows.append(vals)
            labels.append(int(lv))
    if not rows:
        raise DataFormatError("no samples")
    return make_raw(np.array(rows, dtype=np.float64), np.array(labels), names)


# ---------------------------------------------------------------- binarization

@dataclass(frozen=True)
class BinaryDataset:
    """Indicator columns as sample bitmasks; bit i of columns[c] is sample i.

    column_meta[c] = (source feature index, threshold); columns are ordered by
    (feature, threshold).  pos_mask is the bitmask of label-1 samples.
    """

    n_samples: int
    columns: tuple[int, ...]
    column_meta: tuple[tuple[int, float], ...]
    labels: np.ndarray
    feature_names: tuple[str, ...]
    pos_mask: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def full_mask(self) -> int:
        return (1 << self.n_samples) - 1

    def column_header(self, c: int) -> str:
        f, t = self.column_meta[c]
        return f"feature{f}≤{t!r}"

    def rows_matrix(self) -> np.ndarray:
        """(n, m_tilde) uint8 matrix of the indicator columns."""
        if "rows" not in self._cache:
            if self.n_columns:
                mat = np.stack([bits_to_bools(c, self.n_samples) for c in self.columns], axis=1)
            else:
                mat = np.zeros((self.n_samples, 0), dtype=bool)
            self._cache["rows"] = mat.astype(np.uint8)
        return self._cache["rows"]

    def column_index(self, feature: int, threshold: float) -> int:
        if "lookup" not in self._cache:
            self._cache["lookup"] = {meta: c for c, meta in enumerate(self.column_meta)}
        try:
            return self._cache["lookup"][(feature, threshold)]
        except KeyError:
            raise KeyError(f"no column for feature {feature} at threshold {threshold!r}") from None


def _make_columns(raw: RawDataset, pairs: list[tuple[int, float]]) -> BinaryDataset:
    pairs = sorted(set(pairs))
    cols = tuple(bools_to_bits(raw.features[:, f] <= t) for f, t in pairs)
    pos = bools_to_bits(raw.labels == 1)
    return BinaryDataset(
        n_samples=raw.n_samples,
        columns=cols,
        column_meta=tuple(pairs),
        labels=raw.labels.copy(),
        feature_names=raw.feature_names,
        pos_mask=pos,
    )


def full_binarize(raw: RawDataset) -> BinaryDataset:
    """All split points: midpoints between consecutive distinct values per feature.

    A feature with k_j distinct values contributes k_j - 1 columns, so the
    total column count is sum_j (k_j - 1).
    """
    pairs: list[tuple[int, float]] = []
    for j in range(raw.n_features):
        u = np.unique(raw.features[:, j])
        for a, b in zip(u[:-1], u[1:]):
            pairs.append((j, float((a + b) / 2.0)))
    return _make_columns(raw, pairs)


def binarize_with_thresholds(raw: RawDataset, thresholds: Iterable[tuple[int, float]]) -> BinaryDataset:
    """Indicator columns for an explicit (feature, threshold) list, sorted by (feature, threshold)."""
    pairs = []
    for f, t in thresholds:
        f = int(f)
        if not 0 <= f < raw.n_features:
            raise DataFormatError(f"threshold references unknown feature index {f}")
        pairs.append((f, float(t)))
    return _make_columns(raw, pairs)


def write_binary_csv(bin_data: BinaryDataset, path) -> None:
    """CSV of 0/1 columns, header feature<idx><=<threshold>, label last."""
    rows = bin_data.rows_matrix()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([bin_data.column_header(c) for c in range(bin_data.n_columns)] + ["label"])
        for i in range(bin_data.n_samples):
            w.writerow([int(v) for v in rows[i]] + [int(bin_data.labels[i])])


def read_binary_csv(path) -> BinaryDataset:
    """Inverse of write_binary_csv; headers must follow the feature<idx><=<t> convention."""
    try:
        fh = open(path, "r", newline="")
    except OSError as e:
        raise DataFormatError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file: missing header") from None
        if header[-1].strip() != "label":
            raise DataFormatError("last header cell must be 'label'")
        meta = []
        for c, cell in enumerate(header[:-1], start=1):
            text = cell.strip()
            if "≤" not in text or not text.startswith("feature"):
                raise DataFormatError(f"header column {c} is not of the form feature<idx>≤<threshold>")
            left, right = text.split("≤", 1)
            try:
                meta.append((int(left[len("feature"):]), float(right)))
            except ValueError:
                raise DataFormatError(f"header column {c} is not of the form feature<idx>≤<threshold>") from None
        rows, labels = [], []
        for r, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise DataFormatError(f"row {r} has {len(rec)} cells, expected {len(header)}")
            for c, cell in enumerate(rec[:-1], start=1):
                if cell.strip() not in ("0", "1"):
                    raise DataFormatError(f"non-binary cell at row {r}, column {c}")
            if rec[-1].strip() not in ("0", "1"):
                raise DataFormatError(f"label outside {{0,1}} at row {r}")
            rows.append([int(v) for v in rec[:-1]])
            labels.append(int(rec[-1]))
    if not rows:
        raise DataFormatError("no samples")
    mat = np.array(rows, dtype=np.uint8)
    y = np.array(labels, dtype=np.int8)
    n_feat = max(f for f, _ in meta) + 1 if meta else 0
    names = tuple(f"feature{j}" for j in range(n_feat))
    return BinaryDataset(
        n_samples=mat.shape[0],
        columns=tuple(bools_to_bits(mat[:, c] == 1) for c in range(mat.shape[1])),
        column_meta=tuple(meta),
        labels=y,
        feature_names=names,
        pos_mask=bools_to_bits(y == 1),
    )


# ---------------------------------------------------------------- support sets

@dataclass(frozen=True)
class SupportSet:
    """Subset of sample indices as a bitmask over a dataset of fixed size."""

    bits: int
    size: int

    @property
    def cardinality(self) -> int:
        return self.bits.bit_count()

    def intersect(self, other: "SupportSet") -> "SupportSet":
        return SupportSet(self.bits & other.bits, self.size)

    def complement(self) -> "SupportSet":
        return SupportSet(((1 << self.size) - 1) ^ self.bits, self.size)

    def indices(self) -> list[int]:
        out, b = [], self.bits
        while b:
            low = b & -b
            out.append(low.bit_length() - 1)
            b ^= low
        return out

    def __iter__(self):
        return iter(self.indices())

    @classmethod
    def from_indices(cls, indices: Iterable[int], size: int) -> "SupportSet":
        bits = 0
        for i in indices:
            if not 0 <= i < size:
                raise ValueError(f"index {i} out of range for size {size}")
            bits |= 1 << i
        return cls(bits, size)

    @classmethod
    def full(cls, size: int) -> "SupportSet":
        return cls((1 << size) - 1, size)


# ---------------------------------------------------------------- equivalence classes

@dataclass(frozen=True)
class EquivalenceClasses:
    """Partition of samples by identical binarized feature vector.

    minority_label[u] / minority_count[u] describe the rarer label inside
    group u on the full dataset.  Internals keep a compact id per sample for
    the impure groups only (pure groups contribute nothing to minority sums
    on any support).
    """

    groups: tuple[tuple[int, ...], ...]
    minority_label: tuple[int, ...]
    minority_count: tuple[int, ...]
    _impure_ids: np.ndarray = field(repr=False, compare=False, default=None)
    _n_impure: int = field(repr=False, compare=False, default=0)
    _labels: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def equivalence_classes(bin_data: BinaryDataset) -> EquivalenceClasses:
    rows = bin_data.rows_matrix()
    y = bin_data.labels
    if rows.shape[1]:
        _, inverse = np.unique(rows, axis=0, return_inverse=True)
        inverse = inverse.ravel()
    else:
        inverse = np.zeros(bin_data.n_samples, dtype=int)
    n_groups = int(inverse.max()) + 1 if bin_data.n_samples else 0
    groups, minority_label, minority_count = [], [], []
    impure = []
    for g in range(n_groups):
        members = np.flatnonzero(inverse == g)
        pos = int(y[members].sum())
        neg = len(members) - pos
        groups.append(tuple(int(i) for i in members))
        # ties go to label 1 as "minority": irrelevant for counts, pick deterministically
        minority_label.append(1 if pos <= neg else 0)
        minority_count.append(min(pos, neg))
        if 0 < pos < len(members):
            impure.append(g)
    remap = {g: k for k, g in enumerate(impure)}
    ids = np.array([remap.get(int(g), len(impure)) for g in inverse], dtype=np.int64)
    return EquivalenceClasses(
        groups=tuple(groups),
        minority_label=tuple(minority_label),
        minority_count=tuple(minority_count),
        _impure_ids=ids,
        _n_impure=len(impure),
        _labels=y.astype(np.int64),
    )


def minority_total(eq: EquivalenceClasses, support) -> int:
    """Sum over groups of the rarer-label count inside the given support.

    Accepts a SupportSet or a raw bitmask int.  This is the exact count whose
    scaled value is the equivalence-points lower bound.
    """
    bits = support.bits if isinstance(support, SupportSet) else int(support)
    if eq._n_impure == 0 or bits == 0:
        return 0
    mask = bits_to_bools(bits, len(eq._impure_ids))
    ids = eq._impure_ids[mask]
    labs = eq._labels[mask]
    cnt = np.bincount(ids, minlength=eq._n_impure + 1)[: eq._n_impure]
    pos = np.bincount(ids, weights=labs, minlength=eq._n_impure + 1)[: eq._n_impure]
    return int(np.minimum(pos, cnt - pos).sum())
