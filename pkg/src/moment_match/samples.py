"""Bounded samples, labeled datasets, disk ingestion and synthetic domain pairs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed into a matrix."""


@dataclass(frozen=True)
class Bounds:
    """Closed activation range ``[lo, hi]`` shared by every coordinate."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError(f"bounds must be finite, got [{lo}, {hi}]")
        if not lo < hi:
            raise ValueError(f"bounds require lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def span(self) -> float:
        return self.hi - self.lo


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """An ``n x N`` matrix whose entries all lie inside ``bounds``.

    Out-of-range entries raise instead of being clipped.
    """

    data: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"sample must be a 2-D matrix, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"sample needs n >= 1 and N >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample contains non-finite entries")
        lo, hi = self.bounds.lo, self.bounds.hi
        if data.min() < lo or data.max() > hi:
            raise ValueError(
                f"sample entries span [{data.min()}, {data.max()}], outside bounds [{lo}, {hi}]"
            )
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return self.bounds == other.bounds and np.array_equal(self.data, other.data)


def one_hot(class_ids, n_classes: int) -> np.ndarray:
    class_ids = np.asarray(class_ids, dtype=int)
    if class_ids.size and (class_ids.min() < 0 or class_ids.max() >= n_classes):
        raise ValueError(f"class ids must lie in [0, {n_classes})")
    out = np.zeros((class_ids.size, n_classes))
    out[np.arange(class_ids.size), class_ids] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Inputs with one-hot labels; ``labels[i, c] == 1`` iff row ``i`` has class ``c``."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("inputs and labels must both be 2-D")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"inputs have {x.shape[0]} rows but labels have {y.shape[0]}")
        if not np.all((y == 0.0) | (y == 1.0)) or not np.all(y.sum(axis=1) == 1.0):
            raise ValueError("every label row must be one-hot")
        object.__setattr__(self, "inputs", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))

    @classmethod
    def from_ids(cls, inputs, class_ids, n_classes: int | None = None) -> "LabeledSample":
        class_ids = np.asarray(class_ids, dtype=int)
        if n_classes is None:
            n_classes = int(class_ids.max()) + 1 if class_ids.size else 1
        return cls(inputs, one_hot(class_ids, n_classes))

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def class_ids(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    def take(self, index) -> "LabeledSample":
        return LabeledSample(self.inputs[index], self.labels[index])

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return np.array_equal(self.inputs, other.inputs) and np.array_equal(
            self.labels, other.labels
        )


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """Labeled source, unlabeled target, and a labeled target test split.

    Training code receives only ``source`` and ``target_unlabeled``;
    ``target_test`` exists for the final evaluation.
    """

    source: LabeledSample
    target_unlabeled: np.ndarray
    target_test: LabeledSample
    name: str = field(default="task")

    def __post_init__(self):
        t = _frozen(self.target_unlabeled)
        if t.ndim != 2:
            raise ValueError("target_unlabeled must be 2-D")
        object.__setattr__(self, "target_unlabeled", t)
        dims = {self.source.input_dim, t.shape[1], self.target_test.input_dim}
        if len(dims) != 1:
            raise ValueError(f"source and target input dimensions differ: {sorted(dims)}")
        if self.source.n_classes != self.target_test.n_classes:
            raise ValueError("source and target_test disagree on the number of classes")

    @property
    def input_dim(self) -> int:
        return self.source.input_dim

    @property
    def n_classes(self) -> int:
        return self.source.n_classes

    def __eq__(self, other):
        if not isinstance(other, DomainDataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.source == other.source
            and np.array_equal(self.target_unlabeled, other.target_unlabeled)
            and self.target_test == other.target_test
        )


# --------------------------------------------------------------------------- #
# ingestion
# --------------------------------------------------------------------------- #

def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_dense_csv(path, label_column=None, bounds: Bounds | None = None):
    """Read a comma-separated numeric table.

    A first row containing any non-numeric cell is treated as the header.
    With ``label_column`` (a header name, or an integer position) the column
    is one-hot encoded over the sorted set of observed class ids and a
    :class:`LabeledSample` is returned. Otherwise the result is a plain matrix,
    or a :class:`Sample` when ``bounds`` is given.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: empty file")

    header = None
    if not all(_is_number(c) for c in rows[0][1]):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header but no data rows")

    width = len(header) if header is not None else len(rows[0][1])
    values = np.empty((len(rows), width))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: ragged rows, row {lineno} has {len(row)} cells, expected {width}"
            )
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at row {lineno}, column {c + 1}"
                ) from None

    if label_column is None:
        if bounds is not None:
            return Sample(values, bounds)
        return values

    if isinstance(label_column, int):
        col = label_column
        if not 0 <= col < width:
            raise DataFormatError(f"{path}: label column {col} out of range")
    else:
        if header is None or label_column not in header:
            raise DataFormatError(f"{path}: unknown label column {label_column!r}")
        col = header.index(label_column)

    raw = values[:, col]
    if not np.all(raw == np.round(raw)):
        raise DataFormatError(f"{path}: label column holds non-integer class ids")
    classes, ids = np.unique(raw.astype(int), return_inverse=True)
    inputs = np.delete(values, col, axis=1)
    if bounds is not None:
        Sample(inputs, bounds)
    return LabeledSample.from_ids(inputs, ids, len(classes))


def load_sparse_bow(path, dim: int, one_based: bool = False) -> LabeledSample:
    """Read ``<label> <idx>:<val> ...`` lines into a dense binary-labeled sample."""
    path = Path(path)
    offset = 1 if one_based else 0
    rows, labels = [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = int(parts[0])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: malformed label {parts[0]!r}") from None
            if label not in (0, 1):
                raise DataFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            row = np.zeros(dim)
            seen = set()
            for pair in parts[1:]:
                idx_s, sep, val_s = pair.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s) - offset, float(val_s)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: malformed pair {pair!r}") from None
                if idx < 0 or idx >= dim:
                    raise DataFormatError(
                        f"{path}:{lineno}: index {idx + offset} out of range for dim={dim}"
                    )
                if idx in seen:
                    raise DataFormatError(f"{path}:{lineno}: duplicate index {idx + offset}")
                seen.add(idx)
                row[idx] = val
            rows.append(row)
            labels.append(label)
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    return LabeledSample.from_ids(np.vstack(rows), labels, 2)


def write_sparse_bow(sample: LabeledSample, path, one_based: bool = False) -> None:
    """Inverse of :func:`load_sparse_bow`; values use ``repr`` so they round-trip exactly."""
    offset = 1 if one_based else 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for x, c in zip(sample.inputs, sample.class_ids):
            nz = np.flatnonzero(x)
            pairs = " ".join(f"{i + offset}:{float(x[i])!r}" for i in nz)
            fh.write(f"{int(c)} {pairs}".rstrip() + "\n")


# --------------------------------------------------------------------------- #
# synthetic tasks and resampling
# --------------------------------------------------------------------------- #

CLASS_CENTERS = np.array([[-1.0, 0.0], [1.0, 0.0]])
CLUSTER_STD = 0.5


def _draw_clusters(rng: np.random.Generator, n: int):
    ids = rng.integers(0, 2, size=n)
    x = CLASS_CENTERS[ids] + CLUSTER_STD * rng.standard_normal((n, 2))
    return x, ids


def _move(x: np.ndarray, kind: str, magnitude: float) -> np.ndarray:
    if kind == "shift":
        return x + magnitude
    c, s = np.cos(magnitude), np.sin(magnitude)
    return x @ np.array([[c, s], [-s, c]])


def make_synthetic_pair(
    kind: str,
    magnitude: float,
    n_source: int = 500,
    n_target: int = 500,
    n_test: int = 2000,
    seed: int = 0,
) -> DomainDataset:
    """Two Gaussian class clusters; the target is the source process shifted or rotated.

    ``shift`` adds ``magnitude`` to both coordinates, ``rotation`` rotates
    counter-clockwise about the origin by ``magnitude`` radians.
    """
    if kind not in ("shift", "rotation"):
        raise ValueError(f"kind must be 'shift' or 'rotation', got {kind!r}")
    if not magnitude >= 0:
        raise ValueError("magnitude must be >= 0")
    if min(n_source, n_target, n_test) < 1:
        raise ValueError("sample counts must be >= 1")
    src_rng, tgt_rng, test_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    xs, ys = _draw_clusters(src_rng, n_source)
    xt, _ = _draw_clusters(tgt_rng, n_target)
    xe, ye = _draw_clusters(test_rng, n_test)
    return DomainDataset(
        source=LabeledSample.from_ids(xs, ys, 2),
        target_unlabeled=_move(xt, kind, magnitude),
        target_test=LabeledSample.from_ids(_move(xe, kind, magnitude), ye, 2),
        name=f"{kind}:{magnitude:g}",
    )


def resample_source_balanced(source: LabeledSample, size: int, seed) -> LabeledSample:
    """Draw ``size`` rows whose per-class counts differ by at most one.

    Classes that must grow are drawn with replacement, others without.
    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    n_classes = source.n_classes
    if size < n_classes:
        raise ValueError(f"size={size} is smaller than the number of classes {n_classes}")
    ids = source.class_ids
    members = [np.flatnonzero(ids == c) for c in range(n_classes)]
    missing = [c for c, m in enumerate(members) if m.size == 0]
    if missing:
        raise ValueError(f"classes {missing} are absent from the source sample")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = np.full(n_classes, size // n_classes)
    counts[rng.permutation(n_classes)[: size % n_classes]] += 1

    picks = []
    for m, k in zip(members, counts):
        picks.append(rng.choice(m, size=k, replace=k > m.size))
    index = rng.permutation(np.concatenate(picks))
    return source.take(index)
