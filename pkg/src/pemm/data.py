"""Datasets: synthetic Gaussian blobs, CIFAR-10 binary batches and numeric CSV."""
import csv
import os
from dataclasses import dataclass, replace

import numpy as np

CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072


class ParseError(ValueError):
    def __init__(self, msg, path=None, offset=None, row=None):
        self.path = path
        self.offset = offset
        self.row = row
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        if row is not None:
            where.append(f"row {row}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    K: int
    clean_labels: np.ndarray = None
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(f"inconsistent shapes {self.features.shape} / {self.labels.shape}")
        for name in ("labels", "clean_labels"):
            lab = getattr(self, name)
            if lab is None:
                continue
            lab = np.asarray(lab, dtype=np.int64)
            setattr(self, name, lab)
            if lab.shape != self.labels.shape:
                raise ValueError(f"{name} length mismatch")
            if lab.size and (lab.min() < 0 or lab.max() >= self.K):
                raise ValueError(f"{name} outside [0, {self.K})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return LabeledDataset(self.features[idx], self.labels[idx], self.K, clean, self.provenance)

    def with_labels(self, labels, keep_clean=True):
        clean = self.labels if keep_clean and self.clean_labels is None else self.clean_labels
        return replace(self, labels=np.asarray(labels), clean_labels=clean)


def make_blobs(K, d, per_class, center_scale=1.0, stddev=1.0, seed=0):
    """Isotropic Gaussian clusters around seeded class means.

    Means are ``center_scale`` times standard-normal draws; samples are
    ordered class by class.
    """
    if K < 2 or d < 2:
        raise ValueError("make_blobs needs K >= 2 and d >= 2")
    if stddev < 0:
        raise ValueError("stddev must be non-negative")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(K, d)) * center_scale
    labels = np.repeat(np.arange(K), per_class)
    X = means[labels] + rng.normal(size=(K * per_class, d)) * stddev
    return LabeledDataset(X, labels, K, provenance=f"blobs(K={K},d={d},n={per_class},seed={seed})")


def stratified_split(ds, per_class_first, seed=0):
    """Split each class into ``per_class_first`` samples and the remainder."""
    rng = np.random.default_rng(seed)
    first, rest = [], []
    for k in range(ds.K):
        idx = rng.permutation(np.flatnonzero(ds.labels == k))
        first.append(idx[:per_class_first])
        rest.append(idx[per_class_first:])
    return ds.subset(np.sort(np.concatenate(first))), ds.subset(np.sort(np.concatenate(rest)))


def load_cifar10_binary(paths, flatten=True):
    """Parse CIFAR-10 binary batches (1 label byte + 3072 planar RGB bytes per record).

    Pixels are scaled to [0, 1]. Files are read in the given order.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    feats, labels = [], []
    for path in paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) % CIFAR_RECORD:
            whole = len(raw) // CIFAR_RECORD
            raise ParseError("truncated CIFAR-10 record", path, offset=whole * CIFAR_RECORD)
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        bad = np.flatnonzero(rec[:, 0] > 9)
        if bad.size:
            raise ParseError(f"label byte {rec[bad[0], 0]} > 9", path, offset=int(bad[0]) * CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        feats.append(rec[:, 1:].astype(np.float64) / 255.0)
    X = np.concatenate(feats) if feats else np.zeros((0, CIFAR_PIXELS))
    y = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    if not flatten:
        X = X.reshape(-1, 3, 32, 32)
        return X, y
    return LabeledDataset(X, y, 10, provenance="cifar10:" + ",".join(str(p) for p in paths))


def write_cifar10_binary(path, images, labels):
    """Write records in the CIFAR-10 binary layout.

    ``images`` are uint8 arrays of shape (N, 3072) or (N, 3, 32, 32), or
    floats in [0, 1] which are rounded back to bytes.
    """
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.rint(np.asarray(images, dtype=np.float64) * 255.0).astype(np.uint8)
    images = images.reshape(images.shape[0], CIFAR_PIXELS)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    with open(path, "wb") as fh:
        fh.write(np.hstack([labels, images]).tobytes())


def load_csv(path, label_column=None, K=None, header=True):
    """Numeric CSV with one integer label column; remaining columns are features.

    ``label_column`` is an index or, with a header, a column name; by default
    the column named ``label`` if there is one, else the last column. A header
    column named ``clean_label`` is read into ``clean_labels``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    first = 1 if header else 0
    if len(rows) <= first:
        raise ParseError("empty CSV (no header/rows)", path)
    width = len(rows[first])
    names = rows[0] if header else []
    if label_column is None:
        label_column = "label" if "label" in names else -1
    if isinstance(label_column, str):
        if label_column not in names:
            raise ParseError(f"no column named {label_column!r}", path, row=1)
        label_column = names.index(label_column)
    label_column %= width
    clean_column = names.index("clean_label") if "clean_label" in names else None
    feat_cols = [j for j in range(width) if j not in (label_column, clean_column)]

    def as_label(val, i):
        if val != int(val) or val < 0 or (K is not None and val >= K):
            raise ParseError(f"label {val:g} outside [0, {K})", path, row=i)
        return int(val)

    feats, labels, clean = [], [], []
    for i, row in enumerate(rows[first:], start=first + 1):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"ragged row: {len(row)} cells, expected {width}", path, row=i)
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"non-numeric cell: {exc}", path, row=i) from None
        feats.append([vals[j] for j in feat_cols])
        labels.append(as_label(vals[label_column], i))
        if clean_column is not None:
            clean.append(as_label(vals[clean_column], i))
    if not labels:
        raise ParseError("CSV has no data rows", path)
    K = max(labels + clean) + 1 if K is None else K
    return LabeledDataset(np.array(feats).reshape(len(labels), len(feat_cols)), np.array(labels), K,
                          np.array(clean) if clean_column is not None else None,
                          provenance=f"csv:{path}")


def save_csv(ds, path):
    """Features then a trailing ``label`` column (and ``clean_label`` if present)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = [f"x{i}" for i in range(ds.dim)] + ["label"]
        has_clean = ds.clean_labels is not None
        if has_clean:
            head.append("clean_label")
        w.writerow(head)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
            if has_clean:
                row.append(int(ds.clean_labels[i]))
            w.writerow(row)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray


def standardize(ds, stats=None, floor=1e-8):
    """Per-feature z-scoring; pass the training stats when transforming test data."""
    if stats is None:
        stats = Standardizer(ds.features.mean(axis=0), np.maximum(ds.features.std(axis=0), floor))
    elif stats.mean.shape != (ds.dim,):
        raise ValueError(f"stats dimension {stats.mean.shape} does not match data {ds.dim}")
    X = (ds.features - stats.mean) / stats.std
    return replace(ds, features=X), stats
