"""Synthetic classification sets and CSV ingestion."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

GENERATORS = ("gaussian-blobs", "concentric-rings", "spiral")


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    feature_names: List[str] = field(default_factory=list)
    class_names: List[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1

    @property
    def train(self):
        return self.X_train, self.y_train

    @property
    def test(self):
        return self.X_test, self.y_test


@dataclass
class DatasetSpec:
    name: str = "gaussian-blobs"
    n_classes: int = 3
    dim: int = 2
    n_train: int = 3000
    n_test: int = 1000
    noise: float = 1.0
    seed: int = 0


def _balanced_labels(n, k):
    return np.repeat(np.arange(k), [n // k + (1 if c < n % k else 0) for c in range(k)])


def _embed_plane(xy, dim, noise, rng):
    if dim == 1:
        return xy[:, :1]
    out = np.zeros((xy.shape[0], dim))
    out[:, :2] = xy
    if dim > 2:
        out[:, 2:] = noise * rng.normal(size=(xy.shape[0], dim - 2))
    return out


def _blobs(y, spec, rng):
    k = spec.n_classes
    angles = 2 * np.pi * np.arange(k) / k
    centers = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if spec.dim == 1:
        centers = 3.0 * np.arange(k, dtype=float)[:, None] * np.ones((1, 2))
    X = _embed_plane(centers[y], spec.dim, 0.0, rng)
    return X + spec.noise * rng.normal(size=X.shape)


def _rings(y, spec, rng):
    theta = rng.uniform(0, 2 * np.pi, size=y.shape[0])
    r = (y + 1.0) + spec.noise * rng.normal(size=y.shape[0])
    xy = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return _embed_plane(xy, spec.dim, spec.noise, rng)


def _spiral(y, spec, rng):
    t = rng.uniform(0.0, 1.0, size=y.shape[0])
    r = 4.0 * t
    theta = 4.0 * t + 2 * np.pi * y / spec.n_classes + spec.noise * rng.normal(size=y.shape[0])
    xy = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return _embed_plane(xy, spec.dim, spec.noise, rng)


def generate_dataset(spec) -> Dataset:
    """Deterministic labelled train/test sets from a builtin generator.

    Each split is class-balanced to within one sample and shuffled.
    """
    if isinstance(spec, dict):
        spec = DatasetSpec(**spec)
    makers = {"gaussian-blobs": _blobs, "concentric-rings": _rings, "spiral": _spiral}
    if spec.name not in makers:
        raise DatasetError(f"unknown generator {spec.name!r}; choose from {GENERATORS}")
    if spec.n_classes < 2 or spec.dim < 1 or spec.n_train < 1 or spec.n_test < 1 or spec.noise < 0:
        raise DatasetError(f"invalid dataset spec {spec}")
    rng = np.random.default_rng(spec.seed)
    splits = []
    for n in (spec.n_train, spec.n_test):
        y = rng.permutation(_balanced_labels(n, spec.n_classes))
        X = makers[spec.name](y, spec, rng)
        splits += [X, y]
    return Dataset(*splits, feature_names=[f"x{i}" for i in range(spec.dim)],
                   class_names=[str(i) for i in range(spec.n_classes)])


def load_csv_dataset(path, label_column: str, seed: int = 0, test_fraction: float = 0.2) -> Dataset:
    """Numeric CSV with a header row -> standardised 80/20 split.

    Labels may be any strings; they are mapped to sorted class indices.
    Standardisation uses train-split statistics only.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        features = [h for j, h in enumerate(header) if j != li]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                if j == li:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in feature column {header[j]!r}"
                    ) from None
            rows.append(vals)
            labels.append(row[li].strip())
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    classes = sorted(set(labels))
    y = np.array([classes.index(l) for l in labels], dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(len(y))
    n_test = int(round(test_fraction * len(y)))
    te, tr = perm[:n_test], perm[n_test:]
    mu = X[tr].mean(axis=0)
    sd = X[tr].std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    return Dataset(Z[tr], y[tr], Z[te], y[te], feature_names=features, class_names=classes)
