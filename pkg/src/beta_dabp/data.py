"""Labeled vector sets, synthetic domain-shift generators and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    pass


@dataclass
class LabeledVectorSet:
    """Feature matrix plus whatever label columns a domain carries.

    ``labels`` is supervision the training path may read (source domain).
    Ground truth for a target domain is kept in ``_true_labels`` and is read
    only through :func:`beta_dabp.diagnostics.ground_truth`.
    """

    features: np.ndarray
    domain: str = "source"
    labels: np.ndarray | None = None
    pseudo_labels: np.ndarray | None = None
    clean_prob: np.ndarray | None = None
    _true_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be an N x d matrix")
        if self.domain not in ("source", "target"):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        n = len(self.features)
        for name in ("labels", "_true_labels"):
            col = getattr(self, name)
            if col is not None:
                col = np.asarray(col, dtype=np.int64)
                if len(col) != n:
                    raise ValueError(f"{name.lstrip('_')} has {len(col)} rows, features have {n}")
                setattr(self, name, col)
        if self.pseudo_labels is not None:
            p = np.asarray(self.pseudo_labels, dtype=np.float64)
            if p.ndim != 2 or len(p) != n:
                raise ValueError("pseudo_labels must be N x K")
            if (p < 0).any() or np.abs(p.sum(axis=1) - 1).max() > 1e-9:
                raise ValueError("pseudo_labels rows must lie on the simplex")
            self.pseudo_labels = p
        if self.clean_prob is not None:
            c = np.asarray(self.clean_prob, dtype=np.float64)
            if len(c) != n or (c < 0).any() or (c > 1).any():
                raise ValueError("clean_prob must hold N values in [0, 1]")
            self.clean_prob = c

    def __len__(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def as_target(self) -> "LabeledVectorSet":
        """Copy with observed labels moved behind the ground-truth gate."""
        truth = self._true_labels if self._true_labels is not None else self.labels
        return LabeledVectorSet(self.features.copy(), "target", _true_labels=truth)

    def with_features(self, features: np.ndarray) -> "LabeledVectorSet":
        return LabeledVectorSet(
            features, self.domain, self.labels, self.pseudo_labels, self.clean_prob, self._true_labels
        )


def _make_set(x, y, domain) -> LabeledVectorSet:
    if domain == "source":
        return LabeledVectorSet(x, "source", labels=y, _true_labels=y)
    return LabeledVectorSet(x, "target", _true_labels=y)


def _balanced_counts(n: int, k: int) -> list[int]:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def gen_two_moons(n: int, noise_sigma: float, rotation_deg: float = 0.0, seed: int = 0, domain="source"):
    """Interleaved half circles, rotated about the origin.

    Class 0 lies on the upper unit arc centred at (0, 0); class 1 on the
    lower unit arc centred at (1, -0.5), i.e. the
    upper arc mirrored and offset by (1, -0.5).
    """
    if n < 2 or noise_sigma < 0:
        raise ValueError("need n >= 2 and noise_sigma >= 0")
    rng = np.random.default_rng(seed)
    n0, n1 = _balanced_counts(n, 2)
    t0 = rng.uniform(0, np.pi, n0)
    t1 = rng.uniform(0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1 - np.cos(t1), -0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    y = np.repeat([0, 1], [n0, n1])
    x = x + rng.normal(0.0, 1.0, x.shape) * noise_sigma
    theta = np.deg2rad(rotation_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    x = x @ rot.T
    order = rng.permutation(n)
    return _make_set(x[order], y[order], domain)


def gen_gaussian_shift(n: int, d: int, k: int, mean_shift: float, seed: int = 0, spread: float = 3.0):
    """K unit-variance blobs; target blobs are moved by ``mean_shift`` along a random direction per class."""
    if k < 2 or d < 1 or n < k:
        raise ValueError("need K >= 2, d >= 1 and n >= K")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, spread, (k, d))
    dirs = rng.normal(size=(k, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    counts = _balanced_counts(n, k)
    y = np.repeat(np.arange(k), counts)

    def draw(centres):
        x = centres[y] + rng.normal(size=(n, d))
        order = rng.permutation(n)
        return x[order], y[order]

    xs, ys = draw(means)
    xt, yt = draw(means + mean_shift * dirs)
    return _make_set(xs, ys, "source"), _make_set(xt, yt, "target")


def standardize(source: LabeledVectorSet, *others: LabeledVectorSet):
    """Scale every set with the source mean/std so target statistics never leak into the source model."""
    mu = source.features.mean(axis=0)
    sd = source.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = [s.with_features((s.features - mu) / sd) for s in (source, *others)]
    return out if others else out[0]


def two_moons_task(n: int = 400, noise_sigma: float = 0.1, rotation_deg: float = 30.0, seed: int = 17):
    """Standardized (source, target) pair: unrotated source moons, rotated target moons."""
    src = gen_two_moons(n, noise_sigma, 0.0, seed, "source")
    tgt = gen_two_moons(n, noise_sigma, rotation_deg, seed + 1, "target")
    return standardize(src, tgt)


def gaussian_shift_task(
    n: int = 600, d: int = 4, k: int = 3, mean_shift: float = 4.0, seed: int = 5, spread: float = 2.0
):
    """Standardized (source, target) blob pair; the defaults leave a source-trained model near 85% on the target."""
    src, tgt = gen_gaussian_shift(n, d, k, mean_shift, seed, spread)
    return standardize(src, tgt)


def load_csv(path, label_column: str | None = None, domain: str = "source") -> LabeledVectorSet:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column is not None and label_column not in header:
            raise ParseError(f"{path}: no column named {label_column!r}")
        li = header.index(label_column) if label_column is not None else None
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: line {lineno}: non-numeric value {cell!r} in column {header[j]!r}") from None
                if j == li:
                    if v != int(v):
                        raise ParseError(f"{path}: line {lineno}: label {cell!r} is not an integer")
                    labels.append(int(v))
                else:
                    vals.append(v)
            feats.append(vals)
    x = np.array(feats, dtype=np.float64).reshape(len(feats), len(header) - (li is not None))
    y = np.array(labels, dtype=np.int64) if li is not None else None
    if y is None:
        return LabeledVectorSet(x, domain)
    return _make_set(x, y, domain)


def save_csv(ds: LabeledVectorSet, path, include_labels: bool = True) -> Path:
    path = Path(path)
    y = ds.labels if ds.labels is not None else ds._true_labels
    header = [f"f{j}" for j in range(ds.dim)]
    with_labels = include_labels and y is not None
    if with_labels:
        header.append("label")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(ds.features):
            cells = [repr(float(v)) for v in row]
            if with_labels:
                cells.append(str(int(y[i])))
            w.writerow(cells)
    return path
