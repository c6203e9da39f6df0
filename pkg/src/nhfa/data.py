"""Synthetic multi-source data and file formats.

CSV layout: a header row of document ids (the first cell is ignored), then one
row per term with its label in the first column.  MatrixMarket files hold the
sparse M x N matrix and come with a sidecar label file, one term per line.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse

from .io import atomic_write


class DataFormatError(ValueError):
    pass


@dataclass
class SourceDataset:
    matrices: list
    row_labels: list
    names: list
    col_ids: list = field(default=None)

    def __post_init__(self):
        M = len(self.row_labels)
        for X in self.matrices:
            if X.shape[0] != M:
                raise DataFormatError("every matrix needs one row per label")
        if self.col_ids is None:
            self.col_ids = [[f"{n}_{i}" for i in range(X.shape[1])] for n, X in zip(self.names, self.matrices)]

    @property
    def J(self) -> int:
        return len(self.matrices)

    @property
    def M(self) -> int:
        return len(self.row_labels)


@dataclass
class SynthSpec:
    M: int = 100
    J: int = 2
    exclusive: int = 4
    shared: int = 4
    N: tuple = (100, 100)
    w_shape: float = 1.0
    w_rate: float = 0.5
    noise_rate: float = 0.1
    z_density: float = 0.5
    factor_density: float = 0.5
    noise_sd: float = 0.0
    model: str = "pgm"

    def validate(self):
        if self.M < 1 or self.J < 1:
            raise ValueError("M and J must be positive")
        if self.exclusive < 0 or self.shared < 0:
            raise ValueError("factor counts must be non-negative")
        if len(self.N) != self.J or any(n < 0 for n in self.N):
            raise ValueError("N must list one non-negative size per source")
        if self.w_shape <= 0 or self.w_rate <= 0 or self.noise_rate < 0 or self.noise_sd < 0:
            raise ValueError("weight and noise parameters must be positive")
        for p in (self.z_density, self.factor_density):
            if not 0.0 <= p <= 1.0:
                raise ValueError("densities must lie in [0, 1]")
        if self.model not in ("pgm", "ggm"):
            raise ValueError("model must be 'pgm' or 'ggm'")
        return self

    @property
    def K(self) -> int:
        return self.J * self.exclusive + self.shared

    def available(self, j: int) -> np.ndarray:
        """Factor indices usable by source j: its own block, then the shared block."""
        own = np.arange(j * self.exclusive, (j + 1) * self.exclusive)
        return np.concatenate([own, np.arange(self.J * self.exclusive, self.K)])


@dataclass
class GroundTruth:
    Phi: np.ndarray
    Z: list
    W: list


def synth_generate(spec: SynthSpec, rng) -> tuple[SourceDataset, GroundTruth]:
    spec.validate()
    K = spec.K
    Phi = (rng.uniform(size=(spec.M, K)) < spec.factor_density).astype(float)
    mats, Zs, Ws = [], [], []
    for j in range(spec.J):
        N = spec.N[j]
        Z = np.zeros((N, K), dtype=np.int8)
        av = spec.available(j)
        Z[:, av] = rng.uniform(size=(N, av.size)) < spec.z_density
        W = rng.gamma(spec.w_shape, spec.w_rate, size=(N, K))
        mean = Phi @ (Z * W).T
        if spec.model == "pgm":
            X = rng.poisson(mean + spec.noise_rate).astype(np.int64)
        else:
            X = mean + spec.noise_sd * rng.normal(size=mean.shape)
        mats.append(X)
        Zs.append(Z)
        Ws.append(W)
    labels = [f"t{i:04d}" for i in range(spec.M)]
    ds = SourceDataset(mats, labels, [f"source{j + 1}" for j in range(spec.J)])
    return ds, GroundTruth(Phi, Zs, Ws)


# --- writers -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if f.is_integer() and abs(f) < 2 ** 53:
        return str(int(f))
    return format(f, ".17g")


def write_csv(path, X, row_labels, col_ids):
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(col_ids))
        for lab, row in zip(row_labels, np.asarray(X)):
            w.writerow([lab] + [_fmt(v) for v in row])


def write_matrix_market(path, X, row_labels):
    X = np.asarray(X)
    with atomic_write(path, "wb") as fh:
        scipy.io.mmwrite(fh, scipy.sparse.coo_matrix(X), precision=17)
    with atomic_write(labels_path(path), "w") as fh:
        fh.write("\n".join(row_labels) + "\n")


def labels_path(mtx_path) -> str:
    return os.fspath(mtx_path) + ".labels"


# --- readers -------------------------------------------------------------------

def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    col_ids = rows[0][1:]
    labels, vals = [], []
    for r in rows[1:]:
        if not r:
            continue
        if len(r) != len(col_ids) + 1:
            raise DataFormatError(f"{path}: ragged row for label {r[0]!r}")
        labels.append(r[0])
        try:
            vals.append([float(v) for v in r[1:]])
        except ValueError as e:
            raise DataFormatError(f"{path}: {e}") from None
    X = np.array(vals, dtype=float).reshape(len(labels), len(col_ids))
    return X, labels, col_ids


def read_matrix_market(path, label_file=None):
    X = scipy.io.mmread(path)
    X = X.toarray() if scipy.sparse.issparse(X) else np.asarray(X)
    with open(label_file or labels_path(path)) as fh:
        labels = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(labels) != X.shape[0]:
        raise DataFormatError(f"{path}: {X.shape[0]} rows but {len(labels)} labels")
    return X.astype(float), labels, [f"d{i}" for i in range(X.shape[1])]


def merge_dictionaries(parts):
    """Re-index every ``(X, labels)`` onto the sorted union of labels (zero fill)."""
    union = sorted(set().union(*[set(lab) for _, lab in parts]))
    pos = {t: i for i, t in enumerate(union)}
    out = []
    for X, lab in parts:
        if len(set(lab)) != len(lab):
            raise DataFormatError("duplicate row labels within one source")
        Y = np.zeros((len(union), X.shape[1]), dtype=X.dtype)
        Y[[pos[t] for t in lab]] = X
        out.append(Y)
    return out, union


def load_sources(paths, fmt: str = "csv", mode: str = "counts", names=None) -> SourceDataset:
    if fmt not in ("csv", "mm"):
        raise ValueError("format must be 'csv' or 'mm'")
    if mode not in ("counts", "reals"):
        raise ValueError("mode must be 'counts' or 'reals'")
    parts, col_ids = [], []
    for p in paths:
        X, lab, cols = read_csv(p) if fmt == "csv" else read_matrix_market(p)
        if mode == "counts":
            if np.any(X < 0) or np.any(X != np.round(X)):
                raise DataFormatError(f"{p}: counts must be non-negative integers")
            X = X.astype(np.int64)
        parts.append((X, lab))
        col_ids.append(cols)
    mats, union = merge_dictionaries(parts)
    names = names or [os.path.splitext(os.path.basename(os.fspath(p)))[0] for p in paths]
    return SourceDataset(mats, union, list(names), col_ids)
