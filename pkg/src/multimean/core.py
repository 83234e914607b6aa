"""Data model: bags of samples, datasets, weight vectors and per-bag statistics."""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from multimean.exceptions import DegenerateCovariance, DimensionMismatch, InvalidArgument, InvalidBag
from multimean.kernels import LINEAR, GramSums, KernelSpec, gram_sums

SIMPLEX_TOL = 1e-9


class Bag:
    """One task's i.i.d. sample set.

    Parameters
    ----------
    samples : array_like, shape (N, d)
        One row per sample. One-dimensional input is read as N scalar samples.
        The stored copy is read-only.
    id : int, optional
    """

    __slots__ = ("id", "samples")

    def __init__(self, samples, id: int = 0):
        x = np.array(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidBag("a bag needs at least one sample row")
        if not np.all(np.isfinite(x)):
            raise InvalidBag("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "id", int(id))

    def __setattr__(self, name, value):
        raise AttributeError("Bag is immutable")

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def subset(self, rows) -> "Bag":
        return Bag(self.samples[rows], self.id)

    def __repr__(self):
        return f"Bag(id={self.id}, size={self.size}, dim={self.dim})"


class Dataset:
    """An ordered collection of bags sharing one sample dimension.

    ``kernel=None`` selects vector mode. In kernel mode the kernel width is
    resolved once from the pooled samples, and Gram sums are cached per bag
    pair (only scalars, never matrices).
    """

    def __init__(self, bags: Sequence[Bag], kernel: Optional[KernelSpec] = None):
        bags = [b if isinstance(b, Bag) else Bag(b, i) for i, b in enumerate(bags)]
        if not bags:
            raise InvalidBag("a dataset needs at least one bag")
        dims = {b.dim for b in bags}
        if len(dims) != 1:
            raise DimensionMismatch(f"bags have differing dimensions {sorted(dims)}")
        ids = [b.id for b in bags]
        if len(set(ids)) != len(ids):
            # positional ids when the caller did not label bags
            bags = [Bag(b.samples, i) for i, b in enumerate(bags)]
        self.bags = tuple(bags)
        if kernel is not None:
            kernel = kernel.resolve([b.samples for b in bags])
        self.kernel = kernel
        self._sums: Dict[Tuple[int, int], GramSums] = {}
        self._lock = threading.Lock()

    @property
    def mode(self) -> str:
        return "vector" if self.kernel is None else "kernel"

    @property
    def n_bags(self) -> int:
        return len(self.bags)

    @property
    def dim(self) -> int:
        return self.bags[0].dim

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.bags])

    def __len__(self):
        return len(self.bags)

    def __getitem__(self, k) -> Bag:
        return self.bags[k]

    def gram_sums(self, a: int, b: int) -> GramSums:
        """Cached kernel-block sums between bags ``a`` and ``b`` (linear kernel in vector mode)."""
        key = (a, b) if a <= b else (b, a)
        hit = self._sums.get(key)
        if hit is None:
            hit = gram_sums(self.bags[key[0]], self.bags[key[1]], self.kernel or LINEAR)
            with self._lock:
                self._sums.setdefault(key, hit)
        return hit

    def naive_means(self) -> np.ndarray:
        """B x d matrix of naive means."""
        return np.stack([naive_mean(b) for b in self.bags])


@dataclass(frozen=True)
class WeightVector:
    """A convex combination of the B naive means, built for one target bag."""

    weights: np.ndarray
    target: int

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or not 0 <= self.target < w.size:
            raise DimensionMismatch("target index out of range")
        if not is_simplex(w):
            raise InvalidArgument(f"weights are not on the simplex: sum={w.sum()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


def is_simplex(w, tol: float = SIMPLEX_TOL) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.all(np.isfinite(w)) and np.all(w >= 0.0) and abs(w.sum() - 1.0) <= tol)


@dataclass(frozen=True)
class TaskStats:
    """Per-bag scalar estimates.

    Attributes
    ----------
    s2_hat : float
        Naive-risk estimate, equal to ``z1 / size``.
    z1 : float
        Trace estimate of the covariance.
    z2 : float
        Schatten-2 norm estimate (square root of the clamped Tr Sigma^2 estimate).
    dstar_hat : float
        ``size * s2_hat / z2``, an estimate of the square root of the effective
        dimension (Tr S)^2 / Tr S^2; ``inf`` when ``z2 == 0`` and ``s2_hat > 0``.
    size : int
    de_hat : float, optional
        Estimated Tr S / ||S||_op, vector mode only.
    """

    s2_hat: float
    z1: float
    z2: float
    dstar_hat: float
    size: int
    de_hat: Optional[float] = None


def naive_mean(bag: Bag):
    """Arithmetic average of the bag's rows."""
    if bag.size < 1:
        raise InvalidBag("empty bag")
    return bag.samples.mean(axis=0)


def naive_coefficients(bag: Bag) -> np.ndarray:
    """Kernel-mode representation of the naive mean: weight 1/N on each sample."""
    return np.full(bag.size, 1.0 / bag.size)


def aggregate(dataset: Dataset, w) -> np.ndarray:
    """Convex combination of naive means.

    Returns the aggregated vector in vector mode. In kernel mode returns the
    per-sample coefficients ``w_k / N_k`` concatenated in bag order.
    """
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if weights.shape != (dataset.n_bags,):
        raise DimensionMismatch(f"expected {dataset.n_bags} weights, got {weights.shape}")
    if dataset.mode == "kernel":
        return np.concatenate([np.full(b.size, wk / b.size) for wk, b in zip(weights, dataset.bags)])
    return weights @ dataset.naive_means()


def effective_dims(covariance) -> Tuple[float, float]:
    """Return ``((Tr S)^2 / Tr S^2, Tr S / ||S||_op)`` of a PSD matrix."""
    s = np.atleast_2d(np.asarray(covariance, dtype=float))
    tr = float(np.trace(s))
    if not tr > 0:
        raise DegenerateCovariance("covariance has zero trace")
    tr2 = float(np.sum(s * s))
    op = float(np.linalg.eigvalsh((s + s.T) / 2.0)[-1])
    return tr * tr / tr2, tr / op


def load_csv(path, kernel: Optional[KernelSpec] = None) -> Dataset:
    """Read a dataset from CSV with a header and a leading ``bag_id`` column.

    Rows are grouped by ``bag_id`` in order of first appearance; bag ids are
    the group positions and the original labels are kept on ``dataset.labels``.
    """
    groups: Dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise InvalidBag("CSV needs a header with bag_id and at least one feature")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DimensionMismatch(f"line {lineno}: expected {len(header)} fields")
            try:
                groups.setdefault(row[0], []).append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise InvalidBag(f"line {lineno}: {exc}") from None
    if not groups:
        raise InvalidBag("CSV contains no samples")
    ds = Dataset([Bag(rows, i) for i, rows in enumerate(groups.values())], kernel)
    ds.labels = list(groups)
    return ds
