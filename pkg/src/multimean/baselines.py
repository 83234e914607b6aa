"""Reference estimators: James-Stein with positive part, R-KMSE and MTA-const."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from multimean import kernels as kx
from multimean.core import Bag, Dataset, TaskStats
from multimean.exceptions import InsufficientSamples, InvalidArgument, InvalidDimension, SolveFailure


def js_factor(mean, variance: float, dim: float, shrink_target=None) -> float:
    """Positive-part shrinkage factor ``(1 - variance (dim - 2) / |mean - target|^2)_+``.

    Returns 0 when the mean coincides with the shrinkage target.
    """
    if dim < 3:
        raise InvalidDimension("James-Stein shrinkage needs dimension >= 3")
    if not variance >= 0:
        raise InvalidArgument("variance must be >= 0")
    mean = np.asarray(mean, dtype=float)
    diff = mean if shrink_target is None else mean - np.asarray(shrink_target, dtype=float)
    norm2 = float(np.dot(diff.ravel(), diff.ravel()))
    if norm2 == 0:
        return 0.0
    return max(1.0 - variance * (dim - 2) / norm2, 0.0)


def james_stein_plus(mean, variance: float, dim: float, shrink_target=None) -> np.ndarray:
    """Shrink ``mean`` toward ``shrink_target`` (0 by default).

    For isotropic noise ``variance = sigma^2 / N`` and ``dim = d``; otherwise
    pass ``||S||_op / N`` and the effective dimension ``Tr S / ||S||_op``.
    """
    mean = np.asarray(mean, dtype=float)
    target = np.zeros_like(mean) if shrink_target is None else np.asarray(shrink_target, dtype=float)
    f = js_factor(mean, variance, dim, target)
    return target + f * (mean - target)


def r_kmse_lambda(bag: Bag, kernel: Optional[kx.KernelSpec] = None) -> float:
    """Shrinkage parameter ``(rho_d - rho) / ((1/N - 1) rho_d + (N - 1) rho)``.

    ``rho_d`` is the mean diagonal kernel value and ``rho`` the mean of the
    full Gram matrix. A vanishing denominator gives 0. Values outside [0, 1]
    are returned unchanged.
    """
    n = bag.size
    if n < 2:
        raise InsufficientSamples("R-KMSE needs at least 2 samples")
    sums = kx.gram_sums(bag, bag, kernel or kx.LINEAR)
    rho_d = sums.diag / n
    rho = sums.full / n**2
    denom = (1.0 / n - 1.0) * rho_d + (n - 1.0) * rho
    if denom == 0:
        return 0.0
    return (rho_d - rho) / denom


def r_kmse(bag: Bag, kernel: Optional[kx.KernelSpec] = None) -> float:
    """Own-bag weight ``1 - lam / (1 + lam)``; the rest shrinks toward the origin."""
    lam = r_kmse_lambda(bag, kernel)
    if lam == -1.0:
        raise SolveFailure("R-KMSE shrinkage parameter equals -1")
    return 1.0 - lam / (1.0 + lam)


@dataclass(frozen=True)
class MtaParams:
    """``gamma`` scales the Laplacian term.

    ``similarity`` picks the constant edge weight from the mean pairwise squared
    distance ``D`` between naive means: ``"inverse"`` uses ``a = 2 / D`` (the
    original constant-similarity MTA, dimensionless with the risk factor),
    ``"distance"`` uses ``a = D``.
    """

    gamma: float = 1.0
    similarity: str = "inverse"

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidArgument("gamma must be >= 0")
        if self.similarity not in ("inverse", "distance"):
            raise InvalidArgument(f"unknown similarity {self.similarity!r}")


def mta_similarity(dist: float, params: MtaParams) -> float:
    if params.similarity == "distance":
        return dist
    # identical naive means: unbounded similarity, i.e. full pooling
    return 2.0 / dist if dist > 0 else math.inf


def mean_pairwise_distance(dataset: Dataset) -> float:
    """Average over ordered pairs ``k != l`` of ``|m_k - m_l|^2`` between naive means."""
    b = dataset.n_bags
    if b < 2:
        raise InvalidArgument("need at least two bags")
    if dataset.kernel is None:
        m = dataset.naive_means()
        sq = np.sum(m * m, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * m @ m.T
    else:
        n = dataset.sizes.astype(float)
        g = np.empty((b, b))
        for i in range(b):
            for j in range(i, b):
                g[i, j] = g[j, i] = dataset.gram_sums(i, j).full / (n[i] * n[j])
        dg = np.diag(g)
        d2 = dg[:, None] + dg[None, :] - 2.0 * g
    d2 = np.maximum(d2, 0.0)
    np.fill_diagonal(d2, 0.0)
    return float(d2.sum() / (b * (b - 1)))


def mta_matrix(s2: Sequence[float], a: float, gamma: float) -> np.ndarray:
    """Row-stochastic ``(I + gamma/B S^2 L)^-1`` for the complete graph with weight ``a``.

    Negative entries are set to 0 and rows renormalized.
    """
    s2 = np.asarray(s2, dtype=float)
    b = s2.size
    if math.isinf(a) and gamma > 0:
        # limit of the inverse: every row pools with inverse-risk weights
        if np.any(~(s2 > 0)):
            raise SolveFailure("MTA pooling limit needs positive risks")
        return np.tile((1.0 / s2) / np.sum(1.0 / s2), (b, 1))
    lap = a * (b * np.eye(b) - np.ones((b, b)))
    m = np.eye(b) + (gamma / b) * (s2[:, None] * lap)
    try:
        w = np.linalg.solve(m, np.eye(b))
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"MTA system is singular: {exc}") from None
    if not np.all(np.isfinite(w)):
        raise SolveFailure("MTA solve produced non-finite weights")
    w = np.maximum(w, 0.0)
    rows = w.sum(axis=1, keepdims=True)
    if np.any(rows <= 0):
        raise SolveFailure("MTA row has no positive weight")
    return w / rows


def mta_const(dataset: Dataset, stats: Sequence[TaskStats], params: MtaParams = MtaParams()) -> np.ndarray:
    """B x B weight matrix, row ``k`` giving the weights for target ``k``."""
    if dataset.n_bags < 2:
        raise InvalidArgument("MTA-const needs at least two bags")
    a = mta_similarity(mean_pairwise_distance(dataset), params)
    return mta_matrix([s.s2_hat for s in stats], a, params.gamma)
