"""Scalar statistics consumed by the selection and weighting rules.

Every estimator takes an optional ``kernel``; ``None`` means vector mode, where
closed forms over the sample matrix are used instead of Gram sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from multimean import kernels as kx
from multimean.core import Bag, Dataset, TaskStats
from multimean.exceptions import BlockTooSmall, InsufficientSamples, InvalidArgument


def _require(bag: Bag, n: int, what: str):
    if bag.size < n:
        raise InsufficientSamples(f"{what} needs at least {n} samples, bag {bag.id} has {bag.size}")


def _centered(bag: Bag) -> np.ndarray:
    return bag.samples - bag.samples.mean(axis=0)


def s2_hat(bag: Bag, kernel: Optional[kx.KernelSpec] = None) -> float:
    """Unbiased estimate of the naive risk Tr S / N."""
    _require(bag, 2, "naive-risk estimate")
    if kernel is not None:
        return kx.s2_kernel(bag, kernel)
    n = bag.size
    return float(np.sum(_centered(bag) ** 2)) / (n * (n - 1))


def z1_trace(bag: Bag, kernel: Optional[kx.KernelSpec] = None) -> float:
    """Unbiased estimate of Tr S; equals ``N * s2_hat``."""
    return bag.size * s2_hat(bag, kernel)


def tr_sigma2_hat(bag: Bag) -> float:
    """Unbiased estimate of Tr S^2 from centred data, unclamped (vector mode).

    Uses the covariance identity: with Sc the unbiased sample covariance and
    r_i the squared norms of the centred rows,
    ``(N-1)^2/(N(N-3)) Tr Sc^2 - sum r_i^2/((N-2)(N-3)) + (N-1)/(N(N-2)(N-3)) (Tr Sc)^2``.
    """
    _require(bag, 4, "Tr Sigma^2 estimate")
    n = bag.size
    xc = _centered(bag)
    # Tr Sc^2 through the N x N Gram when that is the smaller side
    g = xc @ xc.T if n <= bag.dim else None
    if g is not None:
        tr_sc2 = float(np.sum(g * g)) / (n - 1) ** 2
        r = np.diag(g)
    else:
        sc = xc.T @ xc
        tr_sc2 = float(np.sum(sc * sc)) / (n - 1) ** 2
        r = np.einsum("ij,ij->i", xc, xc)
    tr_sc = float(r.sum()) / (n - 1)
    return (
        (n - 1) ** 2 / (n * (n - 3)) * tr_sc2
        - float(np.dot(r, r)) / ((n - 2) * (n - 3))
        + (n - 1) / (n * (n - 2) * (n - 3)) * tr_sc**2
    )


def z2_squared(
    bag: Bag,
    kernel: Optional[kx.KernelSpec] = None,
    exact_cutoff: Optional[int] = kx.EXACT_CUTOFF,
    r: int = kx.DEFAULT_REPETITIONS,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Tr S^2 estimate before clamping (kernel subsampler clamps internally)."""
    _require(bag, 4, "Tr Sigma^2 estimate")
    if kernel is None:
        return tr_sigma2_hat(bag)
    k = kx.gram(bag.samples, bag.samples, kernel)
    if exact_cutoff is None or bag.size <= exact_cutoff:
        return kx.tr_sigma2_exact_gram(k)
    return kx.tr_sigma2_subsampled_gram(k, r, rng)


def z2_schatten(bag: Bag, kernel: Optional[kx.KernelSpec] = None, **kw) -> float:
    """Estimate of ||S||_2 = sqrt(Tr S^2); negative squared estimates clamp to 0."""
    return math.sqrt(max(z2_squared(bag, kernel, **kw), 0.0))


def u_distance(bag_a: Bag, bag_b: Bag, kernel: Optional[kx.KernelSpec] = None) -> float:
    """Unbiased estimate of the squared distance between the two means.

    May be negative. In vector mode this is ``|m_a - m_b|^2 - s2_a - s2_b``,
    which is the pairwise inner-product U-statistic rearranged.
    """
    _require(bag_a, 2, "U-statistic")
    _require(bag_b, 2, "U-statistic")
    if kernel is not None:
        return kx.mmd2_unbiased(bag_a, bag_b, kernel)
    diff = bag_a.samples.mean(axis=0) - bag_b.samples.mean(axis=0)
    return float(np.dot(diff, diff)) - (s2_hat(bag_a) + s2_hat(bag_b))


def u_row(dataset: Dataset, target: int) -> np.ndarray:
    """``U(target, l)`` for every bag ``l``, from cached sums in kernel mode."""
    b = dataset.n_bags
    out = np.empty(b)
    if dataset.kernel is None:
        means = dataset.naive_means()
        s2 = np.array([s2_hat(bag) for bag in dataset.bags])
        diff = means - means[target]
        out[:] = np.einsum("ij,ij->i", diff, diff) - (s2[target] + s2)
        return out
    n = dataset.sizes
    if n[target] < 2 or np.any(n < 2):
        raise InsufficientSamples("U-statistic needs at least 2 samples per bag")
    tt = dataset.gram_sums(target, target)
    for l in range(b):
        ll = dataset.gram_sums(l, l)
        out[l] = kx.mmd2_from_sums(tt, ll, dataset.gram_sums(target, l), n[target], n[l])
    return out


@dataclass(frozen=True)
class MobConfig:
    """Median-of-blocks configuration.

    Parameters
    ----------
    blocks : int
        Number of blocks ``b``; with ``rule="from_confidence"`` it is ``ceil(u)``.
    shuffle : bool
        Shuffle each operand's rows (with the supplied RNG) before blocking.
    """

    blocks: int = 1
    shuffle: bool = True

    def __post_init__(self):
        if int(self.blocks) != self.blocks or self.blocks < 1:
            raise InvalidArgument("blocks must be a positive integer")

    @classmethod
    def from_confidence(cls, u: float, shuffle: bool = True) -> "MobConfig":
        if not u > 0:
            raise InvalidArgument("u must be positive")
        return cls(int(math.ceil(u)), shuffle)


_MIN_BLOCK = {"u_distance": 2, "z1_trace": 2, "z2_squared": 4}


def _statistic(name: str) -> Callable:
    table = {"u_distance": u_distance, "z1_trace": z1_trace, "z2_squared": z2_squared}
    try:
        return table[name]
    except KeyError:
        raise InvalidArgument(f"unknown MOB statistic {name!r}") from None


def median_of_blocks(
    statistic: Union[str, Callable],
    bags: Sequence[Bag],
    cfg: MobConfig,
    kernel: Optional[kx.KernelSpec] = None,
    rng: Optional[np.random.Generator] = None,
    min_block: Optional[int] = None,
) -> float:
    """Median over aligned sample blocks of a statistic of one or two bags.

    Each operand is split into ``cfg.blocks`` contiguous blocks of sizes
    ``floor(N/b)`` or ``ceil(N/b)``; block ``j`` of every operand feeds the
    ``j``-th evaluation. Even block counts return the lower median.
    """
    if isinstance(statistic, str):
        min_block = _MIN_BLOCK.get(statistic) if min_block is None else min_block
        statistic = _statistic(statistic)
    min_block = 1 if min_block is None else min_block
    b = cfg.blocks
    for bag in bags:
        if bag.size // b < min_block:
            raise BlockTooSmall(f"bag {bag.id}: {bag.size} samples cannot fill {b} blocks of {min_block}")
    if b == 1:
        return float(statistic(*bags, kernel=kernel))
    parts = []
    for bag in bags:
        rows = np.arange(bag.size)
        if cfg.shuffle:
            rng = np.random.default_rng() if rng is None else rng
            rows = rng.permutation(bag.size)
        parts.append(np.array_split(rows, b))
    values = sorted(
        float(statistic(*[bag.subset(p[j]) for bag, p in zip(bags, parts)], kernel=kernel))
        for j in range(b)
    )
    return values[(b - 1) // 2]


mob_wrap = median_of_blocks


def compute_stats(
    dataset: Dataset,
    k: int,
    exact_cutoff: Optional[int] = kx.EXACT_CUTOFF,
    r: int = kx.DEFAULT_REPETITIONS,
    rng: Optional[np.random.Generator] = None,
    with_de: bool = False,
) -> TaskStats:
    """All per-bag scalars for bag ``k``; needs at least 4 samples."""
    bag = dataset.bags[k]
    _require(bag, 4, "task statistics")
    n = bag.size
    if dataset.kernel is None:
        s2 = s2_hat(bag)
    else:
        s2 = kx.s2_from_sums(dataset.gram_sums(k, k), n)
    z1 = n * s2
    z2 = math.sqrt(max(z2_squared(bag, dataset.kernel, exact_cutoff, r, rng), 0.0))
    if z2 > 0:
        dstar = z1 / z2
    else:
        dstar = math.inf if z1 > 0 else 0.0
    de = None
    if with_de and dataset.kernel is None and z1 > 0:
        xc = _centered(bag)
        op = float(np.linalg.eigvalsh(xc @ xc.T)[-1]) / (n - 1)
        de = z1 / op
    return TaskStats(s2, z1, z2, dstar, n, de)


def compute_all_stats(dataset: Dataset, **kw) -> list:
    return [compute_stats(dataset, k, **kw) for k in range(dataset.n_bags)]
