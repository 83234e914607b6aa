"""Kernel backend: kernel specs, Gram sums, unbiased MMD and kernel-mode estimators.

Only sums of kernel blocks are persisted (see :class:`multimean.core.Dataset`);
full Gram matrices are formed transiently, one bag pair at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Optional, Sequence

import numpy as np

from multimean import _backend
from multimean.exceptions import DimensionMismatch, InsufficientSamples, InvalidArgument

if TYPE_CHECKING:
    from multimean.core import Bag, Dataset

EXACT_CUTOFF = 30
DEFAULT_REPETITIONS = 100


@dataclass(frozen=True)
class KernelSpec:
    """A reproducing kernel on the sample space.

    Parameters
    ----------
    kind : {"linear", "gaussian"}
    width : float, optional
        Bandwidth of the Gaussian RBF ``exp(-|x - y|^2 / (2 width^2))``. Required
        when ``width_rule == "fixed"``.
    width_rule : {"fixed", "avg_feature_std"}
        ``avg_feature_std`` resolves the width from data with :meth:`resolve`.
    """

    kind: str = "linear"
    width: Optional[float] = None
    width_rule: str = "fixed"

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise InvalidArgument(f"unknown kernel kind {self.kind!r}")
        if self.width_rule not in ("fixed", "avg_feature_std"):
            raise InvalidArgument(f"unknown width rule {self.width_rule!r}")
        if self.kind == "gaussian" and self.width_rule == "fixed":
            if self.width is None or not self.width > 0:
                raise InvalidArgument("gaussian kernel with fixed width needs width > 0")

    @property
    def translation_invariant(self) -> bool:
        return self.kind == "gaussian"

    def resolve(self, samples: Sequence[np.ndarray]) -> "KernelSpec":
        """Return a fixed-width spec, pooling all ``samples`` for the width rule."""
        if self.kind == "linear" or self.width_rule == "fixed":
            return self
        pooled = np.concatenate([np.atleast_2d(s) for s in samples], axis=0)
        width = float(np.mean(np.std(pooled, axis=0, ddof=1)))
        if not width > 0:
            raise InvalidArgument("avg_feature_std rule produced a non-positive width")
        return KernelSpec("gaussian", width, "fixed")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width, "width_rule": self.width_rule}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d.get("kind", "linear"), d.get("width"), d.get("width_rule", "fixed"))


LINEAR = KernelSpec("linear")


def gram(x: np.ndarray, y: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """Kernel matrix ``K[i, j] = kernel(x_i, y_j)``."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"sample dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    inner = x @ y.T
    if kernel.kind == "linear":
        return inner
    if kernel.width_rule != "fixed":
        raise InvalidArgument("resolve the kernel width before evaluating the kernel")
    sq = np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * inner
    np.maximum(sq, 0.0, out=sq)
    if x is y:
        # the expansion above does not cancel exactly on the diagonal
        np.fill_diagonal(sq, 0.0)
    return np.exp(-sq / (2.0 * kernel.width**2))


class GramSums(NamedTuple):
    """Sufficient statistics of one kernel block.

    For two distinct bags there is no diagonal: ``diag`` is 0 and ``offdiag``
    equals ``full``.
    """

    full: float
    offdiag: float
    diag: float


def gram_sums(bag_a: "Bag", bag_b: "Bag", kernel: KernelSpec) -> GramSums:
    k = gram(bag_a.samples, bag_b.samples, kernel)
    full = float(k.sum())
    if bag_a is bag_b:
        diag = float(np.trace(k))
        return GramSums(full, full - diag, diag)
    return GramSums(full, full, 0.0)


def _unbiased_self(sums: GramSums, n: int) -> float:
    return sums.offdiag / (n * (n - 1))


def mmd2_from_sums(aa: GramSums, bb: GramSums, ab: GramSums, n_a: int, n_b: int) -> float:
    within = _unbiased_self(aa, n_a) + _unbiased_self(bb, n_b)
    return within - 2.0 * ab.full / (n_a * n_b)


def mmd2_unbiased(bag_a: "Bag", bag_b: "Bag", kernel: KernelSpec) -> float:
    """Unbiased estimate of the squared RKHS distance between the two embeddings.

    May be negative; a bag against itself gives ``-2 s2_hat``. Symmetric in its
    arguments bit for bit.
    """
    if bag_a.size < 2 or bag_b.size < 2:
        raise InsufficientSamples("unbiased MMD needs at least 2 samples per bag")
    first, second = sorted((bag_a, bag_b), key=id)
    return mmd2_from_sums(
        gram_sums(first, first, kernel),
        gram_sums(second, second, kernel),
        gram_sums(first, second, kernel),
        first.size,
        second.size,
    )


def s2_from_sums(sums: GramSums, n: int) -> float:
    # Equivalent to sum_{i != j} (k_ii - 2 k_ij + k_jj) / (2 N^2 (N - 1)).
    return max(sums.diag / n**2 - sums.offdiag / (n**2 * (n - 1)), 0.0)


def s2_kernel(bag: "Bag", kernel: KernelSpec) -> float:
    if bag.size < 2:
        raise InsufficientSamples("naive-risk estimate needs at least 2 samples")
    return s2_from_sums(gram_sums(bag, bag, kernel), bag.size)


def tr_sigma2_exact_gram(k: np.ndarray) -> float:
    """Unbiased Tr Sigma^2 from an N x N Gram matrix, no clamping.

    The three distinct-index sums are obtained by inclusion-exclusion on the
    Gram matrix with its diagonal removed, which gives the same value as the
    quadruple enumeration in O(N^2).
    """
    n = k.shape[0]
    if n < 4:
        raise InsufficientSamples("Tr Sigma^2 estimate needs at least 4 samples")
    k0 = k - np.diag(np.diag(k))
    t1 = float(np.sum(k0 * k0))
    rows = k0.sum(axis=1)
    t2 = float(np.dot(rows, rows)) - t1
    s = float(rows.sum())
    t3 = s * s - 2.0 * t1 - 4.0 * t2
    return (
        t1 / (n * (n - 1))
        - 2.0 * t2 / (n * (n - 1) * (n - 2))
        + t3 / (n * (n - 1) * (n - 2) * (n - 3))
    )


def tr_sigma2_subsampled_gram(
    k: np.ndarray, r: int = DEFAULT_REPETITIONS, rng: Optional[np.random.Generator] = None
) -> float:
    """Subsampling estimate of Tr Sigma^2 from a Gram matrix.

    The pair term is computed exactly; the triple and quadruple terms are
    averaged over ``r`` draws of four distinct indices. Clamped at 0.
    """
    n = k.shape[0]
    if n < 4:
        raise InsufficientSamples("Tr Sigma^2 estimate needs at least 4 samples")
    if r < 1:
        raise InvalidArgument("r must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    t1 = float(np.sum(k * k) - np.sum(np.diag(k) ** 2))
    idx = draw_distinct_quadruples(n, r, rng)
    t2, t3 = _backend.subsample_terms(np.ascontiguousarray(k, dtype=np.float64), idx)
    return max(t1 / (n * (n - 1)) - 2.0 * t2 / r + t3 / r, 0.0)


def draw_distinct_quadruples(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """``r`` rows of 4 distinct indices in ``[0, n)``, uniform without replacement."""
    if n < 4:
        raise InsufficientSamples("need at least 4 samples to draw distinct quadruples")
    out = rng.integers(0, n, size=(r, 4), dtype=np.int64)
    # rejection: redraw rows with a repeated index; accepted rows are uniform
    # over ordered quadruples of distinct indices
    while True:
        srt = np.sort(out, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            return out
        out[bad] = rng.integers(0, n, size=(bad.size, 4), dtype=np.int64)


def tr_sigma2_subsampled(
    bag: "Bag", kernel: KernelSpec, r: int = DEFAULT_REPETITIONS, rng=None
) -> float:
    return tr_sigma2_subsampled_gram(gram(bag.samples, bag.samples, kernel), r, rng)


def tr_sigma2_kernel(
    bag: "Bag",
    kernel: KernelSpec,
    exact_cutoff: Optional[int] = EXACT_CUTOFF,
    r: int = DEFAULT_REPETITIONS,
    rng=None,
) -> float:
    """Tr Sigma^2 in feature space, exact up to ``exact_cutoff`` samples, else subsampled.

    ``exact_cutoff=None`` always uses the exact estimator. Result clamped at 0.
    """
    k = gram(bag.samples, bag.samples, kernel)
    if exact_cutoff is None or bag.size <= exact_cutoff:
        return max(tr_sigma2_exact_gram(k), 0.0)
    return tr_sigma2_subsampled_gram(k, r, rng)


def row_means(target: "Bag", others: Sequence["Bag"], kernel: KernelSpec) -> np.ndarray:
    """``R[i, l] = mean_j kernel(target_i, others[l]_j)``, shape ``(N_target, len(others))``."""
    sizes = [o.size for o in others]
    block = gram(target.samples, np.concatenate([o.samples for o in others], axis=0), kernel)
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return np.add.reduceat(block, edges[:-1], axis=1) / np.asarray(sizes, dtype=float)


def q_hat_kernel(
    target: "Bag", others: Sequence["Bag"], kernel: KernelSpec, less_biased: Optional[bool] = None
) -> np.ndarray:
    """Deviation penalties q-hat for every bag in ``others`` relative to ``target``.

    ``less_biased`` defaults to ``kernel.translation_invariant``. The target's
    own entry is whatever the formula gives; callers zero it. Clamped at 0.
    """
    n = target.size
    if n < 2:
        raise InsufficientSamples("q-hat needs at least 2 samples in the target bag")
    if less_biased is None:
        less_biased = kernel.translation_invariant
    if less_biased and n < 3:
        raise InsufficientSamples("less-biased q-hat needs at least 3 samples")
    r_other = row_means(target, others, kernel)
    r_self = row_means(target, [target], kernel)[:, 0]
    if less_biased:
        r_self = r_self * n / (n - 2)
    diff = r_other - r_self[:, None]
    q = np.sum(diff * diff, axis=0) / (n - 1) - (n / (n - 1)) * diff.mean(axis=0) ** 2
    return np.maximum(q, 0.0)


def kernel_error_metric(
    weights: np.ndarray,
    estimation: Sequence["Bag"],
    proxy: "Bag",
    kernel: KernelSpec,
) -> float:
    """Squared-MMD error of the aggregate ``sum_l w_l mu_l`` against a proxy bag.

    Weighted Z-Z double sum, minus twice the Z-proxy cross term, plus the
    unbiased proxy self-term.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(estimation),):
        raise DimensionMismatch("one weight per estimation bag required")
    m = proxy.size
    if m < 2:
        raise InsufficientSamples("proxy bag needs at least 2 samples")
    ref = _support(w)
    g = np.empty((len(ref), len(ref)))
    for a, ia in enumerate(ref):
        for b in range(a, len(ref)):
            ib = ref[b]
            val = gram(estimation[ia].samples, estimation[ib].samples, kernel).mean()
            g[a, b] = g[b, a] = val
    c = np.array([gram(estimation[i].samples, proxy.samples, kernel).mean() for i in ref])
    pp = gram(proxy.samples, proxy.samples, kernel)
    self_term = (pp.sum() - np.trace(pp)) / (m * (m - 1))
    wr = w[ref]
    return float(wr @ g @ wr - 2.0 * wr @ c + self_term)


def _support(w: np.ndarray) -> list:
    return [int(i) for i in np.flatnonzero(w != 0.0)]


class ErrorComponents(NamedTuple):
    """Terms of the kernel error metric for all (weights, target) pairs of one trial.

    ``g[l, m]`` is the mean kernel between estimation bags ``l`` and ``m``,
    ``c[l, k]`` the mean kernel between estimation bag ``l`` and proxy ``k``,
    and ``p[k]`` the unbiased within-proxy mean.
    """

    g: np.ndarray
    c: np.ndarray
    p: np.ndarray

    def error(self, weights: np.ndarray, k: int) -> float:
        w = np.asarray(weights, dtype=float)
        return float(w @ self.g @ w - 2.0 * w @ self.c[:, k] + self.p[k])


def error_components(dataset: "Dataset", proxies: Sequence["Bag"]) -> ErrorComponents:
    kernel = dataset.kernel or LINEAR
    b = dataset.n_bags
    n = dataset.sizes.astype(float)
    g = np.empty((b, b))
    for i in range(b):
        for j in range(i, b):
            g[i, j] = g[j, i] = dataset.gram_sums(i, j).full / (n[i] * n[j])
    c = np.empty((b, len(proxies)))
    p = np.empty(len(proxies))
    for k, y in enumerate(proxies):
        m = y.size
        if m < 2:
            raise InsufficientSamples("proxy bag needs at least 2 samples")
        c[:, k] = row_means(y, dataset.bags, kernel).mean(axis=0)
        yy = gram(y.samples, y.samples, kernel)
        p[k] = (yy.sum() - np.trace(yy)) / (m * (m - 1))
    return ErrorComponents(g, c, p)
