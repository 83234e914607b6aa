"""Synthetic scenarios and CSV ingestion for the experiment runner.

Every generator returns a :class:`Scenario`: estimation bags, optional proxy
bags (kernel experiments), the true means where known, and extra reference
quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import nnls

from multimean.core import Bag, load_csv
from multimean.exceptions import ConfigError

DEFAULT_DIMS = (10, 25, 50, 100, 200, 400)


@dataclass
class Scenario:
    bags: List[Bag]
    true_means: Optional[np.ndarray] = None
    proxies: Optional[List[Bag]] = None
    true_cov: Optional[List[np.ndarray]] = None
    info: Dict[str, float] = field(default_factory=dict)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _rotated_gaussians(means, sizes, proxy_size, rng, base=(1.0, 10.0)):
    base = np.diag(base)
    bags, proxies, covs = [], [], []
    for k, (m, n) in enumerate(zip(means, sizes)):
        r = rotation(rng.uniform(-math.pi / 4, math.pi / 4))
        cov = r @ base @ r.T
        chol = np.linalg.cholesky(cov)
        bags.append(Bag(m + rng.standard_normal((n, 2)) @ chol.T, k))
        if proxy_size:
            proxies.append(Bag(m + rng.standard_normal((proxy_size, 2)) @ chol.T, k))
        covs.append(cov)
    return bags, (proxies or None), covs


def cluster_centres(n_clusters: int, radius: float) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(n_clusters) / n_clusters
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def gen_clustered(rng, B: int = 50, n_clusters: int = 5, N: int = 50, radius: float = 1.5,
                  proxy_size: int = 1000) -> Scenario:
    """Rotated 2-D Gaussians whose means sit on ``n_clusters`` points of a circle.

    Consecutive groups of ``B / n_clusters`` bags share a centre.
    """
    if B % n_clusters:
        raise ConfigError("B must be divisible by the cluster count")
    if not 0 <= radius:
        raise ConfigError("radius must be >= 0")
    centres = cluster_centres(n_clusters, radius)
    means = np.repeat(centres, B // n_clusters, axis=0)
    bags, proxies, covs = _rotated_gaussians(means, [N] * B, proxy_size, rng)
    return Scenario(bags, means, proxies, covs)


def imbalanced_sizes(B: int, low: int = 10, high: int = 300, jitter: float = 0.0, rng=None) -> np.ndarray:
    """Geometrically spaced bag sizes over ``[low, high]``, optionally jittered."""
    sizes = np.geomspace(low, high, B)
    if jitter > 0:
        rng = np.random.default_rng() if rng is None else rng
        sizes = sizes * np.exp(rng.uniform(-jitter, jitter, B))
    return np.clip(np.rint(sizes), low, high).astype(int)


def gen_imbalanced(rng, B: int = 50, low: int = 10, high: int = 300, jitter: float = 0.1,
                   proxy_size: int = 1000) -> Scenario:
    """All means at the origin, sizes spread across ``[low, high]``, rotated covariances."""
    sizes = imbalanced_sizes(B, low, high, jitter, rng)
    means = np.zeros((B, 2))
    bags, proxies, covs = _rotated_gaussians(means, sizes, proxy_size, rng)
    return Scenario(bags, means, proxies, covs)


def simplex_qp(q: np.ndarray) -> np.ndarray:
    """Minimizer of ``w'Qw`` over the simplex for positive definite ``Q``.

    Solves ``min_{v >= 0} v'Qv - 2 1'v`` as a nonnegative least-squares problem
    and normalizes; the ray through the solution is the simplex minimizer.
    """
    r = np.linalg.cholesky(q).T
    rhs = np.linalg.solve(r.T, np.ones(q.shape[0]))
    v, _ = nnls(r, rhs, maxiter=50 * q.shape[0])
    return v / v.sum()


def excess_risk_oracles(means: np.ndarray, n: int, target: int = 0):
    """Formula oracle ``(N delta^2 + 1)/(N delta^2 + B)`` is computed by the caller; this
    returns the brute-force relative risk ``min_w R(w) / (d/N)`` for the realized means."""
    b, d = means.shape
    diff = means - means[target]
    q = diff @ diff.T + (d / n) * np.eye(b)
    w = simplex_qp(q)
    return float(w @ q @ w) / (d / n), w


def gen_excess_risk(rng, B: int = 50, N: int = 10, d: int = 100, delta: float = 0.0) -> Scenario:
    """Identity-covariance Gaussians; ``mu_0 = 0`` and ``mu_k ~ N(0, delta^2 I)`` otherwise."""
    means = np.zeros((B, d))
    means[1:] = delta * rng.standard_normal((B - 1, d))
    bags = [Bag(means[k] + rng.standard_normal((N, d)), k) for k in range(B)]
    r_formula = (N * delta**2 + 1.0) / (N * delta**2 + B)
    r_brute, _ = excess_risk_oracles(means, N)
    cov = [np.eye(d)] * B
    return Scenario(bags, means, None, cov, {"r_star_formula": r_formula, "r_star": r_brute})


def gen_equal_means(rng, B: int = 50, N: int = 10, d: int = 400, sigma: float = 1.0) -> Scenario:
    """Isotropic Gaussians sharing the zero mean."""
    means = np.zeros((B, d))
    bags = [Bag(sigma * rng.standard_normal((N, d)), k) for k in range(B)]
    return Scenario(bags, means, None, [sigma**2 * np.eye(d)] * B)


def gen_csv(rng, path: str, n_estimation: int = 50, proxy_cap: int = 1000) -> Scenario:
    """Proxy: each bag capped at ``proxy_cap`` rows; estimation sample: a seeded subsample of it."""
    ds = load_csv(path)
    bags, proxies = [], []
    for k, bag in enumerate(ds.bags):
        proxy = bag.samples[:proxy_cap]
        if proxy.shape[0] < 4:
            raise ConfigError(f"bag {ds.labels[k]!r} has only {proxy.shape[0]} samples")
        take = max(4, min(n_estimation, proxy.shape[0]))
        rows = rng.choice(proxy.shape[0], size=take, replace=False)
        bags.append(Bag(proxy[np.sort(rows)], k))
        proxies.append(Bag(proxy, k))
    return Scenario(bags, None, proxies)
