"""Oracle reference quantities: the single-task bound B(tau, nu) and the compound oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from multimean.exceptions import InvalidArgument


def b_oracle(tau, nu):
    """Oracle relative-risk bound ``tau/(1+tau) + nu / ((1+tau)(1 + tau(1-nu)))``.

    Vectorized over ``tau`` and ``nu``. ``B(tau, 1) = 1`` exactly.
    """
    tau_a = np.asarray(tau, dtype=float)
    nu_a = np.asarray(nu, dtype=float)
    if np.any(~(tau_a >= 0)) or np.any(~((nu_a >= 0) & (nu_a <= 1))):
        raise InvalidArgument("need tau >= 0 and 0 <= nu <= 1")
    tau_a, nu_a = np.broadcast_arrays(tau_a, nu_a)
    with np.errstate(invalid="ignore"):
        val = tau_a / (1.0 + tau_a) + nu_a / ((1.0 + tau_a) * (1.0 + tau_a * (1.0 - nu_a)))
    val = np.where(nu_a == 1.0, 1.0, val)
    # tau = inf: the bound is 1 whatever nu
    val = np.where(np.isinf(tau_a), 1.0, val)
    return float(val) if val.ndim == 0 else val


def aggregated_variance(s2, subset) -> float:
    """``(sum_{k in subset} 1/s2_k)^-1``."""
    s2 = np.asarray(s2, dtype=float)
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        raise InvalidArgument("empty subset")
    vals = s2[idx]
    if np.any(~(vals > 0)):
        raise InvalidArgument("naive risks must be positive on the subset")
    return float(1.0 / np.sum(1.0 / vals))


def nu_relative(s2, subset, target: int) -> float:
    """Relative aggregated variance ``s2(subset) / s2_target``."""
    idx = list(subset)
    if target not in idx:
        raise InvalidArgument("target must belong to the subset")
    s2 = np.asarray(s2, dtype=float)
    aggregated_variance(s2, idx)  # validates the subset
    # 1 / (1 + sum_{k != t} s2_t / s2_k): exactly 1 for the target alone, never above it
    others = np.array([k for k in idx if k != target], dtype=int)
    return float(1.0 / (1.0 + np.sum(s2[target] / s2[others])))


@dataclass(frozen=True)
class Partition:
    """Disjoint groups covering ``0..B-1`` and their diameters."""

    groups: Tuple[Tuple[int, ...], ...]
    diameters: Tuple[float, ...]

    def __init__(self, groups: Sequence[Sequence[int]], diameters: Sequence[float]):
        g = tuple(tuple(int(i) for i in grp) for grp in groups)
        z = tuple(float(x) for x in diameters)
        if len(g) != len(z):
            raise InvalidArgument("one diameter per group required")
        if any(len(grp) == 0 for grp in g):
            raise InvalidArgument("groups must be nonempty")
        flat = sorted(i for grp in g for i in grp)
        if flat != list(range(len(flat))):
            raise InvalidArgument("groups must partition 0..B-1")
        if any(not x >= 0 for x in z):
            raise InvalidArgument("diameters must be >= 0")
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "diameters", z)

    @property
    def n_bags(self) -> int:
        return sum(len(grp) for grp in self.groups)

    @classmethod
    def from_means(cls, means, groups) -> "Partition":
        """Partition with the diameters ``max_{k,l in C_j} |mu_k - mu_l|``."""
        means = np.atleast_2d(np.asarray(means, dtype=float))
        diam = []
        for grp in groups:
            m = means[list(grp)]
            d2 = np.sum((m[:, None, :] - m[None, :, :]) ** 2, axis=-1)
            diam.append(float(np.sqrt(d2.max())))
        return cls(groups, diam)


def _check(s2, part: Partition) -> np.ndarray:
    s2 = np.asarray(s2, dtype=float)
    if s2.size != part.n_bags:
        raise InvalidArgument("one naive risk per bag required")
    if np.any(~(s2 > 0)):
        raise InvalidArgument("naive risks must be positive")
    return s2


def l_star(s2, part: Partition) -> float:
    """Compound oracle relative risk: bag-average of ``B(zeta_j^2/s2_k, s2(C_j)/s2_k)``."""
    s2 = _check(s2, part)
    total = 0.0
    for grp, zeta in zip(part.groups, part.diameters):
        idx = np.array(grp)
        agg = aggregated_variance(s2, idx)
        tau = zeta**2 / s2[idx]
        nu = np.minimum(agg / s2[idx], 1.0)
        total += float(np.sum(b_oracle(tau, nu)))
    return total / s2.size


def l_star_bounds(s2, part: Partition) -> Tuple[float, float]:
    """Per-group and global upper bounds on :func:`l_star`.

    Per group: ``sum_j |C_j|/B (tbar_j + 1/|C_j|) / (tbar_j + 1)`` with
    ``tbar_j = zeta_j^2 / hm(s2 on C_j)``; global: ``min(1, t*/(1+t*) + J/B)``
    with ``t*`` the size-weighted average of ``tbar_j``.
    """
    s2 = _check(s2, part)
    b = s2.size
    per_group = 0.0
    tstar = 0.0
    for grp, zeta in zip(part.groups, part.diameters):
        c = len(grp)
        hm = c * aggregated_variance(s2, grp)
        tbar = zeta**2 / hm
        per_group += c / b * (tbar + 1.0 / c) / (tbar + 1.0)
        tstar += c / b * tbar
    j = len(part.groups)
    return per_group, min(1.0, tstar / (1.0 + tstar) + j / b)


def tau_min(s2_target: float, s2_other: float, d_target: float, d_other: float, alpha: float = 0.05) -> float:
    """Minimal reliable detection threshold of the similarity test.

    ``32 (1/sqrt(d_t) + (s2_k/s2_t)/sqrt(d_k)) log(8/alpha)`` with ``d`` the
    effective dimensions ``(Tr S)^2 / Tr S^2`` of the two covariances.
    """
    if not (s2_target > 0 and s2_other >= 0 and d_target > 0 and d_other > 0 and 0 < alpha < 1):
        raise InvalidArgument("need positive risks and dimensions and 0 < alpha < 1")
    return 32.0 * (1.0 / np.sqrt(d_target) + (s2_other / s2_target) / np.sqrt(d_other)) * np.log(8.0 / alpha)


def tau_pm(tau: float, tmin: float) -> Tuple[float, float]:
    """``(tau_plus, tau_minus) = ((sqrt(tau) + sqrt(tmin))^2, (sqrt(tau) - sqrt(tmin))_+^2)``."""
    if not (tau >= 0 and tmin >= 0):
        raise InvalidArgument("tau and tmin must be >= 0")
    a, b = np.sqrt(tau), np.sqrt(tmin)
    return float((a + b) ** 2), float(max(a - b, 0.0) ** 2)
