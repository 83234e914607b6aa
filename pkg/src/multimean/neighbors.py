"""Neighbour selection: variance whittling, the similarity test and the modified threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from multimean.core import Dataset, TaskStats
from multimean.estimators import u_row
from multimean.exceptions import DegenerateSpectrum, InvalidArgument

RAW = "raw_tau"
MODIFIED = "modified_tau_tilde"


@dataclass(frozen=True)
class TestConfig:
    """Parameters of the neighbour test.

    Parameters
    ----------
    tau : float
        Relative squared-distance threshold, in units of the target's naive risk.
    varsigma : float
        Whittling factor; bags whose variance proxy exceeds ``varsigma`` times
        the target's are discarded.
    alpha : float
        Confidence level used by the modified threshold.
    mode : {"raw_tau", "modified_tau_tilde"}
        In modified mode the threshold is :func:`tau_tilde` and whittling uses
        ``3 * varsigma``.
    """

    __test__ = False

    tau: float = 2.2
    varsigma: float = math.inf
    alpha: float = 0.05
    mode: str = RAW

    def __post_init__(self):
        if not self.tau >= 0:
            raise InvalidArgument("tau must be >= 0")
        if not self.varsigma >= 1:
            raise InvalidArgument("varsigma must be >= 1")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("alpha must lie in (0, 1)")
        if self.mode not in (RAW, MODIFIED):
            raise InvalidArgument(f"unknown test mode {self.mode!r}")


@dataclass(frozen=True)
class NeighborSet:
    target: int
    members: np.ndarray

    def __post_init__(self):
        m = np.array(self.members, dtype=bool)
        m[self.target] = True
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.members)

    def __len__(self):
        return int(self.members.sum())

    def __contains__(self, k):
        return bool(self.members[k])


def whittle(stats: Sequence[TaskStats], target: int, varsigma: float) -> np.ndarray:
    """Keep bag ``k`` iff ``z2_k / N_k <= varsigma * z2_target / N_target``."""
    if math.isinf(varsigma):
        return np.ones(len(stats), dtype=bool)
    proxy = np.array([s.z2 / s.size for s in stats])
    keep = proxy <= varsigma * proxy[target]
    keep[target] = True
    return keep


def tau_tilde(stats: TaskStats, cfg: TestConfig, n_bags: int) -> float:
    """Modified plug-in threshold, inflated for estimation error of the test.

    ``sqrt(d) = N s2 / z2``, ``t0 = 64 log(8B/alpha) / sqrt(d)`` and
    ``tau_tilde = (1 + 1/(30 sqrt(d))) (sqrt(tau) + sqrt(6 varsigma t0))^2``.
    """
    if not stats.z2 > 0:
        raise DegenerateSpectrum("Schatten-2 estimate is zero; use the raw threshold")
    if n_bags < 1:
        raise InvalidArgument("n_bags must be >= 1")
    sqrt_d = stats.dstar_hat
    if not sqrt_d > 0:
        raise DegenerateSpectrum("estimated effective dimension is zero")
    t0 = 64.0 * math.log(8.0 * n_bags / cfg.alpha) / sqrt_d
    return (1.0 + 1.0 / (30.0 * sqrt_d)) * (math.sqrt(cfg.tau) + math.sqrt(6.0 * cfg.varsigma * t0)) ** 2


def effective_threshold(stats: Sequence[TaskStats], target: int, cfg: TestConfig) -> float:
    """``tau`` in raw mode, ``tau_tilde`` in modified mode (raw when z2 vanishes)."""
    if cfg.mode == RAW:
        return cfg.tau
    try:
        return tau_tilde(stats[target], cfg, len(stats))
    except DegenerateSpectrum:
        return cfg.tau


def select(
    u: np.ndarray, stats: Sequence[TaskStats], target: int, cfg: TestConfig
) -> NeighborSet:
    """Neighbour set from a precomputed row ``u[l] = U(target, l)``."""
    factor = cfg.varsigma * (3.0 if cfg.mode == MODIFIED else 1.0)
    keep = whittle(stats, target, factor)
    threshold = effective_threshold(stats, target, cfg) * stats[target].s2_hat
    members = keep & (np.asarray(u) <= threshold)
    return NeighborSet(target, members)


def similarity_test(
    dataset: Dataset,
    stats: Sequence[TaskStats],
    target: int,
    cfg: TestConfig,
    u: Optional[np.ndarray] = None,
) -> NeighborSet:
    """Bags passing whittling and ``U(target, k) <= tau_eff * s2_target``.

    The target is always a member.
    """
    if u is None:
        u = u_row(dataset, target)
    return select(u, stats, target, cfg)
