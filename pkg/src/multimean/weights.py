"""Closed-form convex weights over a neighbour set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from multimean.core import WeightVector
from multimean.exceptions import InvalidArgument
from multimean.neighbors import NeighborSet


@dataclass(frozen=True)
class StbParams:
    tau: float = 2.2
    gamma: float = 0.2
    method: str = "opt"

    def __post_init__(self):
        if self.method not in ("opt", "orth", "weight"):
            raise InvalidArgument(f"unknown STB method {self.method!r}")
        if not self.tau >= 0:
            raise InvalidArgument("tau must be >= 0")
        if self.method == "weight":
            if not 0 <= self.gamma <= 1:
                raise InvalidArgument("STB-weight needs 0 <= gamma <= 1")
        elif not self.gamma >= 0:
            raise InvalidArgument("gamma must be >= 0")


def _members(v, n: int, target: int) -> np.ndarray:
    if isinstance(v, NeighborSet):
        m = v.members.copy()
    elif v is None:
        m = np.ones(n, dtype=bool)
    else:
        m = np.array(v, dtype=bool)
    if m.shape != (n,):
        raise InvalidArgument("neighbour mask has the wrong length")
    m[target] = True
    return m


def indicator(n: int, target: int) -> np.ndarray:
    w = np.zeros(n)
    w[target] = 1.0
    return w


def _finish(w: np.ndarray, target: int) -> WeightVector:
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return WeightVector(w, target)


def oracle_weights(s2, v, target: int, tau: float, gamma: float = 1.0) -> WeightVector:
    """Bound-minimizing weights ``(1 - lam) e_target + lam s2(V) / s2_k`` on ``V``.

    ``s2(V)`` is the harmonic aggregate ``(sum_V 1/s2_k)^-1``, ``nu = s2(V)/s2_target``
    and ``lam = 1/(1 + gamma tau (1 - nu))``. With zero risks inside ``V`` the
    aggregated part is spread over the zero-risk bags; a zero target risk
    returns the indicator on the target.
    """
    s2 = np.asarray(s2, dtype=float)
    n = s2.size
    m = _members(v, n, target)
    if np.any(s2[m] < 0):
        raise InvalidArgument("naive risks must be nonnegative")
    if s2[target] == 0:
        return WeightVector(indicator(n, target), target)
    zero = m & (s2 == 0)
    w = np.zeros(n)
    if zero.any():
        # limit s2_k -> 0: nu -> 0 and all aggregated mass sits on zero-risk bags
        lam = 1.0 / (1.0 + gamma * tau)
        w[zero] = lam / zero.sum()
    else:
        inv = np.where(m, 1.0 / np.where(m, s2, 1.0), 0.0)
        s2v = 1.0 / inv.sum()
        nu = s2v / s2[target]
        lam = 1.0 / (1.0 + gamma * tau * (1.0 - nu))
        w = lam * s2v * inv
    w[target] += 1.0 - lam
    return _finish(w, target)


def orth_weights(s2, u, v, target: int, gamma: float) -> WeightVector:
    """Weights proportional to ``1 / (s2_l + gamma max(U_l, 0))`` on ``V``."""
    s2 = np.asarray(s2, dtype=float)
    u = np.asarray(u, dtype=float)
    n = s2.size
    m = _members(v, n, target)
    denom = s2 + gamma * np.maximum(u, 0.0)
    w = np.zeros(n)
    ok = m & (denom > 0)
    if not ok.any():
        zero = m & (denom == 0)
        if not zero.any():
            return WeightVector(indicator(n, target), target)
        w[zero] = 1.0
        return _finish(w, target)
    if np.any(m & (denom == 0)):
        # infinite precision bags absorb all the mass
        w[m & (denom == 0)] = 1.0
        return _finish(w, target)
    w[ok] = 1.0 / denom[ok]
    return _finish(w, target)


def uniform_boost_weights(v, target: int, gamma: float, n: int = None) -> WeightVector:
    """``gamma + (1-gamma)/|V|`` on the target, ``(1-gamma)/|V|`` on other members."""
    if not 0 <= gamma <= 1:
        raise InvalidArgument("gamma must lie in [0, 1]")
    if n is None:
        if isinstance(v, NeighborSet):
            n = v.members.size
        else:
            n = len(v)
    m = _members(v, n, target)
    w = np.where(m, (1.0 - gamma) / m.sum(), 0.0)
    w[target] += gamma
    return _finish(w, target)


def risk_bound(w, s2, target: int, tau: float) -> float:
    """``tau s2_t (1 - w_t)^2 + sum_k w_k^2 s2_k``, the bound the oracle weights minimize."""
    w = np.asarray(w, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    return float(tau * s2[target] * (1.0 - w[target]) ** 2 + np.sum(w * w * s2))
