"""Method registry: every method maps a trial context and a target bag to weights.

Weights are returned as length-B arrays over the estimation bags. ``js0`` and
``rkmse`` shrink toward the origin and return sub-simplex weights (entries
summing to at most 1); every other method returns a simplex vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional

import numpy as np

from multimean import baselines, qagg, weights
from multimean.core import Dataset, TaskStats
from multimean.estimators import compute_stats, u_row
from multimean.exceptions import ConfigError, InvalidArgument
from multimean.neighbors import RAW, TestConfig, select

SUB_SIMPLEX = {"js0", "rkmse"}

DEFAULTS: Dict[str, dict] = {
    "ne": {},
    "js0": {},
    "jsgm": {},
    "rkmse": {},
    "mta": {"gamma": 1.0},
    "agg_orth": {"gamma": 13.0},
    "agg_egd": {"c_q": 1.4, "c_1": 1.0, "c_2": 4.0},
    "stb_weight": {"tau": 2.2, "gamma": 0.2},
    "stb_opt": {"tau": 2.2, "gamma": 0.2},
    "stb_orth": {"tau": 5.0, "gamma": 3.0},
    "stb_egd": {"tau": 5.0, "c_q": 1.0, "c_1": 1.0, "c_2": 5.0},
}

# keys shared by every method that runs the neighbour test or the EGD solver
TEST_KEYS = ("varsigma", "alpha", "mode")
SOLVER_KEYS = ("c_bs", "M", "eta0", "t_max", "tol", "gap_tol", "step", "clip")


@dataclass
class TrialContext:
    """Lazily computed quantities shared by all methods within one trial.

    ``est`` holds the estimation bags. ``test`` holds the bags the neighbour
    test and plug-in risks are computed on; it is ``est`` itself unless
    sample splitting is on.
    """

    est: Dataset
    test: Dataset
    rng: np.random.Generator
    true_cov: Optional[list] = None
    stats_kw: dict = field(default_factory=dict)

    @cached_property
    def est_stats(self) -> List[TaskStats]:
        return [compute_stats(self.est, k, rng=self.rng, **self.stats_kw) for k in range(self.est.n_bags)]

    @cached_property
    def test_stats(self) -> List[TaskStats]:
        if self.test is self.est:
            return self.est_stats
        return [compute_stats(self.test, k, rng=self.rng, **self.stats_kw) for k in range(self.test.n_bags)]

    @cached_property
    def _u_rows(self) -> dict:
        return {}

    def u(self, target: int) -> np.ndarray:
        rows = self._u_rows
        if target not in rows:
            rows[target] = u_row(self.test, target)
        return rows[target]

    @cached_property
    def means(self) -> np.ndarray:
        return self.est.naive_means()

    @cached_property
    def mta(self) -> dict:
        return {}

    def qagg_inputs(self, target: int) -> qagg.QaggInputs:
        return qagg.build_inputs(self.est, self.est_stats, target)

    @property
    def n_bags(self) -> int:
        return self.est.n_bags


def _test_config(p: dict) -> TestConfig:
    vs = p.get("varsigma")
    return TestConfig(
        tau=float(p["tau"]),
        varsigma=math.inf if vs is None else float(vs),
        alpha=float(p.get("alpha", 0.05)),
        mode=p.get("mode", RAW),
    )


def _neighbors(ctx: TrialContext, k: int, p: dict):
    return select(ctx.u(k), ctx.test_stats, k, _test_config(p))


def _s2(ctx: TrialContext) -> np.ndarray:
    return np.array([s.s2_hat for s in ctx.test_stats])


def _qagg_params(p: dict) -> qagg.QaggParams:
    keys = ("c_q", "c_1", "c_2") + SOLVER_KEYS
    return qagg.QaggParams(**{k: p[k] for k in keys if k in p})


def m_ne(ctx, k, p):
    return weights.indicator(ctx.n_bags, k)


def _js_variance(ctx: TrialContext, k: int):
    """``(||S||_op / N, Tr S / ||S||_op)`` from the true covariance when known."""
    n = ctx.est.bags[k].size
    if ctx.true_cov is not None:
        ev = np.linalg.eigvalsh(ctx.true_cov[k])
        return ev[-1] / n, ev.sum() / ev[-1]
    st = compute_stats(ctx.est, k, with_de=True, rng=ctx.rng, **ctx.stats_kw)
    if not st.de_hat:
        return 0.0, float(ctx.est.dim)
    return st.z1 / st.de_hat / n, st.de_hat


def _require_vector(ctx, name):
    if ctx.est.kernel is not None:
        raise InvalidArgument(f"{name} is only defined in vector mode")


def m_js0(ctx, k, p):
    _require_vector(ctx, "js0")
    var, dim = _js_variance(ctx, k)
    w = np.zeros(ctx.n_bags)
    w[k] = baselines.js_factor(ctx.means[k], var, dim)
    return w


def m_jsgm(ctx, k, p):
    _require_vector(ctx, "jsgm")
    var, dim = _js_variance(ctx, k)
    f = baselines.js_factor(ctx.means[k], var, dim, ctx.means.mean(axis=0))
    w = np.full(ctx.n_bags, (1.0 - f) / ctx.n_bags)
    w[k] += f
    return w


def m_rkmse(ctx, k, p):
    w = np.zeros(ctx.n_bags)
    w[k] = baselines.r_kmse(ctx.est.bags[k], ctx.est.kernel)
    return w


def m_mta(ctx, k, p):
    key = (float(p["gamma"]), p.get("similarity", "inverse"))
    if key not in ctx.mta:
        ctx.mta[key] = baselines.mta_const(ctx.est, ctx.test_stats, baselines.MtaParams(*key))
    return ctx.mta[key][k]


def m_agg_orth(ctx, k, p):
    return weights.orth_weights(_s2(ctx), ctx.u(k), None, k, float(p["gamma"])).weights


def m_agg_egd(ctx, k, p):
    return qagg.solve_egd(ctx.qagg_inputs(k), _qagg_params(p)).weights


def m_stb_weight(ctx, k, p):
    v = _neighbors(ctx, k, p)
    return weights.uniform_boost_weights(v, k, float(p["gamma"])).weights


def m_stb_opt(ctx, k, p):
    v = _neighbors(ctx, k, p)
    return weights.oracle_weights(_s2(ctx), v, k, float(p["tau"]), float(p["gamma"])).weights


def m_stb_orth(ctx, k, p):
    v = _neighbors(ctx, k, p)
    return weights.orth_weights(_s2(ctx), ctx.u(k), v, k, float(p["gamma"])).weights


def m_stb_egd(ctx, k, p):
    v = _neighbors(ctx, k, p)
    return qagg.solve_egd(ctx.qagg_inputs(k), _qagg_params(p), restrict=v).weights


REGISTRY: Dict[str, Callable] = {
    "ne": m_ne,
    "js0": m_js0,
    "jsgm": m_jsgm,
    "rkmse": m_rkmse,
    "mta": m_mta,
    "agg_orth": m_agg_orth,
    "agg_egd": m_agg_egd,
    "stb_weight": m_stb_weight,
    "stb_opt": m_stb_opt,
    "stb_orth": m_stb_orth,
    "stb_egd": m_stb_egd,
}

_ALLOWED = {
    "ne": set(),
    "js0": set(),
    "jsgm": set(),
    "rkmse": set(),
    "mta": {"gamma", "similarity"},
    "agg_orth": {"gamma"},
    "agg_egd": {"c_q", "c_1", "c_2", *SOLVER_KEYS},
    "stb_weight": {"tau", "gamma", *TEST_KEYS},
    "stb_opt": {"tau", "gamma", *TEST_KEYS},
    "stb_orth": {"tau", "gamma", *TEST_KEYS},
    "stb_egd": {"tau", "c_q", "c_1", "c_2", *TEST_KEYS, *SOLVER_KEYS},
}


@dataclass(frozen=True)
class MethodSpec:
    id: str
    params: dict
    label: str

    def weights(self, ctx: TrialContext, target: int) -> np.ndarray:
        return np.asarray(REGISTRY[self.id](ctx, target, self.params), dtype=float)


def make_method(entry) -> MethodSpec:
    """Parse ``"stb_opt"`` or ``{"id": "stb_opt", "params": {...}, "label": ...}``."""
    if isinstance(entry, str):
        entry = {"id": entry}
    if not isinstance(entry, dict) or "id" not in entry:
        raise ConfigError(f"bad method entry {entry!r}")
    mid = entry["id"]
    if mid not in REGISTRY:
        raise ConfigError(f"unknown method id {mid!r}; known: {sorted(REGISTRY)}")
    overrides = dict(entry.get("params", {}))
    unknown = set(overrides) - _ALLOWED[mid]
    if unknown:
        raise ConfigError(f"method {mid!r} does not take parameters {sorted(unknown)}")
    params = {**DEFAULTS[mid], **overrides}
    try:
        if mid.startswith("stb"):
            _test_config(params)
        if mid in ("agg_egd", "stb_egd"):
            _qagg_params(params)
        if mid == "mta":
            baselines.MtaParams(float(params["gamma"]), params.get("similarity", "inverse"))
        if mid == "stb_weight":
            weights.StbParams(params["tau"], params["gamma"], "weight")
    except (InvalidArgument, TypeError, ValueError) as exc:
        raise ConfigError(f"method {mid!r}: {exc}") from None
    return MethodSpec(mid, params, entry.get("label", mid))
