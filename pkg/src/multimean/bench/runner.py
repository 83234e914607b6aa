"""Seeded trial loops, error evaluation and summaries."""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from multimean.core import Bag, Dataset, is_simplex
from multimean.exceptions import ConfigError, MultimeanError
from multimean.kernels import KernelSpec, error_components
from multimean.bench import generators as gen
from multimean.bench.methods import SUB_SIMPLEX, MethodSpec, TrialContext, make_method

log = logging.getLogger(__name__)

SCENARIOS = {
    "clustered": gen.gen_clustered,
    "imbalanced": gen.gen_imbalanced,
    "excess_risk_vs_dim": gen.gen_excess_risk,
    "equal_means": gen.gen_equal_means,
    "csv_ingest": gen.gen_csv,
}

# parameters that may be given as lists and are then swept
SWEEPABLE = ("radius", "d", "delta", "N", "B")

SCENARIO_DEFAULTS = {
    "excess_risk_vs_dim": {"d": list(gen.DEFAULT_DIMS), "delta": [0.0, 1.0, 3.0]},
}


@dataclass
class ExperimentConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: ["ne"])
    trials: int = 1
    seed: int = 0
    kernel: Optional[dict] = None
    split: bool = False
    targets: object = "all"
    grid: Optional[dict] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; known: {sorted(SCENARIOS)}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")
        for key, val in self.params.items():
            vals = val if isinstance(val, list) else [val]
            if key in SWEEPABLE and any(not isinstance(v, (int, float)) or v < 0 for v in vals):
                raise ConfigError(f"scenario parameter {key!r} must be nonnegative")
            if isinstance(val, list) and key not in SWEEPABLE:
                raise ConfigError(f"scenario parameter {key!r} cannot be swept")
        if self.kernel is not None:
            try:
                KernelSpec.from_dict(self.kernel)
            except MultimeanError as exc:
                raise ConfigError(f"kernel: {exc}") from None
        self.method_specs()
        if self.targets != "all" and not (
            isinstance(self.targets, list) and all(isinstance(t, int) and t >= 0 for t in self.targets)
        ):
            raise ConfigError('targets must be "all" or a list of bag indices')

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "scenario" not in d:
            raise ConfigError("config needs a scenario")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            return cls.from_dict(data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def method_specs(self) -> List[MethodSpec]:
        specs = [make_method(m) for m in self.methods]
        if self.grid:
            specs += expand_grid(self.grid)
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"method labels must be unique: {labels}")
        return specs

    def points(self) -> List[dict]:
        """Cartesian product of every swept scenario parameter."""
        params = {**SCENARIO_DEFAULTS.get(self.scenario, {}), **self.params}
        swept = [k for k in SWEEPABLE if isinstance(params.get(k), list)]
        fixed = {k: v for k, v in params.items() if k not in swept}
        out = []
        for combo in itertools.product(*[params[k] for k in swept]):
            out.append({**fixed, **dict(zip(swept, combo))})
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def expand_grid(grid: dict) -> List[MethodSpec]:
    """``{"stb_opt.tau": [1, 2], "stb_opt.gamma": [0.2]}`` -> one spec per combination."""
    by_method: Dict[str, Dict[str, list]] = {}
    for key, vals in grid.items():
        if "." not in key or not isinstance(vals, list) or not vals:
            raise ConfigError(f"grid keys are 'method.param' with a nonempty list, got {key!r}")
        mid, param = key.split(".", 1)
        by_method.setdefault(mid, {})[param] = vals
    specs = []
    for mid, table in by_method.items():
        names = sorted(table)
        for combo in itertools.product(*[table[n] for n in names]):
            params = dict(zip(names, combo))
            label = mid + "[" + ",".join(f"{n}={v}" for n, v in params.items()) + "]"
            specs.append(make_method({"id": mid, "params": params, "label": label}))
    return specs


@dataclass(frozen=True)
class TrialResult:
    method: str
    bag: int
    error: float
    trial: int
    seed: int
    point: int = 0


def child_seed(seed: int, point: int, trial: int) -> int:
    """64-bit seed of one trial, derived from the root seed by a SeedSequence."""
    state = np.random.SeedSequence([seed, point, trial]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _split(bags: Sequence[Bag]):
    est, test = [], []
    for b in bags:
        h = b.size // 2
        est.append(Bag(b.samples[:h], b.id))
        test.append(Bag(b.samples[h:], b.id))
    return est, test


def run_trial(cfg: ExperimentConfig, point_index: int, point: dict, trial: int,
              specs: Optional[List[MethodSpec]] = None):
    """One trial of one scenario point; returns (results, info)."""
    specs = cfg.method_specs() if specs is None else specs
    seed = child_seed(cfg.seed, point_index, trial)
    rng = np.random.default_rng(seed)
    scen = SCENARIOS[cfg.scenario](rng, **point)
    kernel = KernelSpec.from_dict(cfg.kernel) if cfg.kernel is not None else None
    bags = scen.bags
    if cfg.split:
        est_bags, test_bags = _split(bags)
        est = Dataset(est_bags, kernel)
        test = Dataset(test_bags, est.kernel)
    else:
        est = Dataset(bags, kernel)
        test = est
    ctx = TrialContext(est, test, rng, scen.true_cov)
    targets = range(est.n_bags) if cfg.targets == "all" else [t for t in cfg.targets if t < est.n_bags]

    if est.kernel is not None:
        if scen.proxies is None:
            raise ConfigError("kernel mode needs proxy bags")
        comps = error_components(est, scen.proxies)
        error = comps.error
    else:
        if scen.true_means is None:
            comps = error_components(est, scen.proxies)
            error = comps.error
        else:
            means = est.naive_means()

            def error(w, k):
                diff = w @ means - scen.true_means[k]
                return float(diff @ diff)

    results = []
    failed = []
    for spec in specs:
        for k in targets:
            try:
                w = spec.weights(ctx, k)
                check_weights(w, spec.id)
                err = error(w, k)
            except (MultimeanError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
                log.warning("method %s failed on bag %d (trial %d): %s", spec.label, k, trial, exc)
                failed.append((spec.label, k, str(exc)))
                err = math.nan
            results.append(TrialResult(spec.label, int(k), err, trial, seed, point_index))
    info = dict(scen.info)
    info["sizes"] = [b.size for b in est.bags]
    return results, info, failed


def check_weights(w: np.ndarray, method_id: str, tol: float = 1e-9):
    if method_id in SUB_SIMPLEX:
        if np.any(~np.isfinite(w)) or w.sum() > 1.0 + tol:
            raise MultimeanError(f"{method_id}: invalid shrinkage weights")
        return
    if not is_simplex(w, tol):
        raise MultimeanError(f"{method_id}: weights leave the simplex (sum {w.sum()!r}, min {w.min()!r})")


def _job(args):
    cfg_dict, point_index, point, trial = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return point_index, trial, run_trial(cfg, point_index, point, trial)


def resolve_jobs(jobs: Optional[int]) -> int:
    env = os.environ.get("MULTIMEAN_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"MULTIMEAN_JOBS must be an integer, got {env!r}") from None
    jobs = 1 if jobs is None else jobs
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


@dataclass
class RunOutput:
    config: dict
    points: List[dict]
    results: List[TrialResult]
    info: Dict[int, List[dict]]
    failures: list

    def errors(self, method: str, point: int = 0) -> np.ndarray:
        """Array ``(trials, bags)`` of errors for one method at one point."""
        rows = [r for r in self.results if r.method == method and r.point == point]
        trials = sorted({r.trial for r in rows})
        bags = sorted({r.bag for r in rows})
        out = np.full((len(trials), len(bags)), math.nan)
        ti = {t: i for i, t in enumerate(trials)}
        bi = {b: i for i, b in enumerate(bags)}
        for r in rows:
            out[ti[r.trial], bi[r.bag]] = r.error
        return out

    @property
    def methods(self) -> List[str]:
        seen = []
        for r in self.results:
            if r.method not in seen:
                seen.append(r.method)
        return seen


def run(cfg: ExperimentConfig, jobs: Optional[int] = 1) -> RunOutput:
    """Run every trial of every scenario point; output order is canonical."""
    jobs = resolve_jobs(jobs)
    points = cfg.points()
    specs = cfg.method_specs()
    tasks = [(pi, p, t) for pi, p in enumerate(points) for t in range(cfg.trials)]
    collected = []
    if jobs == 1:
        for pi, p, t in tasks:
            collected.append((pi, t, run_trial(cfg, pi, p, t, specs)))
    else:
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            collected = list(pool.map(_job, [(cfg_dict, pi, p, t) for pi, p, t in tasks], chunksize=4))
    collected.sort(key=lambda x: (x[0], x[1]))
    order = {s.label: i for i, s in enumerate(specs)}
    results, info, failures = [], {}, []
    for pi, t, (res, inf, fail) in collected:
        results.extend(res)
        info.setdefault(pi, []).append(inf)
        failures.extend((pi, t) + f for f in fail)
    results.sort(key=lambda r: (r.point, r.trial, order[r.method], r.bag))
    return RunOutput(cfg.to_dict(), points, results, info, failures)


def summarize(out: RunOutput) -> List[dict]:
    """Per point and method: mean error, improvement over NE in percent, failures.

    Errors are averaged over trials per bag, then over bags. Improvement is
    ``(E_ne - E_m) / E_ne * 100`` and needs ``ne`` among the methods.
    """
    rows = []
    for pi, point in enumerate(out.points):
        base = None
        if "ne" in out.methods:
            base = np.nanmean(out.errors("ne", pi), axis=0)
        for m in out.methods:
            e = out.errors(m, pi)
            n_failed = int(np.isnan(e).sum())
            per_bag = np.nanmean(e, axis=0) if e.size and n_failed < e.size else np.full(e.shape[1], math.nan)
            mean = float(np.mean(per_bag))
            row = {"point": pi, **{k: v for k, v in point.items() if k in SWEEPABLE}, "method": m,
                   "mean_error": mean, "failed": n_failed}
            if base is not None:
                ne_mean = float(np.mean(base))
                row["improvement_pct"] = (ne_mean - mean) / ne_mean * 100.0 if ne_mean != 0 else 0.0
                with np.errstate(invalid="ignore", divide="ignore"):
                    row["per_bag_improvement_pct"] = list((base - per_bag) / base * 100.0)
            rows.append(row)
    return rows


def excess_risk_series(out: RunOutput, method: str, oracle: str = "r_star") -> Dict[float, Dict[int, float]]:
    """Mean excess relative risk ``error/(d/N) - r*`` per delta and dimension (target 0)."""
    series: Dict[float, Dict[int, float]] = {}
    for pi, point in enumerate(out.points):
        d, n = point["d"], point.get("N", 10)
        e = out.errors(method, pi)[:, 0]
        r = np.array([inf[oracle] for inf in out.info[pi]])
        series.setdefault(float(point["delta"]), {})[int(d)] = float(np.mean(e / (d / n) - r))
    return series


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``; NaN if any ``y <= 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)) or x.size < 2:
        return math.nan
    lx, ly = np.log(x), np.log(y)
    return float(np.polyfit(lx, ly, 1)[0])


def slope_report(out: RunOutput, method: str = "agg_egd", oracle: str = "r_star") -> Dict[float, float]:
    """Log-log slope of mean excess relative risk against dimension, per delta."""
    series = excess_risk_series(out, method, oracle)
    return {delta: loglog_slope(list(pts), list(pts.values())) for delta, pts in series.items()}
