"""Q-aggregation: penalized risk objective and its exponentiated-gradient solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from multimean import _backend
from multimean._accel_py import egd_loop
from multimean import kernels as kx
from multimean.core import Dataset, TaskStats, WeightVector
from multimean.exceptions import InsufficientSamples, InvalidArgument
from multimean.neighbors import NeighborSet


@dataclass(frozen=True)
class QaggParams:
    """Objective weights and solver settings.

    Parameters
    ----------
    c_q : float
        Weight of the deviation penalty ``sum_l w_l sqrt(q_l / N_target)``.
        ``16 sqrt(u0)`` recovers the theoretical objective.
    c_1, c_2 : float
        Linear and quadratic penalties on ``theta = z2 / N``.
    c_bs : float
        Bounded-setting penalty ``(M / N_target) sum_l w_l |m_l - m_target|``.
    M : float, optional
        Bound radius, required when ``c_bs > 0``.
    eta0 : float
        Learning rate at ``t = 0``; the schedule is ``eta0 / (1 + t/B)``.
    t_max : int
    tol : float
        Stop once the squared l2 change between iterates is at most ``tol``
        and the duality gap condition below holds.
    gap_tol : float
        Relative duality-gap requirement for stopping: ``w'g - min_l g_l <=
        gap_tol |f(w)|`` over the free coordinates. Small multiplicative steps
        from near-zero weights pass the change test long before the optimum;
        the gap bounds the remaining suboptimality. ``inf`` gives the plain
        change test.
    step : {"curvature", "absolute"}
        ``"curvature"`` divides the learning rate by the largest diagonal entry
        of the Hessian over the free coordinates, so the iteration does not
        depend on the scale of the data. ``"absolute"`` uses ``eta0`` as is.
    clip : float
        Exponent range after shifting by its maximum: ``[-clip, 0]``.
    """

    c_q: float = 1.4
    c_1: float = 1.0
    c_2: float = 4.0
    c_bs: float = 0.0
    M: Optional[float] = None
    eta0: float = 50.0
    t_max: int = 500
    tol: float = 1e-8
    gap_tol: float = 1e-4
    step: str = "curvature"
    clip: float = 50.0

    def __post_init__(self):
        for name in ("c_q", "c_1", "c_2", "c_bs"):
            if not getattr(self, name) >= 0:
                raise InvalidArgument(f"{name} must be >= 0")
        if self.c_bs > 0 and not (self.M is not None and self.M > 0):
            raise InvalidArgument("c_bs > 0 needs a bound radius M > 0")
        if not self.eta0 > 0 or self.t_max < 1 or not self.tol > 0:
            raise InvalidArgument("need eta0 > 0, t_max >= 1 and tol > 0")
        if not self.gap_tol >= 0:
            raise InvalidArgument("gap_tol must be >= 0")
        if self.step not in ("absolute", "curvature"):
            raise InvalidArgument(f"unknown step mode {self.step!r}")
        if not self.clip > 0:
            raise InvalidArgument("clip must be positive")


@dataclass(frozen=True)
class QaggInputs:
    target: int
    lambda_hat: np.ndarray
    s2_hat: np.ndarray
    q_hat: np.ndarray
    theta: np.ndarray
    n_target: int

    @property
    def n_bags(self) -> int:
        return self.s2_hat.size


def lambda_hat_vector(means: np.ndarray, target: int) -> np.ndarray:
    d = means - means[target]
    return d @ d.T


def q_hat_vector(samples: np.ndarray, means: np.ndarray, target: int) -> np.ndarray:
    """``q_l = sum_i <m_t - m_l, x_i - m_t>^2 / (N - 1)`` over the target's samples."""
    n = samples.shape[0]
    if n < 2:
        raise InsufficientSamples("q-hat needs at least 2 samples in the target bag")
    xc = samples - means[target]
    proj = xc @ (means[target] - means).T
    return np.sum(proj * proj, axis=0) / (n - 1)


def lambda_hat_kernel(dataset: Dataset, target: int) -> np.ndarray:
    n = dataset.sizes.astype(float)
    b = dataset.n_bags
    g = np.empty((b, b))
    for i in range(b):
        for j in range(i, b):
            g[i, j] = g[j, i] = dataset.gram_sums(i, j).full / (n[i] * n[j])
    lam = g - g[target][None, :] - g[target][:, None] + g[target, target]
    lam[target, :] = 0.0
    lam[:, target] = 0.0
    return lam


def build_inputs(
    dataset: Dataset,
    stats: Sequence[TaskStats],
    target: int,
    less_biased: Optional[bool] = None,
) -> QaggInputs:
    """Assemble the Gram matrix of mean differences, risks, deviations and theta."""
    bag = dataset.bags[target]
    if bag.size < 2:
        raise InsufficientSamples("target bag needs at least 2 samples")
    s2 = np.array([s.s2_hat for s in stats])
    theta = np.array([s.z2 / s.size for s in stats])
    if dataset.kernel is None:
        means = dataset.naive_means()
        lam = lambda_hat_vector(means, target)
        q = q_hat_vector(bag.samples, means, target)
    else:
        lam = lambda_hat_kernel(dataset, target)
        q = kx.q_hat_kernel(bag, dataset.bags, dataset.kernel, less_biased)
    q = np.maximum(q, 0.0)
    q[target] = 0.0
    return QaggInputs(target, lam, s2, q, theta, bag.size)


def _linear_quadratic(inputs: QaggInputs, params: QaggParams) -> Tuple[np.ndarray, np.ndarray]:
    """``A, b`` with objective ``w'Aw/2 + b'w - s2_target`` and gradient ``Aw + b``."""
    t = inputs.target
    n = inputs.n_target
    a = 2.0 * (inputs.lambda_hat + params.c_2 * np.diag(inputs.theta))
    b = params.c_q * np.sqrt(inputs.q_hat / n) + params.c_1 * inputs.theta
    if params.c_bs > 0:
        b = b + params.c_bs * (params.M / n) * np.sqrt(np.maximum(np.diag(inputs.lambda_hat), 0.0))
    b[t] += 2.0 * inputs.s2_hat[t]
    return a, b


def objective(w, inputs: QaggInputs, params: QaggParams) -> float:
    w = np.asarray(getattr(w, "weights", w), dtype=float)
    t = inputs.target
    n = inputs.n_target
    val = float(w @ inputs.lambda_hat @ w) + (2.0 * w[t] - 1.0) * inputs.s2_hat[t]
    val += params.c_q * float(w @ np.sqrt(inputs.q_hat / n))
    val += params.c_1 * float(w @ inputs.theta) + params.c_2 * float((w * w) @ inputs.theta)
    if params.c_bs > 0:
        val += params.c_bs * (params.M / n) * float(w @ np.sqrt(np.maximum(np.diag(inputs.lambda_hat), 0.0)))
    return val


def gradient(w, inputs: QaggInputs, params: QaggParams) -> np.ndarray:
    w = np.asarray(getattr(w, "weights", w), dtype=float)
    a, b = _linear_quadratic(inputs, params)
    return a @ w + b


def _free_mask(inputs: QaggInputs, restrict) -> np.ndarray:
    b = inputs.n_bags
    if restrict is None:
        free = np.ones(b, dtype=bool)
    else:
        free = np.array(restrict.members if isinstance(restrict, NeighborSet) else restrict, dtype=bool)
        if free.shape != (b,):
            raise InvalidArgument("restriction mask has the wrong length")
        if not free[inputs.target]:
            raise InvalidArgument("restriction must contain the target")
    return free


def _scale(a: np.ndarray, free: np.ndarray, params: QaggParams) -> float:
    if params.step == "curvature":
        c = float(np.max(np.diag(a)[free]))
        if c > 0 and math.isfinite(c):
            return c
    return 1.0


def solve_egd(
    inputs: QaggInputs,
    params: QaggParams = QaggParams(),
    restrict=None,
    return_path: bool = False,
):
    """Minimize the objective over the simplex by exponentiated gradient descent.

    Starts from the uniform vector over the free coordinates (all bags, or
    the members of ``restrict``); non-members stay at 0. A step that would
    raise the objective is rejected, so accepted iterates never increase it;
    the schedule still advances. Returns a :class:`WeightVector`, plus the
    list of accepted iterates when ``return_path``.
    """
    free = _free_mask(inputs, restrict)
    n_bags = inputs.n_bags
    w = np.where(free, 1.0 / free.sum(), 0.0)
    path: List[np.ndarray] = [w.copy()]
    if free.sum() == 1:
        out = WeightVector(w, inputs.target)
        return (out, path) if return_path else out
    a, b = _linear_quadratic(inputs, params)
    scale = _scale(a, free, params)
    if return_path:
        # reference loop so every accepted iterate can be recorded
        egd_loop(a, b, w, free, float(params.eta0), int(n_bags), int(params.t_max), float(params.tol),
                 float(params.gap_tol), scale, float(params.clip), record=path)
    else:
        _backend.egd_loop(
            np.ascontiguousarray(a), np.ascontiguousarray(b), w, free,
            float(params.eta0), int(n_bags), int(params.t_max), float(params.tol),
            float(params.gap_tol), scale, float(params.clip),
        )
    w = np.where(free, np.maximum(w, 0.0), 0.0)
    w /= w.sum()
    out = WeightVector(w, inputs.target)
    return (out, path) if return_path else out
