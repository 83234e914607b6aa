"""Estimation of many means by convex aggregation of per-bag empirical means."""

from multimean._backend import NAME as BACKEND
from multimean.core import Bag, Dataset, TaskStats, WeightVector, aggregate, effective_dims, load_csv, naive_mean
from multimean.estimators import (
    MobConfig,
    compute_stats,
    median_of_blocks,
    s2_hat,
    u_distance,
    z1_trace,
    z2_schatten,
)
from multimean.exceptions import *  # noqa: F401,F403
from multimean.kernels import KernelSpec
from multimean.neighbors import NeighborSet, TestConfig, similarity_test, tau_tilde, whittle
from multimean.qagg import QaggParams, build_inputs, solve_egd
from multimean.weights import oracle_weights, orth_weights, uniform_boost_weights

__version__ = "0.1.0"
