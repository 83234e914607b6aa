import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multimean.exceptions import InvalidArgument
from multimean.theory import Partition, aggregated_variance, b_oracle, l_star, l_star_bounds, nu_relative
from multimean.theory import tau_min, tau_pm


class TestBOracle:
    @pytest.mark.parametrize("nu", [0.0, 0.3, 1.0])
    def test_no_bias(self, nu):
        assert b_oracle(0.0, nu) == pytest.approx(nu, abs=1e-15)

    @pytest.mark.parametrize("tau", [1.0, 5.0])
    def test_no_variance(self, tau):
        assert b_oracle(tau, 0.0) == pytest.approx(tau / (1 + tau), abs=1e-15)

    def test_hand_value(self):
        assert b_oracle(1.0, 0.5) == pytest.approx(2.0 / 3.0)

    def test_full_variance(self):
        assert b_oracle(3.7, 1.0) == 1.0
        assert b_oracle(math.inf, 0.2) == 1.0

    def test_vectorized(self):
        out = b_oracle(np.array([0.0, 1.0]), np.array([0.3, 0.0]))
        np.testing.assert_allclose(out, [0.3, 0.5])

    @pytest.mark.parametrize("tau,nu", [(-1.0, 0.5), (1.0, 1.5), (1.0, -0.1), (np.nan, 0.5)])
    def test_domain(self, tau, nu):
        with pytest.raises(InvalidArgument):
            b_oracle(tau, nu)

    def test_grid_monotone(self):
        t = np.linspace(0, 10, 101)
        n = np.linspace(0, 1, 101)
        g = b_oracle(t[:, None], n[None, :])
        assert np.all(np.diff(g, axis=0) >= -1e-15)
        assert np.all(np.diff(g, axis=1) >= -1e-15)

    @given(st.floats(0, 1e6), st.floats(0, 1))
    def test_range(self, tau, nu):
        v = b_oracle(tau, nu)
        assert tau / (1 + tau) - 1e-12 <= v <= 1 + 1e-12

    @given(st.floats(0, 100), st.floats(0, 1), st.floats(0, 100), st.floats(0, 1))
    def test_monotone(self, t, n, dt, dn):
        assert b_oracle(t + dt, n) >= b_oracle(t, n) - 1e-12
        assert b_oracle(t, min(n + dn, 1.0)) >= b_oracle(t, n) - 1e-12


class TestNu:
    def test_target_only(self):
        assert nu_relative([2.0, 5.0], [0], 0) == 1.0

    def test_equal_risks(self):
        assert nu_relative([3.0] * 4, range(4), 2) == pytest.approx(0.25)

    def test_hand_value(self):
        assert nu_relative([1.0, 3.0], [0, 1], 0) == pytest.approx(0.75)

    @given(st.floats(1e-3, 1e3))
    def test_singleton_is_one(self, s):
        assert nu_relative([s], [0], 0) == 1.0
        assert b_oracle(2.0, nu_relative([s], [0], 0)) == 1.0

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            aggregated_variance([1.0], [])
        with pytest.raises(InvalidArgument):
            nu_relative([1.0, 2.0], [1], 0)
        with pytest.raises(InvalidArgument):
            aggregated_variance([0.0, 1.0], [0, 1])


class TestPartition:
    def test_validation(self):
        with pytest.raises(InvalidArgument):
            Partition([[0, 1], [1]], [0, 0])
        with pytest.raises(InvalidArgument):
            Partition([[0], [2]], [0, 0])
        with pytest.raises(InvalidArgument):
            Partition([[0]], [-1.0])
        with pytest.raises(InvalidArgument):
            Partition([[0]], [])
        with pytest.raises(InvalidArgument):
            Partition([[0], []], [0.0, 0.0])

    def test_from_means(self):
        p = Partition.from_means([[0, 0], [3, 4], [10, 10]], [[0, 1], [2]])
        assert p.diameters == (5.0, 0.0)
        assert p.n_bags == 3


class TestLStar:
    def test_single_group(self):
        assert l_star([2.0] * 5, Partition([range(5)], [0.0])) == pytest.approx(0.2)

    def test_singletons(self):
        p = Partition([[k] for k in range(4)], [0.0, 1.0, 2.0, 0.5])
        assert l_star([1.0, 2.0, 0.3, 4.0], p) == pytest.approx(1.0)
        assert l_star_bounds([1.0, 2.0, 0.3, 4.0], p)[1] == 1.0

    def test_zero_diameters(self):
        p = Partition([[0, 1, 2], [3, 4, 5, 6, 7], [8, 9]], [0.0, 0.0, 0.0])
        assert l_star_bounds(np.ones(10), p)[1] == pytest.approx(3 / 10)

    def test_bounds_equal_risks(self):
        p = Partition([[0, 1, 2, 3], [4, 5, 6, 7]], [1.0, 1.0])
        ls = l_star(np.ones(8), p)
        glob = l_star_bounds(np.ones(8), p)[1]
        assert glob / 2.7 <= ls <= glob

    def test_errors(self):
        p = Partition([[0, 1]], [0.0])
        with pytest.raises(InvalidArgument):
            l_star([1.0], p)
        with pytest.raises(InvalidArgument):
            l_star([1.0, 0.0], p)

    @given(st.integers(0, 2**31))
    def test_chain(self, seed):
        rng = np.random.default_rng(seed)
        b = int(rng.integers(2, 30))
        j = int(rng.integers(1, b + 1))
        labels = np.concatenate([np.arange(j), rng.integers(0, j, b - j)])
        rng.shuffle(labels)
        groups = [list(np.flatnonzero(labels == g)) for g in range(j)]
        p = Partition(groups, rng.uniform(0, 3, j))
        s2 = rng.uniform(0.1, 3.0, b)
        ls = l_star(s2, p)
        per, glob = l_star_bounds(s2, p)
        assert ls <= per + 1e-12
        assert per <= glob + 1e-12


class TestTauMin:
    def test_values(self):
        tm = tau_min(40.0, 40.0, 400.0, 400.0, 0.05)
        assert tm == pytest.approx(32 * (2 / 20) * math.log(160.0))
        assert tm == pytest.approx(16.240556208748245, rel=1e-12)
        plus, minus = tau_pm(2.2, tm)
        assert plus == pytest.approx((math.sqrt(2.2) + math.sqrt(tm)) ** 2)
        assert plus == pytest.approx(30.3950, abs=1e-3)
        assert minus == 0.0

    def test_minus_positive(self):
        plus, minus = tau_pm(9.0, 4.0)
        assert (plus, minus) == (25.0, 1.0)

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            tau_min(0.0, 1.0, 1.0, 1.0)
        with pytest.raises(InvalidArgument):
            tau_pm(-1.0, 1.0)
