import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from multimean import Bag, Dataset, KernelSpec, MobConfig, compute_stats, median_of_blocks, s2_hat, u_distance
from multimean import z1_trace, z2_schatten
from multimean.estimators import compute_all_stats, tr_sigma2_hat, u_row, z2_squared
from multimean.exceptions import BlockTooSmall, InsufficientSamples, InvalidArgument

LIN = KernelSpec("linear")

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def bag_arrays(min_n=4, max_n=9, max_d=4):
    return st.tuples(st.integers(min_n, max_n), st.integers(1, max_d)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


class TestNaiveRisk:
    def test_two_points(self):
        assert s2_hat(Bag([0.0, 2.0])) == pytest.approx(1.0)
        assert z1_trace(Bag([0.0, 2.0])) == pytest.approx(2.0)

    def test_identical_points(self):
        b = Bag(np.ones((5, 3)))
        assert s2_hat(b) == 0.0
        assert z1_trace(b) == 0.0

    def test_matches_loop_oracle(self, rng):
        x = rng.standard_normal((7, 3))
        assert s2_hat(Bag(x)) == pytest.approx(oracles.s2_literal(x), rel=1e-12)

    def test_needs_two(self):
        with pytest.raises(InsufficientSamples):
            s2_hat(Bag([[1.0]]))

    def test_kernel_linear_agrees(self, rng):
        b = Bag(rng.standard_normal((6, 4)))
        assert s2_hat(b, LIN) == pytest.approx(s2_hat(b), abs=1e-10)

    def test_z1_is_n_times_s2(self, rng):
        b = Bag(rng.standard_normal((9, 2)))
        assert z1_trace(b) == 9 * s2_hat(b)


class TestSchatten:
    def test_hand_enumeration(self):
        b = Bag([-1.0, 1.0, -1.0, 1.0])
        assert z2_squared(b) == pytest.approx(8.0 / 3.0, rel=1e-12)
        assert z2_schatten(b) == pytest.approx(1.632993161855452, rel=1e-12)

    def test_enumeration_oracle_vector(self, rng):
        x = rng.standard_normal((7, 3))
        assert tr_sigma2_hat(Bag(x)) == pytest.approx(oracles.tr_sigma2_enum(x @ x.T), rel=1e-9)

    def test_wide_and_tall_branches_agree(self, rng):
        # n <= d uses the N x N Gram, n > d the d x d covariance
        x = rng.standard_normal((6, 6))
        tall = tr_sigma2_hat(Bag(x[:, :5]))
        assert tall == pytest.approx(oracles.tr_sigma2_enum(x[:, :5] @ x[:, :5].T), rel=1e-9)
        wide = tr_sigma2_hat(Bag(x))
        assert wide == pytest.approx(oracles.tr_sigma2_enum(x @ x.T), rel=1e-9)

    def test_identical_points(self):
        assert z2_schatten(Bag(np.zeros((5, 2)))) == 0.0

    def test_needs_four(self):
        with pytest.raises(InsufficientSamples):
            z2_schatten(Bag(np.zeros((3, 2))))

    def test_kernel_exact_matches_enumeration(self, rng):
        x = rng.standard_normal((6, 2))
        k = oracles.rbf(0.8)
        g = np.array([[k(a, b) for b in x] for a in x])
        assert z2_squared(Bag(x), KernelSpec("gaussian", 0.8), exact_cutoff=None) == pytest.approx(
            oracles.tr_sigma2_enum(g), rel=1e-9
        )

    def test_kernel_linear_agrees(self, rng):
        b = Bag(rng.standard_normal((8, 3)))
        assert z2_squared(b, LIN) == pytest.approx(z2_squared(b), abs=1e-10)


class TestUDistance:
    def test_hand_value(self):
        a = Bag([[1.0, 0.0], [1.0, 0.0]])
        b = Bag([[0.0, 1.0], [0.0, 1.0]])
        assert u_distance(a, b) == pytest.approx(2.0)
        assert u_distance(a, b, LIN) == pytest.approx(2.0, abs=1e-10)

    def test_duplicate_point_bags(self):
        a = Bag(np.full((3, 2), 4.0))
        assert u_distance(a, a) == 0.0

    def test_literal_oracle(self, rng):
        xa, xb = rng.standard_normal((5, 3)), rng.standard_normal((4, 3)) + 1.0
        assert u_distance(Bag(xa), Bag(xb)) == pytest.approx(oracles.u_literal(xa, xb), rel=1e-10)

    def test_gaussian_kernel_literal_oracle(self, rng):
        xa, xb = rng.standard_normal((5, 2)), rng.standard_normal((4, 2))
        got = u_distance(Bag(xa), Bag(xb), KernelSpec("gaussian", 1.3))
        assert got == pytest.approx(oracles.u_literal(xa, xb, oracles.rbf(1.3)), rel=1e-10)

    def test_may_be_negative(self, rng):
        a = Bag(rng.standard_normal((5, 3)))
        assert u_distance(a, a) == pytest.approx(-2.0 * s2_hat(a))

    def test_row(self, rng):
        ds = Dataset([rng.standard_normal((5, 2)) + i for i in range(4)])
        row = u_row(ds, 1)
        want = [u_distance(ds.bags[1], b) for b in ds.bags]
        np.testing.assert_allclose(row, want, rtol=1e-10, atol=1e-12)
        dk = Dataset([b.samples for b in ds.bags], LIN)
        np.testing.assert_allclose(u_row(dk, 1), want, atol=1e-10)

    def test_needs_two(self):
        with pytest.raises(InsufficientSamples):
            u_distance(Bag([[0.0]]), Bag([[1.0], [2.0]]))


class TestProperties:
    @given(bag_arrays(), bag_arrays())
    def test_u_symmetric(self, xa, xb):
        d = min(xa.shape[1], xb.shape[1])
        a, b = Bag(xa[:, :d]), Bag(xb[:, :d])
        assert u_distance(a, b) == u_distance(b, a)
        assert u_distance(a, b, LIN) == u_distance(b, a, LIN)

    @given(bag_arrays(), st.floats(-50, 50))
    def test_translation_invariance(self, x, shift):
        b, t = Bag(x), Bag(x + shift)
        scale = 1.0 + float(np.sum(x**2)) + shift**2 * x.size
        assert abs(s2_hat(t) - s2_hat(b)) <= 1e-9 * scale
        assert abs(z2_squared(t) - z2_squared(b)) <= 1e-9 * scale**2

    @given(bag_arrays(), bag_arrays(), st.floats(-50, 50))
    def test_u_translation_invariance(self, xa, xb, shift):
        d = min(xa.shape[1], xb.shape[1])
        xa, xb = xa[:, :d], xb[:, :d]
        scale = 1.0 + float(np.sum(xa**2) + np.sum(xb**2)) + shift**2 * (xa.size + xb.size)
        diff = u_distance(Bag(xa + shift), Bag(xb + shift)) - u_distance(Bag(xa), Bag(xb))
        assert abs(diff) <= 1e-9 * scale

    @given(bag_arrays(), bag_arrays(), st.floats(0.1, 10))
    def test_scaling(self, xa, xb, c):
        d = min(xa.shape[1], xb.shape[1])
        a, b = Bag(xa[:, :d]), Bag(xb[:, :d])
        ca, cb = Bag(c * xa[:, :d]), Bag(c * xb[:, :d])
        s = 1.0 + float(np.sum(xa**2) + np.sum(xb**2))
        assert s2_hat(ca) == pytest.approx(c**2 * s2_hat(a), rel=1e-9, abs=1e-9 * c**2 * s)
        assert z1_trace(ca) == pytest.approx(c**2 * z1_trace(a), rel=1e-9, abs=1e-9 * c**2 * s)
        assert z2_squared(ca) == pytest.approx(c**4 * z2_squared(a), rel=1e-9, abs=1e-9 * c**4 * s**2)
        assert u_distance(ca, cb) == pytest.approx(c**2 * u_distance(a, b), rel=1e-9, abs=1e-9 * c**2 * s)

    @given(bag_arrays())
    def test_linear_kernel_agreement(self, x):
        b = Bag(x)
        s = 1.0 + float(np.sum(x**2))
        assert abs(s2_hat(b, LIN) - s2_hat(b)) <= 1e-10 * s
        assert abs(z2_squared(b, LIN) - z2_squared(b)) <= 1e-10 * s**2


class TestMedianOfBlocks:
    def test_single_block_is_raw(self, rng):
        a, b = Bag(rng.standard_normal((6, 2))), Bag(rng.standard_normal((7, 2)))
        assert median_of_blocks("u_distance", [a, b], MobConfig(1)) == u_distance(a, b)
        assert median_of_blocks("z1_trace", [a], MobConfig(1)) == z1_trace(a)
        assert median_of_blocks("z2_squared", [a], MobConfig(1)) == z2_squared(a)

    def test_pairwise_blocks_unshuffled(self):
        xa = np.array([[0.0], [1.0], [4.0], [6.0]])
        xb = np.array([[10.0], [10.0], [3.0], [5.0]])
        got = median_of_blocks("u_distance", [Bag(xa), Bag(xb)], MobConfig(2, shuffle=False))
        vals = sorted(oracles.u_literal(xa[s], xb[s]) for s in (slice(0, 2), slice(2, 4)))
        # lower median of two blocks
        assert got == pytest.approx(vals[0])

    def test_odd_block_median(self):
        x = np.arange(12.0)[:, None] ** 2
        got = median_of_blocks("z1_trace", [Bag(x)], MobConfig(3, shuffle=False))
        vals = sorted(z1_trace(Bag(x[i : i + 4])) for i in (0, 4, 8))
        assert got == pytest.approx(vals[1])

    def test_block_too_small(self):
        with pytest.raises(BlockTooSmall):
            median_of_blocks("u_distance", [Bag(np.zeros((5, 1))), Bag(np.zeros((4, 1)))], MobConfig(3))
        with pytest.raises(BlockTooSmall):
            median_of_blocks("z2_squared", [Bag(np.arange(7.0))], MobConfig(2))

    def test_seeded_shuffle_reproducible(self, rng):
        a, b = Bag(rng.standard_normal((20, 2))), Bag(rng.standard_normal((20, 2)))
        v1 = median_of_blocks("u_distance", [a, b], MobConfig(4), rng=np.random.default_rng(3))
        v2 = median_of_blocks("u_distance", [a, b], MobConfig(4), rng=np.random.default_rng(3))
        assert v1 == v2

    def test_config(self):
        assert MobConfig.from_confidence(2.3).blocks == 3
        with pytest.raises(InvalidArgument):
            MobConfig(0)
        with pytest.raises(InvalidArgument):
            MobConfig.from_confidence(0.0)
        with pytest.raises(InvalidArgument):
            median_of_blocks("nope", [Bag(np.zeros((4, 1)))], MobConfig(1))

    def test_heavy_tails(self):
        rng = np.random.default_rng(7)
        d, n, trials = 10, 200, 2000
        delta = np.zeros(d)
        delta[0] = 1.0
        truth = 1.0
        raw = np.empty(trials)
        mob = np.empty(trials)
        for t in range(trials):
            a = Bag(rng.standard_t(5, size=(n, d)))
            b = Bag(rng.standard_t(5, size=(n, d)) + delta)
            raw[t] = abs(u_distance(a, b) - truth)
            mob[t] = abs(median_of_blocks("u_distance", [a, b], MobConfig(8), rng=rng) - truth)
        assert np.quantile(mob, 0.99) < np.quantile(raw, 0.99)


class TestComputeStats:
    def test_fields(self, rng):
        x = rng.standard_normal((10, 4))
        ds = Dataset([x, x + 1.0])
        st0 = compute_stats(ds, 0, with_de=True)
        assert st0.s2_hat == pytest.approx(oracles.s2_literal(x))
        assert st0.z1 == pytest.approx(10 * st0.s2_hat)
        assert st0.z2 == pytest.approx(math.sqrt(max(oracles.tr_sigma2_enum(x @ x.T), 0.0)), rel=1e-9)
        assert st0.dstar_hat == pytest.approx(st0.z1 / st0.z2)
        xc = x - x.mean(0)
        assert st0.de_hat == pytest.approx(st0.z1 / np.linalg.eigvalsh(xc.T @ xc / 9)[-1])
        assert st0.size == 10

    def test_constant_bag(self):
        ds = Dataset([np.zeros((5, 2))])
        st0 = compute_stats(ds, 0)
        assert st0.z2 == 0.0 and st0.dstar_hat == 0.0

    def test_kernel_mode_matches(self, rng):
        bags = [rng.standard_normal((6, 3)) for _ in range(3)]
        vec = compute_all_stats(Dataset(bags))
        ker = compute_all_stats(Dataset(bags, LIN))
        for a, b in zip(vec, ker):
            np.testing.assert_allclose([a.s2_hat, a.z1, a.z2], [b.s2_hat, b.z1, b.z2], rtol=1e-9)

    def test_needs_four(self):
        with pytest.raises(InsufficientSamples):
            compute_stats(Dataset([np.zeros((3, 2))]), 0)
