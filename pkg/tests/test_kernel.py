import numpy as np
import pytest

from ntk_influence import Dataset, gram, init_network, ntk_value
from ntk_influence.datasets import normalize_rows
from ntk_influence.errors import ConditioningError, DomainError, ShapeError
from ntk_influence.kernel import (
    KernelMatrix,
    cross,
    cross_many,
    empirical_kernel,
    jitter_for,
)


def _unit(d, seed):
    return normalize_rows(np.random.default_rng(seed).standard_normal((1, d)))[0]


class TestClosedForm:
    """Anchor values of k(x, x') = s (pi - arccos s) / (2 pi)."""

    def test_identical_inputs_give_half(self):
        e0 = np.zeros(9)
        e0[0] = 1.0  # inner product is exactly 1.0, so the value is exactly 0.5
        assert ntk_value(e0, e0) == 0.5
        # a float-normalized vector puts s within one ulp of 1; arccos
        # amplifies that ulp to ~1e-8 in the value
        x = _unit(9, 0)
        assert ntk_value(x, x) == pytest.approx(0.5, abs=1e-7)

    def test_antipodal_inputs_give_zero(self):
        e0 = np.zeros(9)
        e0[0] = 1.0
        assert ntk_value(e0, -e0) == 0.0
        x = _unit(9, 1)  # ulp-level norm error amplified by arccos near s = -1
        assert ntk_value(x, -x) == pytest.approx(0.0, abs=1e-7)

    def test_orthogonal_inputs_give_zero(self):
        x = np.zeros(4)
        x[0] = 1.0
        y = np.zeros(4)
        y[2] = 1.0
        assert ntk_value(x, y) == pytest.approx(0.0, abs=1e-15)

    def test_sixty_degrees_gives_one_sixth(self):
        x = np.array([1.0, 0.0])
        y = np.array([0.5, np.sqrt(3.0) / 2.0])
        assert ntk_value(x, y) == pytest.approx(1.0 / 6.0, abs=1e-12)

    def test_monte_carlo_oracle(self):
        # k(x, x') = E_w[ <x,x'> 1{w.x>=0} 1{w.x'>=0} ] over w ~ N(0, I)
        rng = np.random.default_rng(7)
        x = _unit(6, 2)
        y = _unit(6, 3)
        w = rng.standard_normal((2_000_000, 6))
        mc = float(np.mean((w @ x >= 0) & (w @ y >= 0)) * np.dot(x, y))
        assert ntk_value(x, y) == pytest.approx(mc, abs=2e-3)

    def test_non_unit_input_rejected(self):
        with pytest.raises(DomainError):
            ntk_value(np.array([1.0, 1.0]), np.array([1.0, 0.0]))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ntk_value(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


class TestGram:
    def test_matches_pairwise_double_loop(self, small_data, small_kernel):
        n = small_data.n
        direct = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                direct[i, j] = ntk_value(small_data.inputs[i], small_data.inputs[j])
        # the double loop reproduces the diagonal only to arccos ulp noise;
        # gram pins it at the exact closed-form value
        np.testing.assert_allclose(np.diagonal(direct), 0.5, atol=1e-7, rtol=0)
        np.fill_diagonal(direct, 0.5)
        np.testing.assert_allclose(small_kernel.values, direct, atol=1e-12, rtol=0)

    def test_diagonal_is_exactly_half(self, small_kernel):
        np.testing.assert_array_equal(np.diagonal(small_kernel.values), 0.5)

    def test_exactly_symmetric(self, small_kernel):
        np.testing.assert_array_equal(small_kernel.values, small_kernel.values.T)

    def test_psd_within_tolerance(self, small_kernel):
        assert small_kernel.lambda_min >= -1e-10

    def test_eig_extremes_match_dense_spectrum(self, small_kernel):
        w = np.linalg.eigvalsh(small_kernel.values)
        assert small_kernel.lambda_min == pytest.approx(w[0], rel=1e-10, abs=1e-12)
        assert small_kernel.lambda_max == pytest.approx(w[-1], rel=1e-10)

    def test_duplicate_points_stay_finite(self):
        x = np.tile(_unit(5, 4), (3, 1))
        k = gram(Dataset(x, np.ones(3)))
        assert np.all(np.isfinite(k.values))
        np.testing.assert_allclose(k.values, 0.5, atol=1e-15)

    def test_indefinite_matrix_rejected(self):
        with pytest.raises(ConditioningError):
            KernelMatrix.from_values(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_submatrix_is_exact_slice(self, small_kernel):
        keep = np.array([0, 2, 5, 9])
        sub = small_kernel.submatrix(keep)
        np.testing.assert_array_equal(sub.values, small_kernel.values[np.ix_(keep, keep)])


class TestCross:
    def test_matches_scalar_kernel(self, small_data):
        t = _unit(small_data.dim, 5)
        c = cross(small_data, t)
        direct = [ntk_value(row, t) for row in small_data.inputs]
        np.testing.assert_allclose(c.values, direct, atol=1e-12, rtol=0)

    def test_test_point_equal_to_training_point(self, small_data):
        c = cross(small_data, small_data.inputs[4])
        assert c.values[4] == pytest.approx(0.5, abs=1e-12)

    def test_cross_many_stacks_rows(self, small_data):
        t = normalize_rows(np.random.default_rng(6).standard_normal((3, small_data.dim)))
        block = cross_many(small_data, t)
        for i in range(3):
            # one GEMM vs per-row GEMV: BLAS accumulation order differs at the ulp
            np.testing.assert_allclose(block[i], cross(small_data, t[i]).values, atol=1e-14, rtol=0)

    def test_dimension_mismatch(self, small_data):
        with pytest.raises(ShapeError):
            cross(small_data, _unit(small_data.dim + 1, 0))


class TestJitter:
    def test_strictly_pd_kernel_needs_none(self, small_kernel):
        if small_kernel.lambda_min >= 1e-10:
            assert jitter_for(small_kernel) == 0.0

    def test_rank_deficient_kernel_gets_trace_scaled_shift(self):
        # gram() on duplicated rows is *not* exactly singular (arccos ulp noise
        # keeps lambda_min ~ 1e-9), so build an exactly rank-one matrix directly
        k = KernelMatrix.from_values(np.full((4, 4), 0.5))
        assert k.lambda_min < 1e-10
        assert jitter_for(k) == pytest.approx(1e-10 * np.trace(k.values) / 4)


class TestEmpiricalKernel:
    """Finite-width activation-counting kernel and its convergence."""

    def test_matches_explicit_feature_map(self, small_data):
        net = init_network(m=64, d=small_data.dim, kappa=0.5, seed=0)
        km = empirical_kernel(net, small_data)
        x = small_data.inputs
        active = (x @ net.weights.T.astype(np.float64) >= 0).astype(np.float64)
        direct = (x @ x.T) * (active @ active.T) / net.m
        np.testing.assert_allclose(km.values, direct, atol=1e-8, rtol=0)

    def test_blocking_does_not_change_the_result(self, small_data):
        net = init_network(m=300, d=small_data.dim, kappa=0.1, seed=1)
        a = empirical_kernel(net, small_data, block=300)
        b = empirical_kernel(net, small_data, block=7)
        np.testing.assert_array_equal(a.values, b.values)

    def test_cross_block_shape_and_agreement(self, small_data):
        net = init_network(m=128, d=small_data.dim, kappa=0.1, seed=2)
        t = normalize_rows(np.random.default_rng(3).standard_normal((5, small_data.dim)))
        km, kc = empirical_kernel(net, small_data, test_inputs=t)
        assert kc.shape == (5, small_data.n)
        km2 = empirical_kernel(net, small_data)
        np.testing.assert_array_equal(km.values, km2.values)

    def test_converges_to_closed_form(self, small_data, small_kernel):
        errs = []
        for m in (100, 1000, 10000):
            per_seed = [
                np.linalg.norm(
                    empirical_kernel(
                        init_network(m, small_data.dim, 0.01, seed), small_data
                    ).values
                    - small_kernel.values,
                    2,
                )
                for seed in range(3)
            ]
            errs.append(np.mean(per_seed))
        assert errs[0] > errs[1] > errs[2]
