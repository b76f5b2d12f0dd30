import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from rksampling.bounds import AdmissibilityError, condition_number_bound
from rksampling.kernel import ShiftInvariantKernel
from rksampling.reconstruct import (
    SamplingMatrix,
    SingularGramError,
    build_U,
    condition_number,
    estimate_alpha_p,
    exact_C_K_p2,
    reconstruct,
    reconstruct_ls,
    reconstruction_functions,
    sampling_event_p2,
    verify_condition_bound,
    zeta_witness,
)
from rksampling.sampling import density_constants, draw_samples, uniform_cube
from rksampling.subspace import LatticeBox, build_basis, estimate_C_K, synthesize
from rksampling.weights import moderate_pair, parse_weight


@pytest.fixture(scope="module")
def weighted_basis():
    w = moderate_pair(parse_weight("poly:1"), parse_weight("poly:1"))
    sys = ShiftInvariantKernel.from_spec("bspline", 2, duality="gram_dual", weights=w)
    return build_basis(sys, 3, 2, delta0=1.0)


def box_centres(basis):
    return basis.lattice.points + 0.5


class TestBuildU:
    def test_cardinal_rows(self, box_basis):
        U = build_U(box_basis, box_centres(box_basis))
        assert np.array_equal(U.entries, np.eye(box_basis.dim))
        assert U.shape[1] <= box_basis.lattice.cardinality_bound(box_basis.delta0)

    def test_duplicate_rows(self, spline_basis):
        U = build_U(spline_basis, np.array([0.3, 0.3, -1.2]))
        assert np.array_equal(U.entries[0], U.entries[1])

    def test_empty(self, spline_basis):
        with pytest.raises(ValueError):
            build_U(spline_basis, np.zeros((0, 1)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 2.0, 3.0]))
    def test_sample_norm_identity(self, weighted_basis, seed, p):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(weighted_basis.dim)
        x = rng.uniform(-5, 5, size=(30, 1))
        U = build_U(weighted_basis, x)
        g = synthesize(weighted_basis, c)
        direct = np.sum((np.abs(g(x)) * weighted_basis.nu(x)) ** p)
        assert U.sample_norm(c, p) == pytest.approx(direct, rel=1e-10)

    def test_from_weighted_round_trip(self, weighted_basis, rng):
        x = rng.uniform(-4, 4, size=(12, 1))
        U = build_U(weighted_basis, x)
        V = SamplingMatrix.from_weighted(U.row_weights[:, None] * U.entries, weighted_basis, x)
        assert np.allclose(V.entries, U.entries, rtol=1e-14, atol=0)


class TestLeastSquares:
    def test_plant_and_recover_square(self, spline_basis, rng):
        x = spline_basis.lattice.points + 2.0
        c_true = rng.standard_normal(spline_basis.dim)
        U = build_U(spline_basis, x)
        c, res = reconstruct_ls(U, U.entries @ c_true)
        assert np.allclose(c, c_true, rtol=1e-8, atol=1e-8 * np.max(np.abs(c_true)))
        assert res <= 1e-10

    def test_zero_values(self, spline_basis, rng):
        U = build_U(spline_basis, rng.uniform(-5, 5, size=(20, 1)))
        assert np.all(reconstruct_ls(U, np.zeros(20))[0] == 0)

    def test_too_few_samples(self, spline_basis):
        U = build_U(spline_basis, np.linspace(-2, 2, spline_basis.dim - 1))
        with pytest.raises(ValueError, match="at least dim"):
            reconstruct_ls(U, np.zeros(spline_basis.dim - 1))

    def test_singular(self, box_basis):
        U = build_U(box_basis, np.full(box_basis.dim, 0.5))
        with pytest.raises(SingularGramError, match="more samples"):
            reconstruct_ls(U, np.zeros(box_basis.dim))

    def test_matches_normal_equations(self, weighted_basis, rng):
        U = build_U(weighted_basis, rng.uniform(-4, 5, size=(40, 1)))
        y = rng.standard_normal(40)
        A = U.entries
        literal = np.linalg.solve(A.T @ A, A.T @ y)
        assert np.allclose(reconstruct_ls(U, y)[0], literal, rtol=1e-9, atol=1e-12)

    def test_exact_recovery_rate(self, spline_basis, rng):
        rho = uniform_cube(6.0)
        grid = np.linspace(-6, 6, 601)[:, None]
        ok = flagged = 0
        for t in range(100):
            s = draw_samples(rho, 3 * spline_basis.dim, seed=77, trial=t)
            f = synthesize(spline_basis, rng.standard_normal(spline_basis.dim))
            res = reconstruct(spline_basis, s, f(s.points), truth=f, test_grid=grid)
            if res.gram_condition_flag:
                flagged += 1
            else:
                assert res.max_rel_error <= 1e-8
                ok += 1
        assert ok >= 99 and ok + flagged == 100


class TestReconstructionFunctions:
    def test_reproduces_generators(self, weighted_basis, rng):
        x = rng.uniform(-4, 5, size=(25, 1))
        U = build_U(weighted_basis, x)
        grid = np.linspace(-5, 6, 100)[:, None]
        S = reconstruction_functions(U, weighted_basis, grid)
        assert np.max(np.abs(S @ U.entries - weighted_basis.phi_matrix(grid))) <= 1e-8

    def test_square_interpolation(self, spline_basis):
        x = spline_basis.lattice.points + 2.0
        U = build_U(spline_basis, x)
        assert np.allclose(reconstruction_functions(U, spline_basis, x), np.eye(spline_basis.dim), atol=1e-8)

    def test_partition_of_unity(self, box_basis, rng):
        x = rng.uniform(-3, 4, size=(60, 1))
        U = build_U(box_basis, x)
        grid = np.linspace(-3, 3.999, 200)[:, None]
        assert np.allclose(reconstruction_functions(U, box_basis, grid).sum(axis=1), 1.0, atol=1e-12)


class TestConditionNumber:
    def test_identity(self, box_basis):
        U = build_U(box_basis, box_centres(box_basis))
        k = condition_number(U, 2)
        assert k.value == 1.0 and k.exact
        k1 = condition_number(U, 1, probes=200)
        assert k1.lower == pytest.approx(1.0) and k1.upper == pytest.approx(1.0)

    def test_scaling_invariance(self, weighted_basis, rng):
        U = build_U(weighted_basis, rng.uniform(-4, 5, size=(30, 1)))
        k = condition_number(U, 2).value
        scaled = SamplingMatrix(3.7 * U.entries, U.row_weights, U.col_weights, U.points)
        reweighted = SamplingMatrix(U.entries, 0.2 * U.row_weights, U.col_weights, U.points)
        assert condition_number(scaled, 2).value == pytest.approx(k, rel=1e-12)
        assert condition_number(reweighted, 2).value == pytest.approx(k, rel=1e-12)

    def test_dense_oracle(self, weighted_basis, rng):
        x = rng.uniform(-4, 5, size=(30, 1))
        U = build_U(weighted_basis, x)
        W = weighted_basis.nu(x)[:, None] * weighted_basis.phi_matrix(x) / weighted_basis.nu_lambda[None, :]
        s = scipy.linalg.svdvals(W)
        assert condition_number(U, 2).value == pytest.approx(s[0] / s[-1], rel=1e-10)

    @pytest.mark.parametrize("p", [1.0, 3.0])
    def test_bracket(self, spline_basis, rng, p):
        U = build_U(spline_basis, rng.uniform(-5, 5, size=(30, 1)))
        k = condition_number(U, p, probes=2000, seed=1)
        assert 1.0 <= k.lower <= k.upper and k.width >= 0 and not k.exact

    def test_zeta_witness(self, weighted_basis, rng):
        U = build_U(weighted_basis, rng.uniform(-4, 5, size=(30, 1)))
        W = U.weighted()
        assert zeta_witness(U, 2) == pytest.approx(scipy.linalg.svdvals(W)[-1] ** 2, rel=1e-10)
        assert zeta_witness(U, 1, probes=500) >= 0


class TestAlpha:
    def test_orthonormal_isometry(self, box_basis):
        assert estimate_alpha_p(box_basis, 4.0, trials=200) == pytest.approx(0.95, rel=1e-10)

    def test_no_mass(self, box_kernel):
        far = build_basis(box_kernel, 0, 2, delta0=1.0, lattice=LatticeBox(1, 0, k_lo=2, k_hi=3))
        with pytest.raises(ValueError, match="no mass"):
            estimate_alpha_p(far, 0.01, trials=50)

    def test_below_C_K(self, spline_basis, weighted_basis):
        for b in (spline_basis, weighted_basis):
            assert estimate_alpha_p(b, 7.0, trials=200) <= exact_C_K_p2(b) <= estimate_C_K(b, "formula")

    def test_rejects_radius(self, spline_basis):
        with pytest.raises(ValueError):
            estimate_alpha_p(spline_basis, 0.0)


class TestConditionBound:
    def test_conditional_bound(self, spline_basis):
        rho = uniform_cube(8.0)
        R, gamma = 7.0, 0.04
        c, C = density_constants(rho, R)
        alpha = estimate_alpha_p(spline_basis, R)
        C_K = exact_C_K_p2(spline_basis)
        rep = verify_condition_bound(spline_basis, rho, 3000, gamma, alpha, C_K, c, C, R, trials=30, seed=5)
        assert rep.event_trials > 0 and rep.violations == 0
        assert rep.bound == pytest.approx(condition_number_bound(gamma, c, C, alpha, C_K, 2))
        assert np.all(rep.kappas[rep.events] <= rep.bound)

    def test_vacuous_flag(self, spline_basis):
        rho = uniform_cube(8.0)
        c, C = density_constants(rho, 7.0)
        rep = verify_condition_bound(spline_basis, rho, 20, 0.04, 0.3, 1.0, c, C, 7.0, trials=5, vacuous=True)
        assert rep.vacuous and 0 <= rep.unconditional_fraction <= 1

    def test_gamma_out_of_range(self, spline_basis):
        with pytest.raises(AdmissibilityError):
            verify_condition_bound(spline_basis, uniform_cube(8.0), 20, 0.5, 0.3, 1.0, 0.1, 0.1, 7.0, trials=1)

    def test_event_implies_bound(self, spline_basis):
        rho = uniform_cube(8.0)
        R, gamma = 7.0, 0.04
        c, C = density_constants(rho, R)
        U = build_U(spline_basis, draw_samples(rho, 3000, seed=8))
        held, low, up = sampling_event_p2(spline_basis, U, gamma, c, C, R)
        if held:
            bound = condition_number_bound(gamma, c, C, estimate_alpha_p(spline_basis, R), exact_C_K_p2(spline_basis), 2)
            assert condition_number(U, 2).value <= bound
        assert (low >= 0 and up >= 0) == held

    def test_event_needs_p2(self, cubic_kernel):
        b = build_basis(cubic_kernel, 1, 1, delta0=1.0)
        with pytest.raises(ValueError):
            sampling_event_p2(b, build_U(b, np.linspace(-2, 2, 9)), 0.1, 1, 1, 1)


class TestReconstructResult:
    def test_singular_flag(self, box_basis):
        res = reconstruct(box_basis, np.full(box_basis.dim, 0.5), np.zeros(box_basis.dim))
        assert res.gram_condition_flag and res.fitted is None and math.isinf(res.max_rel_error)

    def test_kappa_bound_reported(self, spline_basis, rng):
        x = rng.uniform(-5, 5, size=(40, 1))
        args = dict(gamma=0.1, c_rho=1.0, C_rho=1.0, alpha_p=1.0, C_K=1.5)
        res = reconstruct(spline_basis, x, np.zeros(40), kappa_args=args)
        assert res.kappa_bound == pytest.approx(condition_number_bound(p=2, **args))
        bad = reconstruct(spline_basis, x, np.zeros(40), kappa_args={**args, "gamma": 0.9})
        assert math.isnan(bad.kappa_bound)
