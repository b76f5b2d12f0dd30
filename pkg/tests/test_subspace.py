import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rksampling.kernel import ShiftInvariantKernel
from rksampling.signals import ZeroFn
from rksampling.subspace import (
    FRAME_MARGIN,
    CoefficientVector,
    LatticeBox,
    analyze,
    build_basis,
    estimate_C_K,
    estimate_C_star,
    lp_norm,
    normalize,
    reproducing_sup,
    sup_norm,
    synthesize,
    truncate_to_VN,
)
from rksampling.weights import WeightSpec, moderate_pair, parse_weight


class TestLattice:
    def test_symmetric_box(self):
        lat = LatticeBox(2, 1.5)
        assert lat.shape == (3, 3) and len(lat) == 9
        assert lat.index_of([-1, 1]) == 2
        assert np.array_equal(lat.lambda_of(2), [-1, 1])

    def test_explicit_range(self):
        lat = LatticeBox(1, 0, k_lo=0, k_hi=1)
        assert len(lat) == 2 and lat.cardinality_bound(0.5) == 2

    @given(N=st.floats(0, 6), delta0=st.sampled_from([1.0, 0.5, 0.25, 2.0**-5]), d=st.integers(1, 2))
    def test_cardinality_bound(self, N, delta0, d):
        assert len(LatticeBox(d, N)) <= LatticeBox(d, N).cardinality_bound(delta0)

    def test_errors(self):
        with pytest.raises(KeyError):
            LatticeBox(1, 2).index_of([3])
        with pytest.raises(KeyError):
            LatticeBox(1, 2).index_of([0.5])
        with pytest.raises(ValueError):
            LatticeBox(1, -1)


class TestCoefficientVector:
    def test_weighted_norm(self):
        lat = LatticeBox(1, 1)
        c = CoefficientVector([1.0, -2.0, 3.0], lat, WeightSpec("polynomial", s=1.0))
        assert c.norm(1) == pytest.approx(2 + 2 + 6)
        assert c.norm(math.inf) == pytest.approx(6)
        assert (c + c.scaled(-1)).norm(2) == 0

    def test_length_check(self):
        with pytest.raises(ValueError):
            CoefficientVector([1.0], LatticeBox(1, 1), WeightSpec())


class TestBuildBasis:
    def test_box_frame_bounds_near_one(self, box_basis):
        fb = box_basis.frame_bounds()
        assert fb.ratio_min == pytest.approx(1.0, abs=1e-10)
        assert fb.ratio_max == pytest.approx(1.0, abs=1e-10)
        assert fb.A == pytest.approx((1 - FRAME_MARGIN) * fb.ratio_min)
        assert fb.B == pytest.approx((1 + FRAME_MARGIN) * fb.ratio_max)

    def test_single_generator(self, box_kernel):
        assert build_basis(box_kernel, 0, 2, delta0=1.0).dim == 1

    def test_gaussian_dimension_bound(self):
        sys = ShiftInvariantKernel.from_spec("gaussian", sigma=0.5)
        b = build_basis(sys, 5, 2, delta0=2.0**-4)
        assert b.dim <= 10 / b.delta0 + 1

    def test_biorthogonality(self, cubic_basis, spline_basis):
        for b in (cubic_basis, spline_basis):
            assert np.max(np.abs(b.analysis_matrix - np.eye(b.dim))) <= 1e-8

    def test_envelope_dominates_generators(self, cubic_basis):
        t = np.linspace(-12, 12, 3001)[:, None]
        env = cubic_basis.envelope_at(t)
        direct = np.abs(cubic_basis.phi_matrix(t + cubic_basis.lattice.points[0])[:, 0])
        direct += np.abs(cubic_basis.dual_matrix(t + cubic_basis.lattice.points[0])[:, 0])
        assert np.all(direct <= env + 1e-12)

    def test_two_dimensional(self):
        sys = ShiftInvariantKernel.from_spec("bspline", 2, duality="gram_dual", d=2)
        b = build_basis(sys, 1, 2, delta0=1.0)
        assert b.dim == 9
        c = np.random.default_rng(0).standard_normal(9)
        assert np.allclose(analyze(b, synthesize(b, c)).values, c, atol=1e-10)


class TestSynthesisAnalysis:
    def test_zero(self, cubic_basis):
        assert np.all(synthesize(cubic_basis, np.zeros(cubic_basis.dim))(np.linspace(-5, 5, 11)) == 0)
        assert np.all(analyze(cubic_basis, ZeroFn()).values == 0)

    def test_one_hot_is_generator(self, spline_basis):
        e = np.zeros(spline_basis.dim)
        e[2] = 1.0
        x = np.linspace(-8, 8, 401)[:, None]
        assert np.allclose(synthesize(spline_basis, e)(x), spline_basis.phi_matrix(x)[:, 2], atol=1e-14)

    def test_analysis_of_generator(self, cubic_basis):
        for mu in range(cubic_basis.dim):
            e = np.zeros(cubic_basis.dim)
            e[mu] = 1.0
            assert np.allclose(analyze(cubic_basis, synthesize(cubic_basis, e)).values, e, atol=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31))
    def test_round_trip(self, seed):
        b = self.basis
        c = np.random.default_rng(seed).standard_normal(b.dim)
        f = synthesize(b, c)
        g = synthesize(b, analyze(b, f))
        x = np.linspace(-8, 8, 1601)
        assert np.max(np.abs(f(x) - g(x))) <= 1e-6

    @pytest.fixture(autouse=True)
    def _basis(self, cubic_basis):
        self.basis = cubic_basis

    def test_synthesis_domination(self, cubic_basis, rng):
        C = cubic_basis.random_coefficients(200, rng)
        assert np.all(cubic_basis.lp_norms(C) <= estimate_C_K(cubic_basis) * cubic_basis.coefficient_norms(C))


class TestNorms:
    def test_box_l1(self, box_basis):
        e = np.zeros(box_basis.dim)
        e[box_basis.lattice.index_of([0])] = 1.0
        assert lp_norm(synthesize(box_basis, e), 1, WeightSpec()) == pytest.approx(1.0, abs=1e-8)

    def test_zero_and_homogeneity(self, cubic_basis, rng):
        f = synthesize(cubic_basis, rng.standard_normal(cubic_basis.dim))
        assert lp_norm(ZeroFn(), 2, WeightSpec()) == 0.0
        assert lp_norm(f * 2.0, 2, WeightSpec()) == pytest.approx(2 * lp_norm(f, 2, WeightSpec()), rel=1e-14)

    def test_grid_norms_agree_with_function_norms(self, spline_basis, rng):
        c = rng.standard_normal(spline_basis.dim)
        f = synthesize(spline_basis, c)
        for p in (1, 2, 3):
            assert spline_basis.lp_norms(c, p) == pytest.approx(lp_norm(f, p, spline_basis.nu), rel=1e-12)
        assert sup_norm(f, spline_basis.nu) >= spline_basis.sup_norms(c) - 1e-15

    def test_cube_domain(self, spline_basis, rng):
        c = rng.standard_normal(spline_basis.dim)
        f = synthesize(spline_basis, c)
        assert lp_norm(f, 2, spline_basis.nu, domain=1.0) < lp_norm(f, 2, spline_basis.nu)
        assert spline_basis.lp_norms(c, domain=1.0) == pytest.approx(lp_norm(f, 2, spline_basis.nu, 1.0), rel=1e-12)

    def test_gram_matches_quadrature(self, spline_basis, rng):
        c = rng.standard_normal(spline_basis.dim)
        assert c @ spline_basis.gram() @ c == pytest.approx(spline_basis.lp_norms(c) ** 2, rel=1e-12)
        assert c @ spline_basis.gram(2.0) @ c == pytest.approx(spline_basis.lp_norms(c, domain=2.0) ** 2, rel=1e-12)


class TestConstants:
    def test_box_C_K_empirical(self, box_basis):
        assert estimate_C_K(box_basis, "empirical") == pytest.approx(1.05, rel=1e-10)

    def test_box_C_star_reproducing(self, box_basis):
        x = np.linspace(-4, 4, 8001)[:, None]
        peak = np.sqrt(np.max(np.sum(box_basis.phi_matrix(x) ** 2, axis=1)))
        assert estimate_C_star(box_basis, "empirical") == pytest.approx(1.05 * peak, rel=1e-10)
        assert reproducing_sup(box_basis)[0] == pytest.approx(peak, rel=1e-10)

    @pytest.mark.parametrize("name", ["box", "cubic", "spline", "hat-poly"])
    def test_empirical_below_formula(self, name, box_basis, cubic_basis, spline_basis):
        if name == "hat-poly":
            w = moderate_pair(parse_weight("poly:1"), parse_weight("poly:1"))
            sys = ShiftInvariantKernel.from_spec("bspline", 2, duality="gram_dual", weights=w)
            b = build_basis(sys, 2, 2, delta0=2.0**-7)
        else:
            b = {"box": box_basis, "cubic": cubic_basis, "spline": spline_basis}[name]
        assert estimate_C_K(b, "empirical") <= estimate_C_K(b, "formula")
        assert estimate_C_star(b, "empirical") <= estimate_C_star(b, "formula")

    def test_formula_reduces_to_one(self, box_kernel):
        b = build_basis(box_kernel, 0, 2, delta0=1.0, K_delta0_surrogate=1.0)
        C0, KW, env = b.weights.C0, b.K_W, b.envelope_L1()
        expected = math.sqrt(C0**2 * (1.0 * 1.0 * KW) * env)
        assert b.C_K_formula() == pytest.approx(expected, rel=1e-14)

    def test_bad_mode(self, box_basis):
        with pytest.raises(ValueError):
            estimate_C_K(box_basis, "guess")


class TestNormalize:
    def test_unit_norm_and_idempotent(self, spline_basis, rng):
        f = synthesize(spline_basis, rng.standard_normal(spline_basis.dim))
        g = normalize(spline_basis, f)
        assert spline_basis.lp_norms(g.coefficients.values) == pytest.approx(1.0, abs=1e-10)
        x = np.linspace(-6, 6, 101)
        assert np.allclose(normalize(spline_basis, g)(x), g(x), atol=1e-12)
        assert np.allclose(normalize(spline_basis, f * 2.0)(x), g(x), atol=1e-12)

    def test_zero(self, spline_basis):
        with pytest.raises(ValueError):
            normalize(spline_basis, synthesize(spline_basis, np.zeros(spline_basis.dim)))


@pytest.fixture(scope="module")
def wide(cubic_gram_kernel):
    return build_basis(cubic_gram_kernel, 24, 2, delta0=1.0)


class TestTruncation:
    def test_already_inside(self, wide):
        c = np.where(np.abs(wide.lattice.points[:, 0]) <= 2, 1.0, 0.0)
        res = truncate_to_VN(synthesize(wide, c), 2, 1e-6, 4)
        assert res.N_used == 2 and res.eps_p == 0 and res.eps_inf == 0

    def test_geometric_tail(self, wide):
        c = 2.0 ** -np.abs(wide.lattice.points[:, 0])
        res = truncate_to_VN(synthesize(wide, c), 1, 1e-4, 4)
        assert res.eps_p <= 1e-4 and res.eps_inf <= 1e-4 / 8
        assert res.N_used < 24

    def test_vacuous_tolerance(self, wide):
        c = 2.0 ** -np.abs(wide.lattice.points[:, 0])
        assert truncate_to_VN(synthesize(wide, c), 3, 1e3, 4).N_used == 3

    def test_full_lattice_ends_schedule(self, wide):
        res = truncate_to_VN(synthesize(wide, np.ones(wide.dim)), 1, 1e-12, 30)
        assert [row[0] for row in res.schedule] == [1, 2, 4, 8, 16, 24]
        assert res.N_used == 24 and res.eps_p == 0 and res.eps_inf == 0
