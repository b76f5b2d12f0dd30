import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rksampling.bounds import (
    AdmissibilityError,
    ConstantsBundle,
    bernstein_bound,
    condition_number_bound,
    covering_ball_bound,
    covering_sphere_bound,
    deviation_constants,
    deviation_tail,
    greedy_net_oracle,
    required_sample_size,
    scan_C3,
    scan_C4,
    stability_constants_LU,
    stability_probability,
    xj_moment_bounds,
)
from rksampling.subspace import build_basis


class TestCovering:
    @pytest.mark.parametrize("s,eps,eta,expected", [(1, 1, 1, 3), (2, 1, 2, 4), (3, 1, 0.5, 125)])
    def test_ball_examples(self, s, eps, eta, expected):
        assert covering_ball_bound(s, eps, eta) == expected

    @given(s1=st.integers(1, 6), s2=st.integers(1, 6), eps=st.floats(0.1, 5), eta=st.floats(0.1, 5))
    def test_ball_multiplicative(self, s1, s2, eps, eta):
        prod = covering_ball_bound(s1, eps, eta) * covering_ball_bound(s2, eps, eta)
        assert covering_ball_bound(s1 + s2, eps, eta) == pytest.approx(prod, rel=1e-12)

    @pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, 0)])
    def test_ball_rejects(self, args):
        with pytest.raises(ValueError):
            covering_ball_bound(*args)

    def test_sphere_examples(self):
        assert covering_sphere_bound(1, 1, 1, 2)[0] == pytest.approx(8, rel=1e-12)
        assert covering_sphere_bound(1, 1, 1, 0.5, C_star=1)[0] == pytest.approx(125, rel=1e-12)

    @given(eta=st.floats(0.05, 4), N=st.floats(0, 4))
    def test_sphere_unit_C_star_matches_lp_form(self, eta, N):
        assert covering_sphere_bound(N, 1, 0.5, eta, C_star=1.0) == covering_sphere_bound(N, 1, 0.5, eta)

    def test_sphere_log_domain_overflow(self):
        value, log_value = covering_sphere_bound(400, 2, 2.0**-5, 0.01)
        assert value == math.inf and math.isfinite(log_value) and log_value > 700


class TestGreedyNet:
    def test_large_eta_single_centre(self, box_kernel):
        b = build_basis(box_kernel, 1, 2, delta0=1.0)
        res = greedy_net_oracle(b, 2.5 * 1.05 * 2, 100, seed=1)
        assert res.size == 1

    def test_one_dimensional_sphere(self, box_kernel):
        b = build_basis(box_kernel, 0, 2, delta0=1.0)
        res = greedy_net_oracle(b, 0.1, 2000, seed=2)
        assert res.size == 2 and res.size <= res.bound

    def test_box_dim3_below_bound(self, box_kernel):
        b = build_basis(box_kernel, 1, 2, delta0=1.0)
        res = greedy_net_oracle(b, 0.5, 40000, seed=3)
        assert 2 < res.size <= res.bound

    def test_budget_below_requirement(self, box_kernel):
        b = build_basis(box_kernel, 1, 2, delta0=1.0)
        with pytest.raises(ValueError):
            greedy_net_oracle(b, 0.5, 10, seed=0)


class TestBernstein:
    def test_zero_lambda_clipped(self):
        assert bernstein_bound(10, 1, 1, 0.0) == 1.0

    def test_oracle_value(self):
        expected = 2 * math.exp(-2500 / (200 + 100 / 3))
        assert bernstein_bound(100, 1, 1, 50) == pytest.approx(expected, rel=1e-12)
        assert math.exp(-2500 / (200 + 100 / 3)) == pytest.approx(2.2e-5, rel=0.02)

    def test_monotone_in_lambda(self):
        v = bernstein_bound(50, 0.3, 1.0, np.linspace(0, 40, 200))
        assert np.all(np.diff(v) <= 0) and v[-1] < 1e-6

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            bernstein_bound(10, 1, 1, -1.0)

    def test_degenerate_variance(self):
        assert bernstein_bound(0, 0, 0, 1.0) == 0.0


class TestMomentBounds:
    def test_equal_functions(self):
        b = xj_moment_bounds(2, 1.5, 2.0, 1.0, 2.0, 1.0, 0.0)
        assert b[1] == 0 and b[3] == 0

    def test_p_one_difference(self):
        assert xj_moment_bounds(1, 1.0, 3.0, 1.0, 5.0, 2.0, 0.25)[1] == pytest.approx(0.5)

    def test_variance_substitution(self):
        assert xj_moment_bounds(2, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0)[2] == 1.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            xj_moment_bounds(2, 1.0, -1.0, 1.0, 1.0, 1.0, 0.0)


class TestDeviationConstants:
    def test_C3_exact(self):
        assert scan_C3() == (Fraction(1, 324), 12)

    def test_C4_exact(self):
        sq, arg = scan_C4()
        assert arg == 3 and 64 * sq == 72
        c = deviation_constants(1.0, 1, 1.0, 1.0, 1.0)
        assert c.C4 == pytest.approx(6 * math.sqrt(2) * math.log(2), rel=1e-14)
        assert round(c.C4, 3) == 5.882

    def test_B_p2_unit_C_star(self):
        assert deviation_constants(2.0, 1, 1.0, 1.0, 1.0).B == pytest.approx(math.sqrt(2) / 5184, rel=1e-14)

    def test_A_is_exp_C_N_d(self):
        c = deviation_constants(2.0, 2, 0.5, 3.0, 1.3)
        assert c.log_A == pytest.approx(c.C * 9.0)
        assert c.C == max(c.C_entropy, c.C_branch)
        assert c.C_entropy == pytest.approx(8 * 9 * math.log(2 * 1.3 + 1))

    def test_rejects_nonpositive_C_star(self):
        with pytest.raises(ValueError):
            deviation_constants(2.0, 1, 1.0, 1.0, 0.0)


class TestTails:
    consts = deviation_constants(2.0, 1, 1.0, 0.0, 1.0)

    def test_zero_lambda_vacuous(self):
        t = deviation_tail(self.consts, 100, 1.0, 0.0)
        assert t.vacuous and t.value == 1.0

    def test_doubling_A_doubles_tail(self):
        c = deviation_constants(2.0, 1, 1.0, 1.0, 1.0)
        a = deviation_tail(c, 1000, 1.0, 500.0)
        b = deviation_tail(c.scaled_A(2.0), 1000, 1.0, 500.0)
        assert math.exp(b.log_value) == pytest.approx(2 * math.exp(a.log_value), rel=1e-12)

    def test_log_domain_matches_naive(self):
        c = deviation_constants(2.0, 1, 1.0, 0.5, 1.0)
        for n in (10, 1000, 10**5):
            lam = 0.1 * n
            naive = c.A * math.exp(-c.B * lam**2 / (12 * n + 2 * lam))
            assert math.exp(deviation_tail(c, n, 1.0, lam).log_value) == pytest.approx(naive, rel=1e-12)
            prob = 1 - c.A * math.exp(-c.B * 0.01 * n / (12 + 0.2))
            if prob > 0:
                assert stability_probability(c, n, 1.0, 1.0, 0.1).value == pytest.approx(prob, rel=1e-12)

    def test_tail_vanishes_with_n(self):
        tails = [deviation_tail(self.consts, n, 1.0, 0.1 * n).value for n in np.logspace(3, 8, 30).astype(int)]
        assert np.all(np.diff(tails) <= 0) and tails[-1] < 1e-9

    def test_success_probability(self):
        ns = np.unique(np.logspace(1, 6, 60).astype(int))
        probs = [stability_probability(self.consts, int(n), 0.8, 1.2, 0.3).value for n in ns]
        assert probs[0] < 1e-4 and np.all(np.diff(probs) >= 0) and probs[-1] > 0.5
        assert stability_probability(self.consts, 10**6, 1.0, 1.0, 1e-9).value < 1e-9
        with pytest.raises(ValueError):
            stability_probability(self.consts, 10, 1.0, 1.0, 0.0)

    def test_tiny_n_vacuous(self):
        c = deviation_constants(2.0, 1, 1.0, 1.0, 1.0)
        t = stability_probability(c, 10, 1.0, 1.0, 0.5)
        assert t.vacuous and t.value == 0.0

    def test_required_sample_size(self):
        n = required_sample_size(self.consts, 1.0, 1.0, 0.6, 0.9)
        assert stability_probability(self.consts, n, 1.0, 1.0, 0.6).value >= 0.9
        assert stability_probability(self.consts, n - 1, 1.0, 1.0, 0.6).value < 0.9


class TestStabilityLU:
    def test_worked_point(self):
        L, U, ok = stability_constants_LU(0.05, 0.1, 0.1, 2, 1, 1, 1, 1, 1, 1, 1)
        assert L == pytest.approx(0.645, abs=1e-12) and ok
        assert U == pytest.approx(1.1 + 0.05, abs=1e-12)

    def test_small_eps_gamma_limit(self):
        L, U, _ = stability_constants_LU(1e-12, 1e-12, 0.2, 2, 0.7, 1.3, 1.1, 1.2, 1.0, 4, 1)
        assert L == pytest.approx(0.7 * 0.8, rel=1e-9)
        assert U == pytest.approx(1.3 * (1.1 * 1.2) ** 2, rel=1e-9)

    def test_p_one(self):
        L, _, _ = stability_constants_LU(0.02, 0.1, 0.1, 1, 0.9, 1.0, 1.5, 1.2, 1.0, 2, 2)
        assert L == pytest.approx(0.9 * (1 - 0.1 - 0.02 - 0.1 * 1.8) - 0.02 / 16, rel=1e-13)

    def test_monotonicity(self):
        base = dict(eps=0.05, gamma=0.1, delta=0.1)
        args = (2, 1.0, 1.0, 1.1, 1.2, 1.3, 3, 1)
        L0, U0, _ = stability_constants_LU(*base.values(), *args)
        for key in base:
            moved = {**base, key: base[key] + 1e-4}
            L1, U1, _ = stability_constants_LU(*moved.values(), *args)
            assert L1 < L0
            if key != "delta":
                assert U1 > U0

    def test_infeasible(self):
        assert not stability_constants_LU(0.05, 0.9, 0.1, 2, 1, 1, 1.2, 1.2, 1, 1, 1)[2]

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            stability_constants_LU(0.0, 0.1, 0.1, 2, 1, 1, 1, 1, 1, 1, 1)


class TestConditionBound:
    def test_oracle_value(self):
        expected = math.sqrt(1.1 / (1 - 0.225)) * 1.5
        assert condition_number_bound(0.1, 1, 1, 1, 1.5, 2) == pytest.approx(expected, rel=1e-14)
        assert round(expected, 3) == 1.787

    def test_equal_constants_limit(self):
        assert condition_number_bound(1e-12, 2.0, 2.0, 1.3, 1.3, 2) == pytest.approx(1.0, rel=1e-9)

    def test_blows_up_at_edge(self):
        vals = [condition_number_bound(g, 1, 1, 1, 1.5, 2) for g in (0.4, 0.44, 0.4444)]
        assert np.all(np.diff(vals) > 0) and vals[-1] > 50

    @pytest.mark.parametrize("gamma", [0.0, 1 / 2.25, 0.9])
    def test_inadmissible(self, gamma):
        with pytest.raises(AdmissibilityError, match="admissible interval"):
            condition_number_bound(gamma, 1, 1, 1, 1.5, 2)


class TestBundle:
    fields = dict(p=2.0, d=1, delta0=1.0, N=2.0, C0=1.0, K_W=1.0, C_K=1.1, C_star=1.2, B_p=1.1, A_p=0.9,
                  c_rho=0.5, C_rho=0.5, M=4.0, R=3.0, delta=0.1)

    def test_delegates(self):
        b = ConstantsBundle(**self.fields)
        assert b.deviation() == deviation_constants(2.0, 1, 1.0, 2.0, 1.2)
        assert b.LU(0.01, 0.1) == stability_constants_LU(0.01, 0.1, 0.1, 2.0, 0.5, 0.5, 1.1, 1.1, 1.2, 4.0, 1)

    @pytest.mark.parametrize("bad", [{"C_K": 0.0}, {"N": -1.0}, {"delta": 1.0}, {"R": 4.0}, {"p": 0.5}])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            ConstantsBundle(**{**self.fields, **bad})
