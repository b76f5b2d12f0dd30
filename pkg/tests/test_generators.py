from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rksampling.generators import BSpline, Gaussian, Sequence, bspline_exact, make_generator
from rksampling.quadrature import composite_nodes

GENERATORS = [BSpline(1), BSpline(2), BSpline(3), BSpline(4), Gaussian(0.5), Gaussian(1.0)]


def brute_gram(gen, n):
    lo, hi = gen.support()
    x, w = composite_nodes(lo - 1, hi + 1, 1 / 64, order=6)
    return w @ (gen(x) * gen(x - n))


class TestBSpline:
    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_partition_of_unity(self, m):
        x = np.linspace(0, 1, 101, endpoint=False)
        assert np.allclose(sum(BSpline(m)(x + k) for k in range(m)), 1.0, atol=1e-14)

    @given(st.fractions(min_value=-1, max_value=5, max_denominator=64), st.sampled_from([1, 2, 3, 4]))
    def test_matches_exact_arithmetic(self, x, m):
        assert BSpline(m)(float(x)) == pytest.approx(float(bspline_exact(m, x)), abs=1e-13)

    def test_exact_cubic_value(self):
        assert bspline_exact(4, Fraction(2)) == Fraction(2, 3)

    def test_order_range(self):
        with pytest.raises(ValueError):
            BSpline(5)


class TestGram:
    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.name)
    def test_gram_matches_quadrature(self, gen):
        g = gen.gram()
        for n in range(g.lo, g.hi + 1):
            assert g[n] == pytest.approx(brute_gram(gen, n), abs=1e-12)

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.name)
    def test_orthonormalizer_gives_orthonormal_shifts(self, gen):
        a = gen.orthonormalizer
        seq = a.correlate(a).convolve(gen.gram())
        assert seq[0] == pytest.approx(1.0, abs=1e-10)
        assert max(abs(seq[n]) for n in range(1, 4)) < 1e-10

    @pytest.mark.parametrize("gen", GENERATORS, ids=lambda g: g.name)
    def test_dual_inverts_gram(self, gen):
        conv = gen.gram().convolve(gen.dual)
        assert conv[0] == pytest.approx(1.0, abs=1e-10)
        assert max(abs(conv[n]) for n in (-2, -1, 1, 2)) < 1e-10


class TestShiftMatrix:
    @pytest.mark.parametrize("gen", [BSpline(1), BSpline(4), Gaussian(0.5)], ids=lambda g: g.name)
    def test_matches_direct_evaluation(self, gen, rng):
        x = rng.uniform(-3, 3, 200)
        ref = np.stack([gen(x - m) for m in range(-4, 5)], axis=1)
        assert np.allclose(gen.shift_matrix(x, -4, 4), ref, atol=1e-14)

    def test_combine(self, rng):
        gen = BSpline(3)
        seq = Sequence(-2, rng.standard_normal(5))
        x = rng.uniform(-4, 4, 50)
        ref = sum(seq[m] * gen(x - m) for m in range(-2, 3))
        assert np.allclose(gen.combine(x, seq), ref, atol=1e-14)


def test_make_generator():
    assert make_generator("bspline", 2).name == "bspline2"
    assert make_generator("gaussian", sigma=0.25).name == "gaussian0.25"
    with pytest.raises(ValueError):
        make_generator("sinc")
