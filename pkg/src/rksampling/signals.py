"""Signals on R^d: integer-shift spline combinations and black-box evaluators."""

from __future__ import annotations

import itertools

import numpy as np

from .generators import Generator
from .weights import as_points

__all__ = ["SignalFn", "SplineFn", "BlackBoxFn", "ZeroFn"]


class SignalFn:
    """A real function on R^d with an optional bounding box of its support."""

    d: int = 1

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(as_points(x, self.d))

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def support(self):
        """``(lo, hi)`` arrays bounding the support, or ``None`` if unknown."""
        return None

    def scaled(self, a: float) -> "SignalFn":
        return BlackBoxFn(lambda x, f=self: a * f(x), self.d, self.support)

    def __mul__(self, a):
        return self.scaled(float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self.scaled(1.0 / float(a))

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other: "SignalFn") -> "SignalFn":
        if other.d != self.d:
            raise ValueError("cannot add signals of different dimension")
        return BlackBoxFn(lambda x, f=self, g=other: f(x) + g(x), self.d, _union(self.support, other.support))

    def __sub__(self, other: "SignalFn") -> "SignalFn":
        return self + (-other)


def _union(a, b):
    if a is None or b is None:
        return None
    return np.minimum(a[0], b[0]), np.maximum(a[1], b[1])


class BlackBoxFn(SignalFn):
    def __init__(self, fn, d: int = 1, support=None):
        self.fn = fn
        self.d = d
        self._support = None if support is None else (
            np.broadcast_to(np.asarray(support[0], float), (d,)).copy(),
            np.broadcast_to(np.asarray(support[1], float), (d,)).copy(),
        )

    def evaluate(self, pts):
        return np.asarray(self.fn(pts if self.d > 1 else pts[:, 0]), dtype=float).reshape(len(pts))

    @property
    def support(self):
        return self._support


class ZeroFn(SignalFn):
    def __init__(self, d: int = 1):
        self.d = d

    def evaluate(self, pts):
        return np.zeros(len(pts))

    @property
    def support(self):
        return np.zeros(self.d), np.zeros(self.d)


class SplineFn(SignalFn):
    """``f(x) = sum_m coef[m - lo] prod_i phi(x_i - m_i)`` over a box of integer shifts.

    ``basis`` and ``coefficients`` are set when the function was synthesized
    from a subspace basis, so the lattice representation is retained.
    """

    def __init__(self, generator: Generator, coef: np.ndarray, lo, basis=None, coefficients=None):
        coef = np.asarray(coef, dtype=float)
        self.generator = generator
        self.d = coef.ndim
        self.coef = coef
        self.lo = np.broadcast_to(np.asarray(lo, dtype=np.int64), (self.d,)).copy()
        self.basis = basis
        self.coefficients = coefficients

    @property
    def hi(self):
        return self.lo + np.array(self.coef.shape) - 1

    @property
    def support(self):
        glo, ghi = self.generator.support()
        return self.lo + glo, self.hi + ghi

    def evaluate(self, pts):
        m0, vals = self.generator.window(pts)
        n, d = pts.shape
        W = vals.shape[-1]
        out = np.zeros(n)
        shape = np.array(self.coef.shape)
        for combo in itertools.product(range(W), repeat=d):
            idx = m0 + np.array(combo) - self.lo
            ok = np.all((idx >= 0) & (idx < shape), axis=1)
            if not ok.any():
                continue
            w = np.ones(n)
            for axis, j in enumerate(combo):
                w = w * vals[:, axis, j]
            c = np.zeros(n)
            c[ok] = self.coef[tuple(idx[ok].T)]
            out += w * c
        return out

    def scaled(self, a):
        return SplineFn(self.generator, a * self.coef, self.lo, self.basis,
                        None if self.coefficients is None else self.coefficients.scaled(a))

    def __add__(self, other):
        if isinstance(other, SplineFn) and other.generator == self.generator and other.d == self.d:
            lo = np.minimum(self.lo, other.lo)
            hi = np.maximum(self.hi, other.hi)
            coef = np.zeros(tuple(hi - lo + 1))
            for f in (self, other):
                sl = tuple(slice(a, b + 1) for a, b in zip(f.lo - lo, f.hi - lo))
                coef[sl] += f.coef
            coefficients = None
            if self.coefficients is not None and other.coefficients is not None and self.basis is other.basis:
                coefficients = self.coefficients + other.coefficients
            return SplineFn(self.generator, coef, lo, self.basis if coefficients is not None else None, coefficients)
        return super().__add__(other)
