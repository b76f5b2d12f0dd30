"""Generators of shift-invariant spaces and their dual sequences.

A generator ``phi`` spans ``V = span{phi(. - k) : k in Z}``.  Every function
handled here is a finite combination ``sum_m c_m phi(x - m)``; the
orthonormalized generator and the Gram dual are of that form with
coefficient sequences ``a`` and ``b``:

* ``a``: Fourier coefficients of ``G(xi)^{-1/2}``, so ``phi°(x) = sum a_n phi(x - n)``
  has orthonormal integer shifts;
* ``b``: Fourier coefficients of ``1/G(xi)``, so ``phi~(x) = sum b_n phi(x - n)``
  is biorthogonal to the shifts of ``phi``.

``G(xi) = sum_n g_n exp(-2 pi i n xi)`` is the symbol of the Gram sequence
``g_n = <phi, phi(. - n)>``.  All sequences are truncated where they drop
below ``TRUNCATION`` relative to their largest entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.linalg

__all__ = [
    "TRUNCATION",
    "Sequence",
    "Generator",
    "BSpline",
    "Gaussian",
    "make_generator",
    "bspline_exact",
]

TRUNCATION = 1e-14
FREQ_GRID = 4096


@dataclass(frozen=True)
class Sequence:
    """Finitely supported integer-indexed sequence ``values[i] = s_{lo + i}``."""

    lo: int
    values: np.ndarray

    @property
    def hi(self) -> int:
        return self.lo + len(self.values) - 1

    def __getitem__(self, n):
        n = np.asarray(n)
        idx = n - self.lo
        inside = (idx >= 0) & (idx < len(self.values))
        out = np.zeros(n.shape)
        out[inside] = self.values[idx[inside]]
        return out

    @classmethod
    def delta(cls) -> "Sequence":
        return cls(0, np.ones(1))

    def correlate(self, other: "Sequence") -> "Sequence":
        """``r -> sum_i self_i other_{i + r}``."""
        vals = np.correlate(other.values, self.values, mode="full")
        return Sequence(other.lo - self.hi, vals)

    def convolve(self, other: "Sequence") -> "Sequence":
        return Sequence(self.lo + other.lo, np.convolve(self.values, other.values))


def _truncate(n: np.ndarray, values: np.ndarray, tol: float = TRUNCATION, floor: float = 0.0) -> Sequence:
    keep = np.abs(values) >= max(tol * np.max(np.abs(values)), floor)
    idx = np.nonzero(keep)[0]
    lo, hi = idx[0], idx[-1]
    return Sequence(int(n[lo]), values[lo:hi + 1].copy())


def _fourier_coefficients(symbol: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Coefficients ``n -> int_0^1 S(xi) e^{2 pi i n xi}`` from samples of a real even symbol.

    Also returns the FFT round-off floor, below which coefficients are noise.
    """
    coef = np.fft.ifft(symbol).real
    n = np.fft.fftfreq(len(symbol), 1.0 / len(symbol)).astype(int)
    order = np.argsort(n)
    floor = 32 * np.finfo(float).eps * np.max(np.abs(symbol))
    return n[order], coef[order], floor


class Generator:
    """Base class; subclasses provide ``evaluate``, ``support`` and ``gram``."""

    name = "generator"
    compact = False

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """Interval outside of which the generator is zero or below ``TRUNCATION``."""
        raise NotImplementedError

    def gram(self) -> Sequence:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    @property
    def width(self) -> int:
        lo, hi = self.support()
        return int(math.floor(hi - lo)) + 1

    def window(self, x):
        """Values ``phi(x - m0 - i)`` for ``i < width`` covering every nonzero shift.

        Returns ``m0`` of shape ``x.shape`` and values of shape ``x.shape + (width,)``.
        """
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        m0 = np.ceil(x - hi).astype(np.int64)
        i = np.arange(self.width)
        vals = self.evaluate(x[..., None] - m0[..., None] - i)
        return m0, vals

    def shift_matrix(self, x, m_lo: int, m_hi: int) -> np.ndarray:
        """Dense matrix ``phi(x_j - m)`` for integers ``m_lo <= m <= m_hi``."""
        x = np.asarray(x, dtype=float).ravel()
        m0, vals = self.window(x)
        ncol = m_hi - m_lo + 1
        out = np.zeros(len(x) * ncol)
        cols = m0[:, None] + np.arange(self.width)[None, :] - m_lo
        ok = (cols >= 0) & (cols < ncol)
        flat = cols + (np.arange(len(x)) * ncol)[:, None]
        if ok.all():
            out[flat.ravel()] = vals.ravel()
        else:
            out[flat[ok]] = vals[ok]
        return out.reshape(len(x), ncol)

    def combine(self, x, seq: Sequence) -> np.ndarray:
        """Evaluate ``sum_m seq_m phi(x - m)``."""
        x = np.asarray(x, dtype=float)
        m0, vals = self.window(x)
        idx = m0[..., None] + np.arange(self.width)
        return np.sum(vals * seq[idx], axis=-1)

    def symbol(self, grid: int = FREQ_GRID) -> np.ndarray:
        g = self.gram()
        n = np.arange(g.lo, g.hi + 1)
        if g.hi - g.lo + 1 > grid:
            raise ValueError("Gram sequence longer than the frequency grid")
        arr = np.zeros(grid)
        np.add.at(arr, n % grid, g.values)
        return np.fft.fft(arr).real

    @cached_property
    def orthonormalizer(self) -> Sequence:
        """Sequence ``a`` with ``sum_n a_n phi(. - n)`` having orthonormal shifts."""
        sym = self.symbol()
        if np.min(sym) <= 0:
            raise ValueError(f"{self.name}: Gram symbol is not positive; shifts are not a Riesz basis")
        n, a, floor = _fourier_coefficients(sym ** -0.5)
        return _truncate(n, a, floor=floor)

    @cached_property
    def dual_fft(self) -> Sequence:
        sym = self.symbol()
        n, b, floor = _fourier_coefficients(1.0 / sym)
        return _truncate(n, b, floor=floor)

    @cached_property
    def dual(self) -> Sequence:
        """Sequence ``b`` of the Gram dual, from a truncated Toeplitz Gram inverse.

        The central column of the inverse of the ``(2L+1)``-square Gram matrix
        converges to ``b`` geometrically in ``L``; ``L`` is twice the support
        of the Fourier reference, which is used as a cross-check.
        """
        ref = self.dual_fft
        half = 2 * max(-ref.lo, ref.hi) + 16
        g = self.gram()
        col = g[np.arange(0, 2 * half + 1)]
        rhs = np.zeros(2 * half + 1)
        rhs[half] = 1.0
        b = scipy.linalg.solve_toeplitz(col, rhs)
        n = np.arange(-half, half + 1)
        keep = (n >= ref.lo) & (n <= ref.hi)
        seq = Sequence(ref.lo, b[keep].copy())
        gap = np.max(np.abs(seq.values - ref.values))
        if gap > 1e-9 * np.max(np.abs(ref.values)):
            raise RuntimeError(f"{self.name}: Toeplitz and Fourier Gram duals disagree by {gap:.3g}")
        return seq


def bspline_exact(m: int, x: Fraction) -> Fraction:
    """Uncentered B-spline of order ``m`` (support ``[0, m]``) in exact arithmetic."""
    if m == 1:
        return Fraction(1) if 0 <= x < 1 else Fraction(0)
    total = Fraction(0)
    for k in range(m + 1):
        t = x - k
        if t > 0:
            total += (-1) ** k * math.comb(m, k) * t ** (m - 1)
    return total / math.factorial(m - 1)


@dataclass
class BSpline(Generator):
    """Uncentered B-spline of order ``m`` (degree ``m - 1``) supported on ``[0, m]``."""

    order: int = 4
    compact = True

    def __post_init__(self):
        if self.order not in (1, 2, 3, 4):
            raise ValueError("B-spline order must be 1, 2, 3 or 4")

    @property
    def name(self) -> str:
        return f"bspline{self.order}"

    def support(self):
        return 0.0, float(self.order)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        m = self.order
        inside = (x >= 0) & (x < m)
        if m == 1:
            return inside.astype(float)
        total = np.zeros_like(x)
        for k in range(m + 1):
            t = np.maximum(x - k, 0.0)
            total += (-1) ** k * math.comb(m, k) * t ** (m - 1)
        return np.where(inside, total / math.factorial(m - 1), 0.0)

    def gram(self):
        # <B_m, B_m(. - n)> = B_{2m}(m + n)
        m = self.order
        n = np.arange(-(m - 1), m)
        vals = np.array([float(bspline_exact(2 * m, Fraction(m + int(k)))) for k in n])
        return Sequence(int(n[0]), vals)

    def __hash__(self):
        return hash((self.name,))


@dataclass
class Gaussian(Generator):
    """``exp(-x^2 / (2 sigma^2))``, truncated where it falls below ``TRUNCATION``."""

    sigma: float = 0.5
    _radius: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Gaussian width must be positive")
        self._radius = self.sigma * math.sqrt(2.0 * math.log(1.0 / TRUNCATION))

    @property
    def name(self) -> str:
        return f"gaussian{self.sigma:g}"

    def support(self):
        return -self._radius, self._radius

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-x**2 / (2.0 * self.sigma**2))

    def gram(self):
        s = self.sigma
        n = np.arange(-int(math.ceil(2 * self._radius)), int(math.ceil(2 * self._radius)) + 1)
        vals = s * math.sqrt(math.pi) * np.exp(-n.astype(float) ** 2 / (4 * s**2))
        return _truncate(n, vals, 1e-17)

    def __hash__(self):
        return hash((self.name,))


def make_generator(kind: str, order: int = 4, sigma: float = 0.5) -> Generator:
    if kind == "bspline":
        return BSpline(int(order))
    if kind == "gaussian":
        return Gaussian(float(sigma))
    raise ValueError(f"unknown generator {kind!r}; expected 'bspline' or 'gaussian'")
