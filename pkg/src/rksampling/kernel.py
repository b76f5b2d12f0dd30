"""Reproducing kernels, their Wiener-type norm and modulus of continuity.

Two kernel systems are provided.

``ShiftInvariantKernel``
    The orthogonal projector onto ``span{phi(. - k)}`` (tensorized in d
    dimensions), written through a generator pair ``(phi_p, phi_d)``:

        K(x, y) = sum_k phi_p(x - k) phi_d(y - k)
                = sum_{m, n} Q_{n - m} phi(x - m) phi(y - n),

    with ``phi_p = sum p_i phi(. - i)``, ``phi_d = sum t_j phi(. - j)`` and
    ``Q_r = sum_i p_i t_{i + r}``.  For the orthonormalized pair ``p = t = a``;
    for the Gram dual pair ``p = delta`` and ``t = b``.  Both describe the
    same projector, only the frame pair differs.

``TabulatedKernel``
    A one-dimensional kernel given on a rectangular grid, interpolated
    bilinearly.  Used for closed-form oracles and negative controls.

The W-norm of a kernel is ``int sup_z |K(t + z, z)| w(t) dt``.  Both
systems also compute the transposed variant ``sup_z |K(z, t + z)|`` and
report the larger of the two.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .generators import Generator, Sequence, _truncate, make_generator
from .quadrature import QuadratureConfig
from .signals import BlackBoxFn, SignalFn, SplineFn
from .weights import ModeratePair, as_points, moderate_pair

__all__ = [
    "DUALITIES",
    "KernelError",
    "DeltaSelectionError",
    "WNormReport",
    "ModulusReport",
    "IdempotencyReport",
    "KernelSystem",
    "ShiftInvariantKernel",
    "TabulatedKernel",
    "kernel_eval",
    "apply_T",
    "w_norm",
    "modulus_of_continuity",
    "select_delta0",
    "check_idempotent",
    "DELTA_SCHEDULE",
]

DUALITIES = ("orthonormalized", "gram_dual")
DELTA_SCHEDULE = tuple(2.0**-j for j in range(11))
DELTA0_MARGIN = 0.9
OFFSETS_PER_AXIS = 9


class KernelError(ValueError):
    pass


class DeltaSelectionError(KernelError):
    def __init__(self, message, products):
        super().__init__(message)
        self.products = products


@dataclass(frozen=True)
class WNormReport:
    value: float
    direct: float
    transposed: float
    discrepancy: float
    divergent: bool
    t: np.ndarray = field(repr=False, compare=False)
    envelope: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class ModulusReport:
    delta: float
    w_norm: float
    t: np.ndarray = field(repr=False, compare=False)
    envelope: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class IdempotencyReport:
    max_defect: float
    threshold: float
    passed: bool
    trials: int


def _offsets(delta: float) -> np.ndarray:
    return np.linspace(-delta, delta, OFFSETS_PER_AXIS)


def _wnorm_report(t, direct_env, transposed_env, weight, h) -> WNormReport:
    direct = _weighted_sum([direct_env], t, h, weight)
    transposed = _weighted_sum([transposed_env], t, h, weight)
    value = max(direct, transposed)
    disc = abs(direct - transposed) / value if value > 0 else 0.0
    env = np.maximum(direct_env, transposed_env)
    edge = max(env[0] * weight.of_norm(abs(t[0])), env[-1] * weight.of_norm(abs(t[-1])))
    divergent = bool(value > 0 and edge > 1e-10 * value)
    return WNormReport(value, direct, transposed, disc, divergent, t, env)


def _weighted_sum(terms, t, h, weight, d=1) -> float:
    """``sum over terms of sum_{t in grid^d} prod_i term[i](t_i) w(t) h^d``.

    Each term is a list of ``d`` one-dimensional arrays on the grid ``t``
    (a single array is broadcast to all axes).
    """
    total = 0.0
    for term in terms:
        if isinstance(term, np.ndarray):
            term = [term] * d
        if weight.is_constant:
            total += float(np.prod([np.sum(f) * h for f in term]))
            continue
        total += _tensor_recurse(term, t, weight, 0, np.zeros(1), np.ones(1)) * h**d
    return total


def _tensor_recurse(term, t, weight, axis, r2, prod) -> float:
    f = term[axis]
    if axis == len(term) - 1:
        r = np.sqrt(r2[:, None] + t[None, :] ** 2)
        return float(np.sum(prod[:, None] * f[None, :] * weight.of_norm(r)))
    nz = np.nonzero(f)[0]
    total = 0.0
    for i in nz:
        total += _tensor_recurse(term, t, weight, axis + 1, r2 + t[i] ** 2, prod * f[i])
    return total


class KernelSystem:
    """Common interface of kernel systems."""

    d: int
    quad: QuadratureConfig
    weights: ModeratePair

    def __call__(self, x, y) -> np.ndarray:
        return self.evaluate(x, y)

    def evaluate(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def apply(self, f: SignalFn) -> SignalFn:
        raise NotImplementedError

    def w_norm_report(self) -> WNormReport:
        raise NotImplementedError

    def modulus(self, delta: float) -> ModulusReport:
        raise NotImplementedError

    def range_function(self, rng) -> SignalFn:
        raise NotImplementedError

    def defect_grid(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def C0(self) -> float:
        return self.weights.C0

    def delta0_products(self, schedule=DELTA_SCHEDULE):
        """``C0 ||K||_W ||w_delta(K)||_W`` along the schedule, stopping at the first pass."""
        kw = self.w_norm_report().value
        products = []
        for delta in schedule:
            value = self.C0 * kw * self.modulus(delta).w_norm
            products.append((delta, value))
            if value < DELTA0_MARGIN:
                break
        return products

    def select_delta0(self, schedule=DELTA_SCHEDULE) -> float:
        products = self.delta0_products(schedule)
        delta, value = products[-1]
        if value < DELTA0_MARGIN:
            return min(delta, 1.0)
        shown = ", ".join(f"{d:g}: {v:.4g}" for d, v in products)
        raise DeltaSelectionError(
            f"no delta0 down to {schedule[-1]:g} gives C0*||K||_W*||w_delta(K)||_W < {DELTA0_MARGIN}; "
            f"products {shown}",
            products,
        )


class ShiftInvariantKernel(KernelSystem):
    """Projector kernel of a B-spline or Gaussian shift-invariant space."""

    def __init__(self, generator: Generator, duality: str = "orthonormalized", d: int = 1,
                 quad: QuadratureConfig | None = None, weights: ModeratePair | None = None):
        if duality not in DUALITIES:
            raise KernelError(f"unknown duality {duality!r}; expected one of {DUALITIES}")
        if d < 1:
            raise KernelError("dimension must be positive")
        self.generator = generator
        self.duality = duality
        self.d = d
        self.quad = quad or QuadratureConfig()
        self.weights = weights or moderate_pair(d=d)
        if self.weights.d != d:
            raise KernelError("weights and kernel dimension differ")
        if duality == "orthonormalized":
            self.primal = self.dual = generator.orthonormalizer
        else:
            self.primal = Sequence.delta()
            self.dual = generator.dual
        Q = self.primal.correlate(self.dual)
        self.Q = _truncate(np.arange(Q.lo, Q.hi + 1), Q.values)
        glo, ghi = generator.support()
        self.diag_width = max(-self.Q.lo, self.Q.hi) + (ghi - glo)
        q = self.Q.values
        self.symmetric = bool(self.Q.lo == -self.Q.hi and np.max(np.abs(q - q[::-1])) <= 1e-13 * np.max(np.abs(q)))
        self._w_report = None
        self._moduli = {}

    @classmethod
    def from_spec(cls, kind="bspline", order=4, sigma=0.5, duality="orthonormalized", d=1,
                  quad=None, weights=None):
        return cls(make_generator(kind, order, sigma), duality, d, quad, weights)

    @property
    def label(self) -> str:
        return f"{self.generator.name}-{self.duality}-d{self.d}"

    # evaluation

    def primal_fn(self, x) -> np.ndarray:
        """The one-dimensional primal generator ``phi_p``."""
        return self.generator.combine(x, self.primal)

    def dual_fn(self, x) -> np.ndarray:
        return self.generator.combine(x, self.dual)

    def primal_support(self):
        glo, ghi = self.generator.support()
        return self.primal.lo + glo, self.primal.hi + ghi

    def dual_support(self):
        glo, ghi = self.generator.support()
        return self.dual.lo + glo, self.dual.hi + ghi

    def kernel1d(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        g = self.generator
        mx, vx = g.window(x)
        my, vy = g.window(y)
        i = np.arange(g.width)
        r = (my - mx)[..., None, None] + i[None, :] - i[:, None]
        return np.einsum("...i,...ij,...j->...", vx, self.Q[r], vy)

    def evaluate(self, x, y):
        px = as_points(x, self.d)
        py = as_points(y, self.d)
        if not (np.all(np.isfinite(px)) and np.all(np.isfinite(py))):
            raise KernelError("kernel evaluated at a non-finite point")
        px, py = np.broadcast_arrays(px, py)
        return np.prod(self.kernel1d(px, py), axis=-1)

    # operator

    def _integration_box(self, f: SignalFn):
        sup = f.support
        R = self.quad.radius
        if sup is None:
            if R is None:
                raise KernelError("signal has no known support; set quad.radius")
            return -np.full(self.d, R), np.full(self.d, R)
        lo, hi = sup
        if R is not None:
            lo, hi = np.maximum(lo, -R), np.minimum(hi, R)
        return lo, hi

    def apply(self, f: SignalFn) -> SplineFn:
        """``Tf`` by quadrature of ``K(x, .) f`` in the factorized form.

        ``mu_n = int phi(y - n) f(y) dy`` is computed on the tensor grid and
        ``Tf = sum_m (sum_n Q_{n - m} mu_n) phi(. - m)``.
        """
        if f.d != self.d:
            raise KernelError("signal and kernel dimension differ")
        lo, hi = self._integration_box(f)
        g = self.generator
        glo, ghi = g.support()
        if np.any(hi <= lo):
            return SplineFn(g, np.zeros((1,) * self.d), 0)
        axes = [self.quad.nodes(lo[i], hi[i]) for i in range(self.d)]
        mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = f.evaluate(pts).reshape([len(a[0]) for a in axes])
        n_lo = [int(math.ceil(lo[i] - ghi)) for i in range(self.d)]
        n_hi = [int(math.floor(hi[i] - glo)) for i in range(self.d)]
        mu = vals
        for i, (x, w) in enumerate(axes):
            Phi = g.shift_matrix(x, n_lo[i], n_hi[i]) * w[:, None]
            mu = np.moveaxis(np.tensordot(mu, Phi, axes=([i], [0])), -1, i)
        m_lo = [n_lo[i] - self.Q.hi for i in range(self.d)]
        coef = mu
        for i in range(self.d):
            m = np.arange(m_lo[i], n_hi[i] - self.Q.lo + 1)
            n = np.arange(n_lo[i], n_hi[i] + 1)
            Tmat = self.Q[n[None, :] - m[:, None]]
            coef = np.moveaxis(np.tensordot(coef, Tmat, axes=([i], [1])), -1, i)
        return SplineFn(g, coef, m_lo)

    def range_function(self, rng, half_width: int = 5) -> SplineFn:
        """Random ``sum_k c_k phi_p(. - k)`` over ``|k_i| <= half_width``."""
        shape = (2 * half_width + 1,) * self.d
        c = rng.standard_normal(shape)
        coef = c
        for i in range(self.d):
            coef = np.apply_along_axis(np.convolve, i, coef, self.primal.values)
        return SplineFn(self.generator, coef, -half_width + self.primal.lo)

    def defect_grid(self, f: SplineFn | None = None, step: float | None = None) -> np.ndarray:
        step = step or self.quad.h
        lo, hi = f.support
        axes = [np.arange(lo[i], hi[i] + step / 2, step) for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    # W-norm and modulus

    def _grids(self):
        h = self.quad.h
        cells = self.quad.cells_per_unit()
        h = 1.0 / cells
        z = np.arange(cells) * h
        nt = int(math.ceil(self.diag_width / h)) + 1
        t = np.arange(-nt, nt + 1) * h
        return z, t, h

    def _section_table(self, z, t, x_shift, y_shift, transpose):
        """``V[k, l] = K1(t_l + z_k + x_shift, z_k + y_shift)`` (arguments swapped if ``transpose``)."""
        g = self.generator
        Q = self.Q if not transpose else Sequence(-self.Q.hi, self.Q.values[::-1].copy())
        y = z + y_shift
        glo, ghi = g.support()
        n_lo = int(math.ceil(y.min() - ghi))
        n_hi = int(math.floor(y.max() - glo))
        Y = g.shift_matrix(y, n_lo, n_hi)
        m_lo = n_lo - Q.hi
        m = np.arange(m_lo, n_hi - Q.lo + 1)
        n = np.arange(n_lo, n_hi + 1)
        C = Y @ Q[n[None, :] - m[:, None]].T
        # z and t are multiples of h = 1/cells, so every argument lies on the
        # grid s_j = (j - nt) h + x_shift; write j = q * cells + r, then
        # phi(s_j - m0 - i) depends on r only and m0 = q + base_r.
        cells = len(z)
        h = 1.0 / cells
        nt = (len(t) - 1) // 2
        nq = -(-(len(t) + cells - 1) // cells)
        u = np.arange(cells) * h - nt * h + x_shift
        base = np.ceil(u - ghi).astype(np.int64)
        vals = g.evaluate(u[:, None] - base[:, None] - np.arange(g.width)[None, :])
        start = base - m_lo
        pad_lo = max(0, -int(start.min()))
        pad_hi = max(0, int(start.max()) + g.width + nq - len(m))
        Cp = np.pad(C, ((0, 0), (pad_lo, pad_hi)))
        G = np.zeros((cells, len(z), nq))
        for r in range(cells):
            for i in range(g.width):
                if vals[r, i] != 0.0:
                    a = start[r] + i + pad_lo
                    G[r] += vals[r, i] * Cp[:, a:a + nq]
        F = np.ascontiguousarray(G.transpose(1, 2, 0)).reshape(len(z), nq * cells)
        # row k of the result is F[k, k:k + len(t)]
        return np.lib.stride_tricks.as_strided(
            F, shape=(len(z), len(t)), strides=(F.strides[0] + F.strides[1], F.strides[1]), writeable=False)

    def _envelopes(self, delta: float):
        """Per-axis envelopes on the t-grid for both orientations.

        Returns ``(t, h, sup|K1|, sup over offsets of |K1|, modulus)`` where
        each of the last three is a pair ``(direct, transposed)``.
        """
        z, t, h = self._grids()
        out = []
        for transpose in (False, True):
            if transpose and self.symmetric:
                # K(z, t + z) = K(t + z, z) for a symmetric kernel
                out.append(out[0])
                continue
            base = self._section_table(z, t, 0.0, 0.0, transpose)
            sup_k = np.max(np.abs(base), axis=0)
            if delta == 0:
                out.append((sup_k, sup_k, np.zeros_like(sup_k)))
                continue
            dev = np.zeros_like(base)
            peak = np.abs(base)
            for xs in _offsets(delta):
                for ys in _offsets(delta):
                    V = self._section_table(z, t, xs, ys, transpose)
                    np.maximum(dev, np.abs(V - base), out=dev)
                    np.maximum(peak, np.abs(V), out=peak)
            out.append((sup_k, np.max(peak, axis=0), np.max(dev, axis=0)))
        pairs = tuple((out[0][k], out[1][k]) for k in range(3))
        return t, h, pairs

    def w_norm_report(self) -> WNormReport:
        if self._w_report is None:
            t, h, (sup_k, _, _) = self._envelopes(0.0)
            w = self.weights.omega
            if self.d == 1:
                self._w_report = _wnorm_report(t, sup_k[0], sup_k[1], w, h)
            else:
                direct = _weighted_sum([sup_k[0]], t, h, w, self.d)
                transposed = _weighted_sum([sup_k[1]], t, h, w, self.d)
                value = max(direct, transposed)
                disc = abs(direct - transposed) / value if value > 0 else 0.0
                env = np.maximum(sup_k[0], sup_k[1])
                self._w_report = WNormReport(value, direct, transposed, disc, bool(env[0] > 1e-10 * value or env[-1] > 1e-10 * value), t, env)
        return self._w_report

    def modulus(self, delta: float) -> ModulusReport:
        """W-norm of the modulus of continuity at ``delta``.

        In d > 1 the product structure gives the pointwise bound
        ``sum_i prod_{j<i} D(t_j) m(t_i) prod_{j>i} S(t_j)`` with ``S`` the
        sup of ``|K1|``, ``D`` its sup over perturbed arguments and ``m`` the
        one-dimensional modulus.
        """
        if delta < 0:
            raise KernelError("delta must be nonnegative")
        key = float(delta)
        if key in self._moduli:
            return self._moduli[key]
        if self.quad.radius is not None and delta > self.quad.radius / 4:
            raise KernelError("delta exceeds a quarter of the truncation radius")
        t, h, (sup_k, peak, mod) = self._envelopes(delta)
        w = self.weights.omega
        values = []
        for o in range(2):
            if self.d == 1:
                terms = [[mod[o]]]
            else:
                terms = [[peak[o]] * i + [mod[o]] + [sup_k[o]] * (self.d - 1 - i) for i in range(self.d)]
            values.append(_weighted_sum(terms, t, h, w, self.d))
        rep = ModulusReport(float(delta), max(values), t, np.maximum(mod[0], mod[1]))
        self._moduli[key] = rep
        return rep


class TabulatedKernel(KernelSystem):
    """One-dimensional kernel on a rectangular grid with bilinear interpolation.

    The x- and y-grids must be uniform with a common step so that the
    diagonals ``x - y = t`` are grid lines.
    """

    def __init__(self, x_grid, y_grid, values, quad: QuadratureConfig | None = None,
                 weights: ModeratePair | None = None, name: str = "tabulated"):
        self.x = np.asarray(x_grid, dtype=float)
        self.y = np.asarray(y_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (len(self.x), len(self.y)):
            raise KernelError("kernel table shape does not match its grids")
        if len(self.x) < 2 or len(self.y) < 2:
            raise KernelError("kernel table needs at least two points per axis")
        hx, hy = np.diff(self.x), np.diff(self.y)
        self.step = float(hx[0])
        for hs in (hx, hy):
            if np.max(np.abs(hs - self.step)) > 1e-9 * self.step:
                raise KernelError("tabulated kernels need uniform grids with a common step")
        self.d = 1
        self.quad = quad or QuadratureConfig(h=self.step)
        self.weights = weights or moderate_pair(d=1)
        self.name = name
        self._interp = RegularGridInterpolator((self.x, self.y), self.values, bounds_error=True)
        self._w_report = None
        self._moduli = {}

    @classmethod
    def from_function(cls, fn, lo: float, hi: float, step: float, **kwargs):
        g = np.arange(lo, hi + step / 2, step)
        X, Y = np.meshgrid(g, g, indexing="ij")
        return cls(g, g, fn(X, Y), **kwargs)

    @classmethod
    def from_csv(cls, path, **kwargs):
        """Load ``(x, y, K)`` rows (header optional) on a rectangular grid."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec:
                    continue
                try:
                    rows.append([float(v) for v in rec[:3]])
                except ValueError:
                    if rows:
                        raise KernelError(f"malformed kernel row {rec!r}") from None
        arr = np.array(rows)
        xs, xi = np.unique(arr[:, 0], return_inverse=True)
        ys, yi = np.unique(arr[:, 1], return_inverse=True)
        if len(arr) != len(xs) * len(ys):
            raise KernelError("kernel CSV is not a complete rectangular grid")
        table = np.full((len(xs), len(ys)), np.nan)
        table[xi, yi] = arr[:, 2]
        if np.isnan(table).any():
            raise KernelError("kernel CSV has duplicate grid points")
        return cls(xs, ys, table, **kwargs)

    @property
    def label(self) -> str:
        return self.name

    def scaled(self, c: float) -> "TabulatedKernel":
        return TabulatedKernel(self.x, self.y, c * self.values, self.quad, self.weights, self.name)

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        x, y = np.broadcast_arrays(x, y)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise KernelError("kernel evaluated at a non-finite point")
        try:
            return self._interp(np.stack([x, y], axis=1))
        except ValueError:
            raise KernelError("tabulated kernel evaluated outside its grid") from None

    def _y_weights(self):
        w = np.full(len(self.y), self.step)
        w[0] = w[-1] = self.step / 2
        return w

    def apply(self, f: SignalFn) -> SignalFn:
        """Trapezoid quadrature over the y-grid; linear in x between grid nodes."""
        gx = self.values @ (self._y_weights() * f(self.y))
        xg = self.x

        def tf(x):
            x = np.asarray(x, dtype=float)
            if np.any(x < xg[0] - 1e-12) or np.any(x > xg[-1] + 1e-12):
                raise KernelError("tabulated kernel evaluated outside its grid")
            return np.interp(x, xg, gx)

        return BlackBoxFn(tf, 1, (xg[0], xg[-1]))

    def range_function(self, rng) -> SignalFn:
        lo, hi = self.y[0], self.y[-1]
        centers = rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo), size=5)
        coef = rng.standard_normal(5)
        g = BlackBoxFn(lambda y: np.exp(-(np.asarray(y)[..., None] - centers) ** 2) @ coef, 1, (lo, hi))
        return self.apply(g)

    def defect_grid(self, f=None, step=None) -> np.ndarray:
        lo = max(self.x[0], self.y[0])
        hi = min(self.x[-1], self.y[-1])
        keep = (self.y >= lo) & (self.y <= hi)
        return self.y[keep][:, None]

    def _diagonal_sups(self, table, x, y):
        """``t -> max over grid points with x - y = t`` of ``|table|`` (and for the transpose)."""
        shift = int(round((x[0] - y[0]) / self.step))
        nx, ny = table.shape
        ks = np.arange(-(ny - 1), nx)
        direct = np.array([np.max(np.abs(np.diagonal(table, offset=-k))) for k in ks])
        t = (ks + shift) * self.step
        return t, direct

    def _report(self, table, x, y) -> WNormReport:
        t, direct = self._diagonal_sups(table, x, y)
        tt, trans = self._diagonal_sups(table.T, y, x)
        # transposed variant sup_z |K(z, t + z)| is the direct variant of K^T
        grid = np.union1d(np.round(t / self.step), np.round(tt / self.step)) * self.step
        e1 = np.interp(grid, t, direct, left=0.0, right=0.0)
        e2 = np.interp(grid, tt, trans, left=0.0, right=0.0)
        w = self.weights.omega
        d1 = float(np.trapezoid(e1 * w.of_norm(np.abs(grid)), grid))
        d2 = float(np.trapezoid(e2 * w.of_norm(np.abs(grid)), grid))
        value = max(d1, d2)
        disc = abs(d1 - d2) / value if value > 0 else 0.0
        env = np.maximum(e1, e2)
        edge = max(env[0] * w.of_norm(abs(grid[0])), env[-1] * w.of_norm(abs(grid[-1])))
        return WNormReport(value, d1, d2, disc, bool(value > 0 and edge > 1e-10 * value), grid, env)

    def w_norm_report(self) -> WNormReport:
        if self._w_report is None:
            self._w_report = self._report(self.values, self.x, self.y)
        return self._w_report

    def modulus(self, delta: float) -> ModulusReport:
        if delta < 0:
            raise KernelError("delta must be nonnegative")
        key = float(delta)
        if key in self._moduli:
            return self._moduli[key]
        extent = min(self.x[-1] - self.x[0], self.y[-1] - self.y[0]) / 2
        if delta > extent / 4:
            raise KernelError("delta exceeds a quarter of the table half-width")
        xi = self.x[(self.x - delta >= self.x[0]) & (self.x + delta <= self.x[-1])]
        yi = self.y[(self.y - delta >= self.y[0]) & (self.y + delta <= self.y[-1])]
        X, Y = np.meshgrid(xi, yi, indexing="ij")
        base = self._interp(np.stack([X.ravel(), Y.ravel()], axis=1))
        dev = np.zeros_like(base)
        if delta > 0:
            for xs in _offsets(delta):
                for ys in _offsets(delta):
                    pts = np.stack([np.clip(X.ravel() + xs, self.x[0], self.x[-1]),
                                    np.clip(Y.ravel() + ys, self.y[0], self.y[-1])], axis=1)
                    np.maximum(dev, np.abs(self._interp(pts) - base), out=dev)
        rep = self._report(dev.reshape(X.shape), xi, yi)
        out = ModulusReport(float(delta), rep.value, rep.t, rep.envelope)
        self._moduli[key] = out
        return out


# module-level operations


def kernel_eval(sys: KernelSystem, x, y) -> np.ndarray:
    return sys.evaluate(x, y)


def apply_T(sys: KernelSystem, f: SignalFn) -> SignalFn:
    return sys.apply(f)


def w_norm(sys: KernelSystem) -> float:
    return sys.w_norm_report().value


def modulus_of_continuity(sys: KernelSystem, delta: float) -> ModulusReport:
    return sys.modulus(delta)


def select_delta0(sys: KernelSystem, schedule=DELTA_SCHEDULE) -> float:
    return sys.select_delta0(schedule)


def check_idempotent(sys: KernelSystem, trial_fns: int = 10, seed=0, functions=None) -> IdempotencyReport:
    """``max sup-grid |T(Tf) - Tf|`` over random range functions (or ``functions``)."""
    if functions is None:
        if trial_fns < 1:
            raise KernelError("trial_fns must be at least 1")
        rng = np.random.default_rng(seed)
        functions = [sys.range_function(rng) for _ in range(trial_fns)]
    worst = 0.0
    for f in functions:
        tf = sys.apply(f)
        ttf = sys.apply(tf)
        if isinstance(sys, ShiftInvariantKernel):
            grid = sys.defect_grid(_hull(tf, ttf))
        else:
            grid = sys.defect_grid()
        worst = max(worst, float(np.max(np.abs(ttf(grid) - tf(grid)), initial=0.0)))
    threshold = 10 * sys.quad.tol
    return IdempotencyReport(worst, threshold, worst <= threshold, len(functions))


def _hull(*fns):
    lo = np.min([f.support[0] for f in fns], axis=0)
    hi = np.max([f.support[1] for f in fns], axis=0)
    return BlackBoxFn(None, len(lo), (lo, hi))
