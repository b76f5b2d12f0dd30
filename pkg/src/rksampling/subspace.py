"""Finite-dimensional subspaces ``V^N`` spanned by lattice shifts of a generator pair.

The frame pair on the lattice box ``Lambda = Z^d cap [-N, N]^d`` is

    phi_lam(x) = prod_i phi_p(x_i - lam_i),   phi~_lam(x) = prod_i phi_d(x_i - lam_i),

with ``(phi_p, phi_d)`` the primal/dual generators of a
:class:`~rksampling.kernel.ShiftInvariantKernel`.  Functions in ``V^N`` are
represented by their coefficients; evaluation, norms and Gram matrices use
per-axis matrices and tensor contractions.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.optimize

from .generators import Sequence
from .kernel import ShiftInvariantKernel, KernelError
from .quadrature import QuadratureConfig
from .signals import SignalFn, SplineFn, ZeroFn
from .weights import WeightSpec, as_points

__all__ = [
    "LatticeBox",
    "CoefficientVector",
    "SubspaceBasis",
    "TruncationResult",
    "TruncationError",
    "SignalFn",
    "build_basis",
    "synthesize",
    "analyze",
    "lp_norm",
    "truncate_to_VN",
    "estimate_C_K",
    "estimate_C_star",
    "normalize",
    "sup_norm",
]

FRAME_MARGIN = 0.10
EMPIRICAL_MARGIN = 1.05
ENVELOPE_SUBSAMPLES = 9


@dataclass(frozen=True)
class LatticeBox:
    """Points ``spacing * k`` with ``|spacing * k_i| <= N``, enumerated lexicographically.

    ``k_lo``/``k_hi`` override the symmetric index range per axis.
    """

    d: int = 1
    N: float = 0.0
    spacing: float = 1.0
    k_lo: tuple | None = None
    k_hi: tuple | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.N < 0:
            raise ValueError("box half-width must be nonnegative")
        if not self.spacing > 0:
            raise ValueError("lattice spacing must be positive")
        if (self.k_lo is None) != (self.k_hi is None):
            raise ValueError("give both k_lo and k_hi or neither")
        if self.k_lo is not None:
            object.__setattr__(self, "k_lo", tuple(np.broadcast_to(self.k_lo, (self.d,)).tolist()))
            object.__setattr__(self, "k_hi", tuple(np.broadcast_to(self.k_hi, (self.d,)).tolist()))
            if any(a > b for a, b in zip(self.k_lo, self.k_hi)):
                raise ValueError("empty lattice box")

    @property
    def lo(self) -> np.ndarray:
        if self.k_lo is not None:
            return np.array(self.k_lo, dtype=np.int64)
        return np.full(self.d, -int(math.floor(self.N / self.spacing + 1e-12)), dtype=np.int64)

    @property
    def hi(self) -> np.ndarray:
        if self.k_hi is not None:
            return np.array(self.k_hi, dtype=np.int64)
        return -self.lo

    @property
    def shape(self) -> tuple:
        return tuple(int(v) for v in self.hi - self.lo + 1)

    def __len__(self) -> int:
        return int(np.prod(self.shape))

    @property
    def indices(self) -> np.ndarray:
        """Integer multi-indices ``(dim, d)`` in enumeration order."""
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, self.d)

    @property
    def points(self) -> np.ndarray:
        return self.indices * self.spacing

    def index_of(self, lam) -> int:
        k = np.rint(np.asarray(lam, dtype=float) / self.spacing).astype(np.int64).reshape(self.d)
        if not np.allclose(k * self.spacing, lam, rtol=0, atol=1e-12):
            raise KeyError(f"{lam} is not a lattice point")
        if np.any(k < self.lo) or np.any(k > self.hi):
            raise KeyError(f"{lam} lies outside the lattice box")
        return int(np.ravel_multi_index(tuple(k - self.lo), self.shape))

    def lambda_of(self, index: int) -> np.ndarray:
        k = np.array(np.unravel_index(index, self.shape)) + self.lo
        return k * self.spacing

    def cardinality_bound(self, delta0: float) -> float:
        """``(2N/delta0 + 1)^d`` (or the box count when the index range is explicit)."""
        if self.k_lo is not None:
            return float(len(self))
        return (2 * self.N / delta0 + 1) ** self.d


@dataclass(frozen=True)
class CoefficientVector:
    values: np.ndarray
    lattice: LatticeBox
    nu: WeightSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if len(v) != len(self.lattice):
            raise ValueError(f"coefficient length {len(v)} does not match lattice size {len(self.lattice)}")
        object.__setattr__(self, "values", v)

    @cached_property
    def nu_lambda(self) -> np.ndarray:
        return self.nu(self.lattice.points)

    def norm(self, p: float) -> float:
        return lp_nu_norm(self.values, self.nu_lambda, p)

    def scaled(self, a: float) -> "CoefficientVector":
        return CoefficientVector(a * self.values, self.lattice, self.nu)

    def __add__(self, other: "CoefficientVector") -> "CoefficientVector":
        if other.lattice != self.lattice:
            raise ValueError("coefficient vectors live on different lattices")
        return CoefficientVector(self.values + other.values, self.lattice, self.nu)


def lp_nu_norm(values, nu, p) -> np.ndarray | float:
    """``l^p_nu`` norm along the last axis."""
    a = np.abs(values) * nu
    if np.isinf(p):
        return np.max(a, axis=-1)
    return np.sum(a**p, axis=-1) ** (1.0 / p)


def _axis_matrix(gen, x, seq: Sequence, k_lo: int, k_hi: int) -> np.ndarray:
    """``M[j, k] = sum_i seq_i phi(x_j - k - i)`` for ``k_lo <= k <= k_hi``."""
    m_lo, m_hi = k_lo + seq.lo, k_hi + seq.hi
    Phi = gen.shift_matrix(x, m_lo, m_hi)
    m = np.arange(m_lo, m_hi + 1)
    k = np.arange(k_lo, k_hi + 1)
    return Phi @ seq[m[:, None] - k[None, :]]


def _row_kron(mats):
    out = mats[0]
    for M in mats[1:]:
        out = (out[:, :, None] * M[:, None, :]).reshape(len(out), -1)
    return out


@dataclass
class _Grid:
    """Tensor quadrature grid: per-axis nodes/weights and point weights."""

    axes: list
    weights: list

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def w(self) -> np.ndarray:
        out = self.weights[0]
        for w in self.weights[1:]:
            out = np.multiply.outer(out, w)
        return np.asarray(out).ravel()


def _box_grid(quad: QuadratureConfig, lo, hi) -> _Grid:
    axes, weights = [], []
    for a, b in zip(lo, hi):
        x, w = quad.nodes(float(a), float(b)) if b > a else (np.zeros(0), np.zeros(0))
        axes.append(x)
        weights.append(w)
    return _Grid(axes, weights)


@dataclass(frozen=True)
class FrameBounds:
    A: float
    B: float
    ratio_min: float
    ratio_max: float
    probes: int
    seed: int


class SubspaceBasis:
    """Dual frame pair on a lattice box with cached quadrature matrices."""

    def __init__(self, kernel: ShiftInvariantKernel, lattice: LatticeBox, p: float = 2.0,
                 delta0: float = 1.0, K_delta0_surrogate: float | None = None,
                 frame_trials: int = 200, seed: int = 0):
        if not isinstance(kernel, ShiftInvariantKernel):
            raise KernelError("bases are built from shift-invariant kernels")
        if lattice.d != kernel.d:
            raise ValueError("lattice and kernel dimension differ")
        if lattice.spacing != 1.0:
            raise ValueError("the frame pair lives on the generator lattice (spacing 1)")
        if not p >= 1:
            raise ValueError("p must be at least 1")
        self.kernel = kernel
        self.lattice = lattice
        self.p = float(p)
        self.delta0 = float(delta0)
        self.weights = kernel.weights
        self.quad = kernel.quad
        self.generator = kernel.generator
        self.d = kernel.d
        self.K_delta0_surrogate = K_delta0_surrogate
        self.seed = seed
        self.frame_trials = frame_trials
        self._frame = None

    # structural properties

    @property
    def dim(self) -> int:
        return len(self.lattice)

    @property
    def p_conjugate(self) -> float:
        if self.p == 1:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1)

    @property
    def nu(self) -> WeightSpec:
        return self.weights.nu

    @property
    def omega(self) -> WeightSpec:
        return self.weights.omega

    @cached_property
    def nu_lambda(self) -> np.ndarray:
        return self.nu(self.lattice.points)

    def _seq_support(self, seq: Sequence):
        glo, ghi = self.generator.support()
        lo = self.lattice.lo + seq.lo + glo
        hi = self.lattice.hi + seq.hi + ghi
        return lo.astype(float), hi.astype(float)

    @property
    def synthesis_support(self):
        return self._seq_support(self.kernel.primal)

    @property
    def analysis_support(self):
        return self._seq_support(self.kernel.dual)

    # evaluation

    def _axis_mats(self, x, seq):
        pts = as_points(x, self.d)
        return [_axis_matrix(self.generator, pts[:, i], seq, int(self.lattice.lo[i]), int(self.lattice.hi[i]))
                for i in range(self.d)]

    def phi_matrix(self, x) -> np.ndarray:
        """``Psi[j, lam] = phi_lam(x_j)``."""
        return _row_kron(self._axis_mats(x, self.kernel.primal))

    def dual_matrix(self, x) -> np.ndarray:
        return _row_kron(self._axis_mats(x, self.kernel.dual))

    def coefficients(self, values) -> CoefficientVector:
        return CoefficientVector(values, self.lattice, self.nu)

    def synthesize(self, c) -> SplineFn:
        if not isinstance(c, CoefficientVector):
            c = self.coefficients(c)
        if c.lattice != self.lattice:
            raise ValueError("coefficient vector is indexed by a different lattice")
        coef = c.values.reshape(self.lattice.shape)
        for i in range(self.d):
            coef = np.apply_along_axis(np.convolve, i, coef, self.kernel.primal.values)
        return SplineFn(self.generator, coef, self.lattice.lo + self.kernel.primal.lo, self, c)

    def analyze(self, f: SignalFn) -> CoefficientVector:
        """``c(lam) = <f, phi~_lam>`` by quadrature over the dual supports."""
        lo, hi = self.analysis_support
        if f.support is not None:
            lo, hi = np.maximum(lo, f.support[0]), np.minimum(hi, f.support[1])
        if np.any(hi <= lo):
            return self.coefficients(np.zeros(self.dim))
        grid = _box_grid(self.quad, lo, hi)
        vals = f.evaluate(grid.points) * grid.w
        return self.coefficients(self._contract(vals.reshape(grid.shape), grid.axes, self.kernel.dual))

    def _contract(self, arr, axes, seq):
        out = arr
        for i, x in enumerate(axes):
            M = _axis_matrix(self.generator, x, seq, int(self.lattice.lo[i]), int(self.lattice.hi[i]))
            out = np.moveaxis(np.tensordot(out, M, axes=([i], [0])), -1, i)
        return out.reshape(-1)

    # grids and norms

    def domain_box(self, domain="full"):
        lo, hi = self.synthesis_support
        if domain == "full":
            return lo, hi
        M = float(domain)
        return np.maximum(lo, -M), np.minimum(hi, M)

    def grid(self, domain="full") -> _Grid:
        key = "full" if domain == "full" else float(domain)
        cache = self.__dict__.setdefault("_grids", {})
        if key not in cache:
            lo, hi = self.domain_box(domain)
            cache[key] = _box_grid(self.quad, lo, hi)
        return cache[key]

    def _grid_axis_mats(self, domain="full"):
        key = "full" if domain == "full" else float(domain)
        cache = self.__dict__.setdefault("_gmats", {})
        if key not in cache:
            g = self.grid(domain)
            cache[key] = [_axis_matrix(self.generator, x, self.kernel.primal,
                                       int(self.lattice.lo[i]), int(self.lattice.hi[i]))
                          for i, x in enumerate(g.axes)]
        return cache[key]

    def _grid_nu(self, domain="full"):
        key = "full" if domain == "full" else float(domain)
        cache = self.__dict__.setdefault("_gnu", {})
        if key not in cache:
            g = self.grid(domain)
            cache[key] = np.ones(len(g.w)) if self.nu.is_constant else self.nu(g.points)
        return cache[key]

    def grid_values(self, C, domain="full") -> np.ndarray:
        """Values of ``sum_lam C[lam, b] phi_lam`` on the grid, shape ``(points, B)``."""
        C = np.asarray(C, dtype=float)
        single = C.ndim == 1
        if single:
            C = C[:, None]
        mats = self._grid_axis_mats(domain)
        arr = C.reshape(self.lattice.shape + (C.shape[1],))
        for i, M in enumerate(mats):
            arr = np.moveaxis(np.tensordot(arr, M, axes=([i], [1])), -1, i)
        out = arr.reshape(-1, C.shape[1])
        return out[:, 0] if single else out

    def lp_norms(self, C, p=None, domain="full", chunk=256) -> np.ndarray:
        """``||sum_lam C[:, b] phi_lam||_{L^p_nu(domain)}`` for each column of ``C``."""
        p = self.p if p is None else p
        C = np.asarray(C, dtype=float)
        single = C.ndim == 1
        if single:
            C = C[:, None]
        g = self.grid(domain)
        nu = self._grid_nu(domain)
        out = np.empty(C.shape[1])
        for s in range(0, C.shape[1], chunk):
            V = np.abs(self.grid_values(C[:, s:s + chunk], domain)) * nu[:, None]
            if np.isinf(p):
                out[s:s + chunk] = np.max(V, axis=0, initial=0.0)
            else:
                out[s:s + chunk] = (g.w @ V**p) ** (1.0 / p)
        return out[0] if single else out

    def sup_norms(self, C, domain="full") -> np.ndarray:
        return self.lp_norms(C, math.inf, domain)

    def coefficient_norms(self, C, p=None) -> np.ndarray:
        p = self.p if p is None else p
        C = np.asarray(C, dtype=float)
        return lp_nu_norm(C.T if C.ndim == 2 else C, self.nu_lambda, p)

    def gram(self, domain="full") -> np.ndarray:
        """``G[lam, mu] = int_domain phi_lam phi_mu nu^2``."""
        key = "full" if domain == "full" else float(domain)
        cache = self.__dict__.setdefault("_gram", {})
        if key not in cache:
            g = self.grid(domain)
            mats = self._grid_axis_mats(domain)
            if self.nu.is_constant:
                G = np.ones((1, 1))
                for M, w in zip(mats, g.weights):
                    G = np.kron(G, M.T @ (w[:, None] * M))
            else:
                G = np.zeros((self.dim, self.dim))
                wnu = g.w * self._grid_nu(domain) ** 2
                step = max(1, 2**20 // max(self.dim, 1))
                for s in range(0, len(wnu), step):
                    rows = g.points[s:s + step]
                    P = self.phi_matrix(rows)
                    G += P.T @ (wnu[s:s + step, None] * P)
            cache[key] = 0.5 * (G + G.T)
        return cache[key]

    @cached_property
    def analysis_matrix(self) -> np.ndarray:
        """``D[lam, mu] = <phi_mu, phi~_lam>``; the identity for an exact dual pair."""
        lo, hi = self.analysis_support
        slo, shi = self.synthesis_support
        grid = _box_grid(self.quad, np.maximum(lo, slo), np.minimum(hi, shi))
        P = [_axis_matrix(self.generator, x, self.kernel.primal, int(self.lattice.lo[i]), int(self.lattice.hi[i]))
             for i, x in enumerate(grid.axes)]
        Dm = [_axis_matrix(self.generator, x, self.kernel.dual, int(self.lattice.lo[i]), int(self.lattice.hi[i]))
              for i, x in enumerate(grid.axes)]
        out = np.ones((1, 1))
        for A, B, w in zip(P, Dm, grid.weights):
            out = np.kron(out, B.T @ (w[:, None] * A))
        return out

    # randomized probes

    def random_coefficients(self, count: int, rng) -> np.ndarray:
        """Standard normal coefficient columns ``(dim, count)``."""
        return rng.standard_normal((self.dim, count))

    def structured_probes(self, p=None) -> np.ndarray:
        """One-hot vectors and, for p = 2, the extreme Gram eigenvectors."""
        p = self.p if p is None else p
        cols = [np.eye(self.dim)]
        if p == 2:
            cols.append(_extreme_eigvecs(self.gram(), self.nu_lambda))
        return np.concatenate(cols, axis=1)

    def frame_bounds(self) -> FrameBounds:
        """``A_p, B_p`` from analysis-map norm ratios over random and structured probes."""
        if self._frame is None:
            rng = np.random.default_rng(self.seed)
            C = np.concatenate([self.random_coefficients(max(self.frame_trials, 200), rng),
                                self.structured_probes()], axis=1)
            r = self.coefficient_norms(self.analysis_matrix @ C) / self.lp_norms(C)
            self._frame = FrameBounds((1 - FRAME_MARGIN) * r.min(), (1 + FRAME_MARGIN) * r.max(),
                                      float(r.min()), float(r.max()), C.shape[1], self.seed)
        return self._frame

    @property
    def A_p(self) -> float:
        return self.frame_bounds().A

    @property
    def B_p(self) -> float:
        return self.frame_bounds().B

    # envelope

    @cached_property
    def envelope(self):
        """Cell-wise bounds of ``|phi_p|`` and ``|phi_d|`` on a step-h grid.

        Returns ``(t_left, h, E_p, E_d)``: on the cell ``[t_k, t_k + h]`` the
        one-dimensional generators are bounded by ``E_p[k]`` and ``E_d[k]``,
        so ``|phi_lam(x)| + |phi~_lam(x)| <= prod E_p + prod E_d`` at ``x - lam``.
        """
        h = 1.0 / self.quad.cells_per_unit()
        lo = min(self.kernel.primal_support()[0], self.kernel.dual_support()[0])
        hi = max(self.kernel.primal_support()[1], self.kernel.dual_support()[1])
        k0, k1 = int(math.floor(lo / h)), int(math.ceil(hi / h))
        t = np.arange(k0, k1) * h
        sub = t[:, None] + np.linspace(0.0, h, ENVELOPE_SUBSAMPLES)[None, :]
        return t, h, _cell_bound(self.kernel.primal_fn(sub)), _cell_bound(self.kernel.dual_fn(sub))

    def envelope_at(self, t) -> np.ndarray:
        """Envelope ``h_env`` at offsets ``t`` (``(n, d)``), zero outside the table."""
        tl, h, Ep, Ed = self.envelope
        pts = as_points(t, self.d)
        k = np.floor((pts - tl[0]) / h + 1e-9).astype(np.int64)
        inside = np.all((k >= 0) & (k < len(tl)), axis=1)
        kc = np.clip(k, 0, len(tl) - 1)
        return np.where(inside, np.prod(Ep[kc], axis=1) + np.prod(Ed[kc], axis=1), 0.0)

    def envelope_L1(self) -> float:
        """``||h_env||_{L^1_omega}`` with omega taken at the outer corner of each cell."""
        from .kernel import _weighted_sum

        tl, h, Ep, Ed = self.envelope
        outer = np.maximum(np.abs(tl), np.abs(tl + h))
        return _weighted_sum([[Ep] * self.d, [Ed] * self.d], outer, h, self.omega, self.d)

    # constants

    @property
    def K_W(self) -> float:
        return self.kernel.w_norm_report().value

    @property
    def K_delta0_W(self) -> float:
        return self.K_W if self.K_delta0_surrogate is None else float(self.K_delta0_surrogate)

    def _cell_factor(self) -> float:
        """``delta0^{-d/p} max_cell omega ||K_delta0||_W ||K||_W``."""
        cell = self.omega.max_on_cell(self.delta0 / 2)
        return self.delta0 ** (-self.d / self.p) * cell * self.K_delta0_W * self.K_W

    def C_K_formula(self) -> float:
        p = self.p
        value = self.weights.C0**p * self._cell_factor() ** (p - 1) * self.envelope_L1()
        return value ** (1.0 / p)

    def C_star_formula(self) -> float:
        return self.B_p * self.weights.C0 * self._cell_factor()

    def summary_rows(self):
        pts = self.lattice.points
        for i in range(self.dim):
            yield [i, *pts[i].tolist(), float(self.nu_lambda[i])]

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", *[f"lambda_{i}" for i in range(self.d)], "nu_lambda"])
            for row in self.summary_rows():
                w.writerow([row[0], *[f"{v:.17g}" for v in row[1:]]])


def _cell_bound(v: np.ndarray) -> np.ndarray:
    """Row maxima of ``|v|`` plus the largest jump between neighbouring subsamples.

    Between two subsamples a function can exceed the sampled values by at
    most about half a jump, so adding a full jump bounds the cell maximum.
    """
    return np.max(np.abs(v), axis=1) + np.max(np.abs(np.diff(v, axis=1)), axis=1)


def _extreme_eigvecs(G, nu_lambda) -> np.ndarray:
    """Minimizer and maximizer of ``c^T G c / ||c||_{l^2_nu}^2``."""
    s = 1.0 / nu_lambda
    H = s[:, None] * G * s[None, :]
    w, V = np.linalg.eigh(H)
    return s[:, None] * V[:, [0, -1]]


# module-level operations


def build_basis(sys: ShiftInvariantKernel, N: float, p: float = 2.0, delta0: float | None = None,
                lattice: LatticeBox | None = None, K_delta0_surrogate: float | None = None,
                frame_trials: int = 200, seed: int = 0) -> SubspaceBasis:
    """Frame pair on ``Z^d cap [-N, N]^d`` (or an explicit ``lattice``).

    ``delta0`` defaults to the kernel's schedule selection; it enters the
    constants only, since the generator lattice is fixed at spacing 1.
    """
    if delta0 is None:
        delta0 = sys.select_delta0()
    lattice = lattice or LatticeBox(sys.d, N)
    return SubspaceBasis(sys, lattice, p, delta0, K_delta0_surrogate, frame_trials, seed)


def synthesize(basis: SubspaceBasis, c) -> SplineFn:
    return basis.synthesize(c)


def analyze(basis: SubspaceBasis, f: SignalFn) -> CoefficientVector:
    return basis.analyze(f)


def lp_norm(f: SignalFn, p: float, nu: WeightSpec, domain="full", quad: QuadratureConfig | None = None) -> float:
    """``||f nu||_{L^p}`` over the cube ``[-M, M]^d`` (``domain = M``) or the support of ``f``."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    quad = quad or QuadratureConfig()
    if isinstance(f, ZeroFn):
        return 0.0
    sup = f.support
    if domain == "full":
        if sup is None:
            if quad.radius is None:
                raise ValueError("signal has no known support; give a cube or quad.radius")
            lo, hi = np.full(f.d, -quad.radius), np.full(f.d, quad.radius)
        else:
            lo, hi = sup
    else:
        M = float(domain)
        lo, hi = np.full(f.d, -M), np.full(f.d, M)
        if sup is not None:
            lo, hi = np.maximum(lo, sup[0]), np.minimum(hi, sup[1])
    if np.any(hi <= lo):
        return 0.0
    grid = _box_grid(quad, lo, hi)
    v = np.abs(f.evaluate(grid.points)) * nu(grid.points)
    if np.isinf(p):
        return float(np.max(v, initial=0.0))
    return float(grid.w @ v**p) ** (1.0 / p)


def sup_norm(f: SignalFn, nu: WeightSpec, lo=None, hi=None, quad: QuadratureConfig | None = None,
             polish: int = 8) -> float:
    """``sup |f nu|`` on a box: grid maximum, polished by bounded local searches in 1-D.

    The ``polish`` largest grid values are refined on their neighbouring
    cells; the result is never below the grid maximum.
    """
    quad = quad or QuadratureConfig()
    if lo is None:
        if f.support is None:
            raise ValueError("give a box for signals without known support")
        lo, hi = f.support
    lo = np.broadcast_to(np.asarray(lo, float), (f.d,))
    hi = np.broadcast_to(np.asarray(hi, float), (f.d,))
    grid = _box_grid(quad, lo, hi)
    pts = grid.points
    edges = [np.unique(np.concatenate([a, [l, h]])) for a, l, h in zip(grid.axes, lo, hi)]
    if f.d == 1:
        pts = np.sort(np.concatenate([pts[:, 0], edges[0]]))[:, None]
    v = np.abs(f.evaluate(pts)) * nu(pts)
    best = float(np.max(v, initial=0.0))
    if f.d != 1 or polish <= 0 or len(pts) < 3:
        return best
    x = pts[:, 0]
    for i in np.argsort(v)[::-1][:polish]:
        a, b = x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)]
        if b <= a:
            continue
        res = scipy.optimize.minimize_scalar(lambda t: -float(abs(f(np.array([t]))[0]) * nu(np.array([t]))[0]),
                                             bounds=(a, b), method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


class TruncationError(RuntimeError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class TruncationResult:
    N_used: float
    f_N: SplineFn
    eps_p: float
    eps_inf: float
    schedule: tuple = field(default=())


def truncate_to_VN(f: SplineFn, N: float, eps: float, M: float) -> TruncationResult:
    """Keep the coefficients of ``f`` on ``[-N, N]^d``, doubling ``N`` until both
    ``||f - f_N||_{L^p_nu(C_M)} <= eps`` and ``||f - f_N||_{L^inf_nu(C_M)} <= eps / (2M)^d``.
    """
    basis = f.basis
    if basis is None or f.coefficients is None:
        raise ValueError("truncation needs a coefficient-backed signal")
    c = f.coefficients.values
    pts = basis.lattice.points
    Nmax = float(np.max(np.abs(pts))) if len(pts) else 0.0
    d = basis.d
    target_inf = eps / (2 * M) ** d
    Ncur = float(N)
    tried = []
    best = None
    while True:
        keep = np.all(np.abs(pts) <= Ncur + 1e-12, axis=1)
        tail = np.where(keep, 0.0, c)
        e_p = float(basis.lp_norms(tail, domain=M))
        e_inf = float(basis.sup_norms(tail, domain=M))
        tried.append((Ncur, e_p, e_inf))
        if best is None or (e_p, e_inf) < best[1:]:
            best = (Ncur, e_p, e_inf)
        if e_p <= eps and e_inf <= target_inf:
            f_N = basis.synthesize(np.where(keep, c, 0.0))
            return TruncationResult(Ncur, f_N, e_p, e_inf, tuple(tried))
        if Ncur >= Nmax:
            raise TruncationError(
                f"schedule exhausted at N={Ncur:g}: errors ({e_p:.3g}, {e_inf:.3g}) vs targets ({eps:.3g}, {target_inf:.3g})",
                best,
            )
        Ncur = min(Nmax, max(1.0, 2 * Ncur))


def estimate_C_K(basis: SubspaceBasis, mode: str = "formula", trials: int = 1000, seed: int = 0) -> float:
    """Synthesis bound ``||sum c phi||_{L^p_nu} <= C_K ||c||_{l^p_nu}``.

    ``formula`` evaluates the closed-form constant; ``empirical`` returns the
    largest observed ratio over random and structured probes, times 1.05.
    """
    if mode == "formula":
        return basis.C_K_formula()
    if mode != "empirical":
        raise ValueError("mode must be 'formula' or 'empirical'")
    rng = np.random.default_rng(seed)
    C = np.concatenate([basis.random_coefficients(trials, rng), basis.structured_probes()], axis=1)
    r = basis.lp_norms(C) / basis.coefficient_norms(C)
    return EMPIRICAL_MARGIN * float(r.max())


def reproducing_sup(basis: SubspaceBasis, domain="full") -> tuple[float, np.ndarray]:
    """``max_x nu(x) sqrt(Psi(x)^T G^{-1} Psi(x))`` over the grid (p = 2 extremal ratio).

    Returns the value and the coefficients of the maximizing function.
    """
    G = basis.gram()
    g = basis.grid(domain)
    Ginv = np.linalg.pinv(G, hermitian=True)
    best, arg = -1.0, None
    step = max(1, 2**18 // max(basis.dim, 1))
    nu = basis._grid_nu(domain)
    for s in range(0, len(g.w), step):
        P = basis.phi_matrix(g.points[s:s + step])
        q = np.einsum("ij,jk,ik->i", P, Ginv, P)
        vals = np.sqrt(np.maximum(q, 0.0)) * nu[s:s + step]
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, arg = float(vals[j]), Ginv @ P[j]
    return best, arg


def estimate_C_star(basis: SubspaceBasis, mode: str = "formula", trials: int = 1000, seed: int = 0) -> float:
    """Sup-norm bound ``||f||_{L^inf_nu} <= C* ||f||_{L^p_nu}`` on ``V^N``."""
    if mode == "formula":
        return basis.C_star_formula()
    if mode != "empirical":
        raise ValueError("mode must be 'formula' or 'empirical'")
    rng = np.random.default_rng(seed)
    C = np.concatenate([basis.random_coefficients(trials, rng), basis.structured_probes()], axis=1)
    _, c2 = reproducing_sup(basis)
    C = np.concatenate([C, c2[:, None]], axis=1)
    r = basis.sup_norms(C) / basis.lp_norms(C)
    return EMPIRICAL_MARGIN * float(r.max())


def normalize(basis: SubspaceBasis, f: SignalFn) -> SignalFn:
    """``f / ||f||_{L^p_nu}`` onto the unit sphere of ``V^N``."""
    if isinstance(f, SplineFn) and f.basis is basis and f.coefficients is not None:
        n = float(basis.lp_norms(f.coefficients.values))
    else:
        n = lp_norm(f, basis.p, basis.nu, quad=basis.quad)
    if not n > 0:
        raise ValueError("cannot normalize the zero function")
    return f.scaled(1.0 / n)
