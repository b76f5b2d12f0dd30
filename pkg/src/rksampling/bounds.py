"""Closed-form covering, concentration and stability constants.

Every probability is clipped to ``[0, 1]`` and flagged ``vacuous`` when the
unclipped tail bound is at least one.  Exponentially large quantities are
carried as logarithms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

__all__ = [
    "ConstantsBundle",
    "DeviationConstants",
    "TailBound",
    "NetResult",
    "covering_ball_bound",
    "covering_sphere_bound",
    "greedy_net_oracle",
    "bernstein_bound",
    "xj_moment_bounds",
    "scan_C3",
    "scan_C4",
    "deviation_constants",
    "deviation_tail",
    "stability_probability",
    "required_sample_size",
    "stability_constants_LU",
    "condition_number_bound",
]

SCAN_RANGE = range(2, 65)
GROWTH_LIMIT = 0.01


def covering_ball_bound(s: int, eps: float, eta: float) -> float:
    """``(2 eps / eta + 1)^s`` balls of radius ``eta`` cover a radius-``eps`` ball in ``R^s``."""
    if s < 1 or not eps > 0 or not eta > 0:
        raise ValueError("need s >= 1 and eps, eta > 0")
    return (2.0 * eps / eta + 1.0) ** s


def covering_sphere_bound(N: float, d: int, delta0: float, eta: float, C_star: float | None = None,
                          count: float | None = None) -> tuple[float, float]:
    """Covering bound for the unit sphere of ``V^N``; returns ``(value, log value)``.

    The exponent base ``(2N/delta0 + 1)^d`` bounds the dimension; ``count``
    replaces it with an explicit dimension bound.  Without ``C_star`` the
    ``L^p`` form ``ln(2/eta + 1)`` is used.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    s = (2.0 * N / delta0 + 1.0) ** d if count is None else float(count)
    radius = 1.0 if C_star is None else float(C_star)
    log_value = s * math.log(2.0 * radius / eta + 1.0)
    value = math.exp(log_value) if log_value < 700 else math.inf
    return value, log_value


class ProbeBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetResult:
    size: int
    bound: float
    log_bound: float
    probes: int
    late_growth: float
    C_star: float


def greedy_net_oracle(basis, eta: float, probe_count: int, seed: int = 0, C_star: float | None = None) -> NetResult:
    """Greedy ``eta``-separated net over random points of the unit sphere of ``V^N``.

    Distances are ``L^inf_nu`` grid norms.  An ``eta``-separated subset of
    the sphere has disjoint ``eta/2``-balls inside the ``(C* + eta/2)``-ball,
    so its size obeys the covering bound.  ``C_star`` defaults to the
    empirical sup-norm constant.  The budget counts as exhausted when more
    than 1% of the probes in the last tenth still became new centres.
    """
    from .subspace import estimate_C_star

    if basis.dim > 8:
        raise ValueError("greedy nets are limited to dim <= 8")
    if C_star is None:
        C_star = estimate_C_star(basis, "empirical", seed=seed)
    bound, log_bound = covering_sphere_bound(0, 1, 1.0, eta, C_star, count=basis.lattice.cardinality_bound(basis.delta0))
    if probe_count < min(10 * bound, 1e12):
        raise ValueError(f"probe_count {probe_count} is below 10x the covering bound {bound:.4g}")
    rng = np.random.default_rng(seed)
    nu = basis._grid_nu()
    centers = np.zeros((0, len(nu)))
    added = []
    chunk = 4096
    done = 0
    while done < probe_count:
        C = basis.random_coefficients(min(chunk, probe_count - done), rng)
        C = C / basis.lp_norms(C)[None, :]
        V = (basis.grid_values(C) * nu[:, None]).T
        for i, v in enumerate(V):
            if len(centers) == 0 or np.min(np.max(np.abs(centers - v), axis=1)) > eta:
                centers = np.vstack([centers, v])
                added.append(done + i)
        done += len(V)
    late = sum(a >= 0.9 * probe_count for a in added) / max(1, probe_count - math.ceil(0.9 * probe_count))
    if late > GROWTH_LIMIT:
        raise ProbeBudgetError(f"net still growing at rate {late:.3g} in the last tenth of {probe_count} probes; "
                               "increase the probe budget")
    size = len(centers)
    if size > bound:
        raise AssertionError(f"net size {size} exceeds the covering bound {bound:.6g}")
    return NetResult(size, bound, log_bound, probe_count, late, float(C_star))


def bernstein_bound(n: int, sigma2: float, M0: float, lam) -> np.ndarray | float:
    """``min(1, 2 exp(-lam^2 / (2 n sigma^2 + 2 M0 lam / 3)))``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or n < 0 or sigma2 < 0 or M0 < 0:
        raise ValueError("arguments must be nonnegative")
    den = 2.0 * n * sigma2 + (2.0 / 3.0) * M0 * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(lam > 0, -lam**2 / np.where(den > 0, den, 1.0), 0.0)
        expo = np.where((den == 0) & (lam > 0), -np.inf, expo)
    out = np.minimum(1.0, 2.0 * np.exp(expo))
    return float(out) if out.ndim == 0 else out


def xj_moment_bounds(p, C_rho, f_inf, f_p, g_inf, g_p, fg_inf):
    """Bounds on ``|X_j(f)|``, ``|X_j(f) - X_j(g)|``, ``Var X_j(f)`` and ``Var(X_j(f) - X_j(g))``."""
    if min(f_inf, f_p, g_inf, g_p, fg_inf) < 0:
        raise ValueError("norms must be nonnegative")
    big = max(f_inf, g_inf) ** (p - 1)
    return (
        f_inf**p,
        2.0 * p * big * fg_inf,
        C_rho * f_inf**p * f_p**p,
        p * C_rho * big * fg_inf * (f_p**p + g_p**p),
    )


def _exact_sqrt(q: Fraction) -> Fraction:
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n != q.numerator or d * d != q.denominator:
        raise ArithmeticError(f"{q} is not a rational square")
    return Fraction(n, d)


def scan_C3(scan=SCAN_RANGE) -> tuple[Fraction, int]:
    """``min_l 2^{l/2} / l^4`` by exact comparison of squares ``2^l / l^8``.

    Past the minimizer the ratio of consecutive squares ``2 (l/(l+1))^8`` is
    increasing in ``l``, so ``>= 1`` at the minimizer certifies the tail.
    """
    sq = {l: Fraction(2**l, l**8) for l in scan}
    arg = min(sq, key=sq.get)
    if 2 * Fraction(arg, arg + 1) ** 8 < 1:
        raise ArithmeticError("scan minimum is not certified by the tail check")
    return _exact_sqrt(sq[arg]), arg


def scan_C4(scan=SCAN_RANGE) -> tuple[Fraction, int]:
    """``max_l l / 2^{l/2}`` as the exact square ``l^2 / 2^l`` and its maximizer.

    The coefficient of ``p (C*)^{p-1}`` is ``8 ln 2`` times the square root,
    i.e. ``8 ln 2 * 3 / (2 sqrt 2) = 6 sqrt 2 ln 2`` at ``l = 3``.
    Consecutive squares have ratio ``(l+1)^2 / (2 l^2)``, decreasing in ``l``.
    """
    sq = {l: Fraction(l * l, 2**l) for l in scan}
    arg = max(sq, key=sq.get)
    if Fraction((arg + 1) ** 2, 2 * arg * arg) > 1:
        raise ArithmeticError("scan maximum is not certified by the tail check")
    return sq[arg], arg


C4_COEFFICIENT = 6.0 * math.sqrt(2.0) * math.log(2.0)


@dataclass(frozen=True)
class DeviationConstants:
    """``A = exp(C N^d)``, ``B`` and ``C`` of the uniform deviation bound."""

    p: float
    d: int
    delta0: float
    N: float
    C_star: float
    C3: float
    C4: float
    B: float
    C: float
    C_entropy: float
    C_branch: float
    log_A: float

    @property
    def A(self) -> float:
        return math.exp(self.log_A) if self.log_A < 700 else math.inf

    def scaled_A(self, factor: float) -> "DeviationConstants":
        return DeviationConstants(**{**asdict(self), "log_A": self.log_A + math.log(factor)})

    def items(self):
        return [("A", self.A), ("log_A", self.log_A), ("B", self.B), ("C", self.C),
                ("C_entropy", self.C_entropy), ("C_branch", self.C_branch), ("C3", self.C3), ("C4", self.C4)]


def deviation_constants(p: float, d: int, delta0: float, N: float, C_star: float) -> DeviationConstants:
    """Both candidate values of ``C`` are kept; ``C`` is the larger."""
    if not C_star > 0:
        raise ValueError("C* must be positive")
    c3, _ = scan_C3()
    c4sq, _ = scan_C4()
    C3 = float(c3)
    C4 = 8.0 * math.log(2.0) * math.sqrt(float(c4sq)) * p * C_star ** (p - 1)
    B = min(math.sqrt(2.0) / (2592.0 * p * C_star ** (p - 1)), 3.0 / (2.0 * C_star**p))
    cells = (1.0 + 1.0 / delta0) ** d
    C_entropy = 2.0 ** (d + 1) * cells * math.log(2.0 * C_star + 1.0)
    C_branch = 648.0 * C4 * B * 2.0**d * cells
    C = max(C_entropy, C_branch)
    return DeviationConstants(p, d, delta0, N, C_star, C3, C4, B, C, C_entropy, C_branch, C * N**d)


@dataclass(frozen=True)
class TailBound:
    value: float
    log_value: float
    vacuous: bool


def deviation_tail(consts: DeviationConstants, n: int, C_rho: float, lam: float) -> TailBound:
    """``min(1, A exp(-B lam^2 / (12 n C_rho + 2 lam)))``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    den = 12.0 * n * C_rho + 2.0 * lam
    log_value = consts.log_A - (consts.B * lam**2 / den if lam > 0 else 0.0)
    return TailBound(math.exp(min(log_value, 0.0)), log_value, log_value >= 0)


def _stability_exponent(consts, n, c_rho, C_rho, gamma):
    return consts.B * gamma**2 * n * c_rho**2 / (12.0 * C_rho + 2.0 * gamma * c_rho)


def stability_probability(consts: DeviationConstants, n: int, c_rho: float, C_rho: float, gamma: float) -> TailBound:
    """Success probability ``1 - A exp(-B gamma^2 n c^2 / (12 C + 2 gamma c))``; flags vacuity of the tail."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    log_tail = consts.log_A - _stability_exponent(consts, n, c_rho, C_rho, gamma)
    value = 0.0 if log_tail >= 0 else -math.expm1(log_tail)
    return TailBound(value, log_tail, log_tail >= 0)


def required_sample_size(consts: DeviationConstants, c_rho: float, C_rho: float, gamma: float, target: float) -> int:
    """Smallest ``n`` with ``stability_probability >= target``."""
    if not 0 < target < 1:
        raise ValueError("target probability must lie in (0, 1)")
    rate = _stability_exponent(consts, 1, c_rho, C_rho, gamma)
    n = math.ceil((consts.log_A - math.log1p(-target)) / rate)
    while stability_probability(consts, n, c_rho, C_rho, gamma).value < target:
        n += 1
    return n


def stability_constants_LU(eps, gamma, delta, p, c_rho, C_rho, B_p, C_K, C_star, M, d):
    """Lower and upper sampling constants ``(L, U, L > 0)``."""
    if not (0 < eps < 1 and 0 < gamma < 1 and 0 < delta < 1):
        raise ValueError("need 0 < eps, gamma, delta < 1")
    frame = (B_p * C_K) ** p
    tail = p * C_star ** (p - 1) * eps / (2.0 * M) ** d
    L = c_rho * (1.0 - delta - p * (1.0 + eps) ** (p - 1) * eps - gamma * frame) - tail
    U = (c_rho * gamma + C_rho) * frame + tail
    return L, U, L > 0


class AdmissibilityError(ValueError):
    pass


def condition_number_bound(gamma, c_rho, C_rho, alpha_p, C_K, p) -> float:
    """``((c gamma + C) / (c (alpha^p - gamma C_K^p)))^{1/p} C_K`` for ``0 < gamma < alpha^p / C_K^p``."""
    hi = alpha_p**p / C_K**p
    if not 0 < gamma < hi:
        raise AdmissibilityError(f"gamma={gamma:g} outside the admissible interval (0, {hi:.6g})")
    return ((c_rho * gamma + C_rho) / (c_rho * (alpha_p**p - gamma * C_K**p))) ** (1.0 / p) * C_K


@dataclass(frozen=True)
class ConstantsBundle:
    p: float
    d: int
    delta0: float
    N: float
    C0: float
    K_W: float
    C_K: float
    C_star: float
    B_p: float
    A_p: float
    c_rho: float
    C_rho: float
    M: float
    R: float
    delta: float

    def __post_init__(self):
        positive = ("delta0", "C0", "K_W", "C_K", "C_star", "B_p", "A_p", "c_rho", "C_rho", "M", "R")
        bad = [k for k in positive if not getattr(self, k) > 0]
        if bad:
            raise ValueError(f"constants must be positive: {bad}")
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.M > self.R:
            raise ValueError("need M > R")
        if not self.p >= 1:
            raise ValueError("p must be at least 1")

    def deviation(self) -> DeviationConstants:
        return deviation_constants(self.p, self.d, self.delta0, self.N, self.C_star)

    def LU(self, eps: float, gamma: float):
        return stability_constants_LU(eps, gamma, self.delta, self.p, self.c_rho, self.C_rho,
                                      self.B_p, self.C_K, self.C_star, self.M, self.d)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]
