"""Least-squares reconstruction from samples and weighted condition numbers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.optimize

from .bounds import AdmissibilityError, condition_number_bound
from .sampling import DensitySpec, SampleSet, draw_samples
from .signals import SignalFn

__all__ = [
    "SamplingMatrix",
    "ReconstructionResult",
    "ConditionEstimate",
    "ConditionBoundReport",
    "SingularGramError",
    "GRAM_CONDITION_LIMIT",
    "build_U",
    "reconstruct_ls",
    "reconstruction_functions",
    "condition_number",
    "sampling_event_p2",
    "zeta_witness",
    "verify_condition_bound",
    "estimate_alpha_p",
    "reconstruct",
]

GRAM_CONDITION_LIMIT = 1e12
ALPHA_MARGIN = 0.95
EMPIRICAL_MARGIN = 1.05


class SingularGramError(np.linalg.LinAlgError):
    def __init__(self, condition: float):
        super().__init__(f"Gram matrix U^T U has condition {condition:.3g} > {GRAM_CONDITION_LIMIT:.0e}; draw more samples")
        self.condition = condition


@dataclass(frozen=True)
class SamplingMatrix:
    """``U[j, lam] = phi_lam(x_j)`` with row weights ``nu(x_j)`` and column weights ``nu(lam)``."""

    entries: np.ndarray
    row_weights: np.ndarray
    col_weights: np.ndarray
    points: np.ndarray

    @classmethod
    def from_weighted(cls, WU, basis, points) -> "SamplingMatrix":
        """Rebuild from ``nu(x_j) phi_lam(x_j)`` without re-evaluating the generators."""
        nu_x = basis.nu(points)
        return cls(WU / nu_x[:, None], nu_x, basis.nu_lambda, points)

    @property
    def shape(self):
        return self.entries.shape

    def weighted(self) -> np.ndarray:
        return self.row_weights[:, None] * self.entries / self.col_weights[None, :]

    def sample_norm(self, c, p: float) -> float:
        """``||U c||_{l^p_nu}^p = sum_j |g(x_j) nu(x_j)|^p``."""
        return float(np.sum((np.abs(self.entries @ np.asarray(c, dtype=float)) * self.row_weights) ** p))

    @cached_property
    def gram_condition(self) -> float:
        s = np.linalg.svd(self.entries, compute_uv=False)
        return math.inf if s[-1] == 0 else float((s[0] / s[-1]) ** 2)


def build_U(basis, samples: SampleSet | np.ndarray) -> SamplingMatrix:
    pts = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float).reshape(-1, basis.d)
    if len(pts) == 0:
        raise ValueError("need at least one sample")
    return SamplingMatrix(basis.phi_matrix(pts), basis.nu(pts), basis.nu_lambda, pts)


def _factor(U: SamplingMatrix):
    n, dim = U.shape
    if n < dim:
        raise ValueError(f"need at least dim={dim} samples, got {n}")
    cond = U.gram_condition
    if not cond <= GRAM_CONDITION_LIMIT:
        raise SingularGramError(cond)
    Q, R = np.linalg.qr(U.entries)
    return Q, R, cond


def reconstruct_ls(U: SamplingMatrix, values) -> tuple[np.ndarray, float]:
    """Normal-equation solution ``(U^T U)^{-1} U^T f|_X`` via a QR factorization.

    Returns the coefficients and the residual ``||U c - f|_X||_2``.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(values) != U.shape[0]:
        raise ValueError("one value per sample is required")
    Q, R, _ = _factor(U)
    c = scipy.linalg.solve_triangular(R, Q.T @ values)
    return c, float(np.linalg.norm(U.entries @ c - values))


def reconstruction_functions(U: SamplingMatrix, basis, x) -> np.ndarray:
    """``S[i, j] = S_j(x_i)`` with ``(S_j(x))_j = U (U^T U)^{-1} Psi(x)``."""
    Q, R, _ = _factor(U)
    Psi = basis.phi_matrix(x)
    return scipy.linalg.solve_triangular(R, Psi.T, trans='T').T @ Q.T


@dataclass(frozen=True)
class ConditionEstimate:
    """``value`` is exact for p = 2; otherwise ``[lower, upper]`` brackets the condition number."""

    value: float
    lower: float
    upper: float
    exact: bool
    probes: int = 0

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _pnorm(A, p, axis=0):
    return np.sum(np.abs(A) ** p, axis=axis) ** (1.0 / p) if not math.isinf(p) else np.max(np.abs(A), axis=axis)


def _operator_norm_bound(A, p) -> float:
    """Riesz-Thorin bound ``||A||_1^{1/p} ||A||_inf^{1 - 1/p}``, exact at p = 1 and p = inf."""
    n1 = np.max(np.sum(np.abs(A), axis=0))
    ninf = np.max(np.sum(np.abs(A), axis=1))
    if math.isinf(p):
        return float(ninf)
    return float(n1 ** (1.0 / p) * ninf ** (1.0 - 1.0 / p))


def condition_number(U: SamplingMatrix, p: float = 2.0, probes: int = 10_000, seed: int = 0) -> ConditionEstimate:
    """``max ||W c||_p / ||c||_p`` over ``min`` of the same, ``W = diag(nu(x_j)) U diag(1/nu(lam))``.

    For p != 2 the lower end of the bracket is the ratio of the extremes
    found over random, one-hot and sign-pattern probes, each polished by a
    local optimizer; the upper end is ``||W||_p ||W^+||_p`` bounded by
    Riesz-Thorin interpolation.
    """
    W = U.weighted()
    if p == 2:
        s = np.linalg.svd(W, compute_uv=False)
        k = math.inf if s[-1] == 0 else float(s[0] / s[-1])
        return ConditionEstimate(k, k, k, True)
    n, dim = W.shape
    rng = np.random.default_rng(seed)
    C = [rng.standard_normal((dim, probes)), np.eye(dim)]
    if dim <= 12:
        C.append(np.array(list(itertools.product((-1.0, 1.0), repeat=dim))).T)
    else:
        C.append(rng.choice((-1.0, 1.0), size=(dim, 1024)))
    C = np.concatenate(C, axis=1)
    r = _pnorm(W @ C, p) / _pnorm(C, p)

    def ratio(c, sign):
        return sign * _pnorm(W @ c, p) / _pnorm(c, p)

    hi_c, lo_c = C[:, np.argmax(r)], C[:, np.argmin(r)]
    hi = -scipy.optimize.minimize(ratio, hi_c, args=(-1.0,), method="Nelder-Mead" if dim <= 4 else "L-BFGS-B").fun
    lo = scipy.optimize.minimize(ratio, lo_c, args=(1.0,), method="Nelder-Mead" if dim <= 4 else "L-BFGS-B").fun
    hi, lo = max(hi, r.max()), min(lo, r.min())
    upper = _operator_norm_bound(W, p) * _operator_norm_bound(np.linalg.pinv(W), p)
    return ConditionEstimate(float(hi / lo), float(hi / lo), float(upper), False, C.shape[1])


def zeta_witness(U: SamplingMatrix, p: float = 2.0, probes: int = 10_000, seed: int = 0) -> float:
    """Smallest observed ``||W c||_p^p / ||c||_p^p``; exact (``sigma_min^2``) for p = 2."""
    W = U.weighted()
    if p == 2:
        return float(np.linalg.svd(W, compute_uv=False)[-1] ** 2)
    rng = np.random.default_rng(seed)
    C = np.concatenate([rng.standard_normal((W.shape[1], probes)), np.eye(W.shape[1])], axis=1)
    return float(np.min(np.sum(np.abs(W @ C) ** p, axis=0) / np.sum(np.abs(C) ** p, axis=0)))


def sampling_event_p2(basis, U: SamplingMatrix, gamma: float, c_rho: float, C_rho: float, R: float) -> tuple[bool, float, float]:
    """Exact p = 2 check of the two-sided sampling inequality over all of ``V^N``.

    With ``H = (WU)^T (WU)``: the lower side is ``H - n c (G_R - gamma G) >= 0``
    and the upper side ``n (c gamma + C) G - H >= 0``.  Returns the event and
    both minimal eigenvalues relative to ``n ||G||``.
    """
    if basis.p != 2:
        raise ValueError("the matrix form of the sampling inequality is for p = 2")
    n = U.shape[0]
    WU = U.row_weights[:, None] * U.entries
    H = WU.T @ WU
    G, GR = basis.gram(), basis.gram(R)
    scale = n * np.linalg.norm(G, 2)
    low = np.linalg.eigvalsh(H - n * c_rho * (GR - gamma * G))[0] / scale
    up = np.linalg.eigvalsh(n * (c_rho * gamma + C_rho) * G - H)[0] / scale
    return bool(low >= 0 and up >= 0), float(low), float(up)


def estimate_alpha_p(basis, R: float, trials: int = 1000, seed: int = 0) -> float:
    """``0.95 min ||sum c phi_lam||_{L^p_nu(C_R)}`` over unit ``l^p_nu`` vectors.

    Probes are random vectors, all one-hot vectors and, for p = 2, the exact
    minimizer of the Rayleigh quotient of the Gram matrix on ``C_R``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    rng = np.random.default_rng(seed)
    C = [basis.random_coefficients(trials, rng), np.eye(basis.dim)]
    if basis.p == 2:
        s = 1.0 / basis.nu_lambda
        H = s[:, None] * basis.gram(R) * s[None, :]
        w, V = np.linalg.eigh(H)
        C.append(s[:, None] * V[:, :1])
    C = np.concatenate(C, axis=1)
    C = C / basis.coefficient_norms(C)[None, :]
    m = float(np.min(basis.lp_norms(C, domain=R)))
    if not m > 1e-12:
        raise ValueError(f"basis has (almost) no mass on C_R for R={R:g}: min ratio {m:.3g}")
    return ALPHA_MARGIN * m


def exact_C_K_p2(basis) -> float:
    """``1.05 sqrt(lambda_max)`` of the Gram matrix in ``l^2_nu`` coordinates."""
    s = 1.0 / basis.nu_lambda
    H = s[:, None] * basis.gram() * s[None, :]
    return EMPIRICAL_MARGIN * math.sqrt(np.linalg.eigvalsh(H)[-1])


@dataclass(frozen=True)
class ConditionBoundReport:
    trials: int
    event_trials: int
    bound: float
    kappas: np.ndarray = field(repr=False)
    events: np.ndarray = field(repr=False)
    violations: int = 0
    unconditional_fraction: float = 0.0
    vacuous: bool = False

    @property
    def conditional_fraction(self) -> float:
        return 1.0 if self.event_trials == 0 else 1.0 - self.violations / self.event_trials


def verify_condition_bound(basis, rho: DensitySpec, n: int, gamma: float, alpha_p: float, C_K: float,
                           c_rho: float, C_rho: float, R: float, trials: int, seed=0,
                           vacuous: bool = False) -> ConditionBoundReport:
    """Compare ``kappa(U, p, nu)`` with its bound across sampled trials, conditioned on the sampling event."""
    bound = condition_number_bound(gamma, c_rho, C_rho, alpha_p, C_K, basis.p)
    kappas, events = np.empty(trials), np.zeros(trials, dtype=bool)
    for t in range(trials):
        U = build_U(basis, draw_samples(rho, n, seed, trial=t))
        kappas[t] = condition_number(U, basis.p).upper
        events[t] = sampling_event_p2(basis, U, gamma, c_rho, C_rho, R)[0]
    inside = kappas <= bound
    return ConditionBoundReport(trials, int(events.sum()), bound, kappas, events,
                                int(np.sum(events & ~inside)), float(inside.mean()), vacuous)


@dataclass(frozen=True)
class ReconstructionResult:
    coefficients: np.ndarray
    fitted: SignalFn
    max_rel_error: float
    residual: float
    kappa: ConditionEstimate | None
    kappa_bound: float
    gram_condition: float
    gram_condition_flag: bool


def reconstruct(basis, samples: SampleSet | np.ndarray, values, truth: SignalFn | None = None,
                test_grid=None, kappa_args: dict | None = None) -> ReconstructionResult:
    """Fit ``V^N`` to sample values; compare with ``truth`` on ``test_grid`` when given.

    A singular Gram matrix is reported through ``gram_condition_flag``
    instead of raising; the fitted function is then ``None``.
    """
    U = build_U(basis, samples)
    cond = U.gram_condition
    if not cond <= GRAM_CONDITION_LIMIT:
        return ReconstructionResult(np.full(basis.dim, np.nan), None, math.inf, math.nan, None, math.nan, cond, True)
    c, res = reconstruct_ls(U, values)
    f = basis.synthesize(c)
    err = math.nan
    if truth is not None:
        grid = np.asarray(test_grid, dtype=float)
        ref = truth(grid)
        err = float(np.max(np.abs(f(grid) - ref)) / np.max(np.abs(ref)))
    kappa = condition_number(U, basis.p)
    kb = math.nan
    if kappa_args:
        try:
            kb = condition_number_bound(p=basis.p, **kappa_args)
        except AdmissibilityError:
            kb = math.nan
    return ReconstructionResult(c, f, err, res, kappa, kb, cond, False)
