"""Random sample sets, centred sampling variables and Monte Carlo stability runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .bounds import ConstantsBundle, TailBound, stability_probability
from .quadrature import QuadratureConfig
from .signals import SignalFn, ZeroFn
from .weights import WeightSpec, as_points

__all__ = [
    "DensitySpec",
    "SampleSet",
    "StabilityReport",
    "MonteCarloResult",
    "DensityError",
    "EnergyFilterError",
    "uniform_cube",
    "truncated_gaussian",
    "mixture",
    "trial_rng",
    "draw_samples",
    "density_constants",
    "density_extrema",
    "xj_values",
    "sphere_functions",
    "sample_ratios",
    "weighted_sample_matrix",
    "binomial_stderr",
    "empirical_stability",
    "monte_carlo_stability",
]

log = logging.getLogger(__name__)

KINDS = ("uniform_cube", "truncated_gaussian", "mixture")
MIN_ACCEPTANCE = 1e-3
DENSITY_MARGIN = 0.05
FILTER_BUDGET = 100
TEST_STREAM = 2**32


class DensityError(ValueError):
    pass


class EnergyFilterError(RuntimeError):
    pass


@dataclass(frozen=True)
class DensitySpec:
    """Probability density on the cube ``C_M = [-M, M]^d``.

    ``uniform_cube`` is uniform on ``C_M``; ``truncated_gaussian`` is the
    isotropic normal of width ``sigma`` restricted to ``C_M`` and
    renormalized; ``mixture`` takes convex ``weights`` of ``components``,
    its cube being the largest component cube.
    """

    kind: str = "uniform_cube"
    d: int = 1
    M: float = 1.0
    sigma: float = 1.0
    weights: tuple = ()
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DensityError(f"unknown density {self.kind!r}; expected one of {KINDS}")
        if self.kind == "mixture":
            if not self.components or len(self.weights) != len(self.components):
                raise DensityError("mixture needs matching weights and components")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-12):
                raise DensityError("mixture weights must be nonnegative and sum to 1")
            if any(c.d != self.d for c in self.components):
                raise DensityError("mixture components must share the dimension")
            object.__setattr__(self, "M", max(c.M for c in self.components))
        if not self.M > 0:
            raise DensityError("cube half-width M must be positive")
        if self.kind == "truncated_gaussian" and not self.sigma > 0:
            raise DensityError("Gaussian width must be positive")

    def _normalizer(self) -> float:
        s, M = self.sigma, self.M
        return (ndtr(M / s) - ndtr(-M / s)) * math.sqrt(2 * math.pi) * s

    def pdf(self, x) -> np.ndarray:
        pts = as_points(x, self.d)
        inside = np.all(np.abs(pts) <= self.M, axis=1)
        if self.kind == "uniform_cube":
            return np.where(inside, (2.0 * self.M) ** -self.d, 0.0)
        if self.kind == "truncated_gaussian":
            g = np.exp(-np.sum(pts**2, axis=1) / (2 * self.sigma**2)) / self._normalizer() ** self.d
            return np.where(inside, g, 0.0)
        return sum(w * c.pdf(pts) for w, c in zip(self.weights, self.components))

    __call__ = pdf

    def breakpoints(self) -> list[float]:
        if self.kind == "mixture":
            return sorted({b for c in self.components for b in c.breakpoints()})
        return [-self.M, self.M]

    def total_mass(self, quad: QuadratureConfig | None = None) -> float:
        quad = quad or QuadratureConfig()
        x, w = _nodes_with_breaks(quad, self.breakpoints())
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        wts = np.ones(1)
        for _ in range(self.d):
            wts = np.multiply.outer(wts, w)
        return float(wts.ravel() @ self.pdf(pts))

    def sup_estimate(self) -> float:
        """Upper bound of the density used as the rejection envelope."""
        if self.kind == "uniform_cube":
            return (2.0 * self.M) ** -self.d
        if self.kind == "truncated_gaussian":
            return self._normalizer() ** -self.d
        return float(sum(w * c.sup_estimate() for w, c in zip(self.weights, self.components)))

    def label(self) -> str:
        if self.kind == "uniform_cube":
            return f"uniform_cube(M={self.M:g})"
        if self.kind == "truncated_gaussian":
            return f"truncated_gaussian(sigma={self.sigma:g}, M={self.M:g})"
        return "mixture(" + ", ".join(f"{w:g}*{c.label()}" for w, c in zip(self.weights, self.components)) + ")"


def uniform_cube(M: float, d: int = 1) -> DensitySpec:
    return DensitySpec("uniform_cube", d, M)


def truncated_gaussian(sigma: float, M: float, d: int = 1) -> DensitySpec:
    return DensitySpec("truncated_gaussian", d, M, sigma)


def mixture(weights, components) -> DensitySpec:
    components = tuple(components)
    return DensitySpec("mixture", components[0].d, max(c.M for c in components), 1.0,
                       tuple(float(w) for w in weights), components)


def _nodes_with_breaks(quad: QuadratureConfig, breaks):
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = quad.nodes(a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    seed: object
    density: DensitySpec
    M: float
    acceptance: float = 1.0

    @property
    def n(self) -> int:
        return len(self.points)

    def __post_init__(self):
        if np.any(np.abs(self.points) > self.M):
            raise ValueError("sample points must lie in the cube C_M")


def trial_rng(seed, trial: int | None = None) -> np.random.Generator:
    """Generator for ``seed``; trial streams are counter-based spawns of the master seed."""
    if trial is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(trial),)))


def draw_samples(rho: DensitySpec, n: int, seed=0, trial: int | None = None) -> SampleSet:
    """``n`` i.i.d. points: direct uniform draws for ``uniform_cube``, otherwise
    rejection against the uniform envelope on ``C_M``."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = trial_rng(seed, trial)
    d, M = rho.d, rho.M
    if rho.kind == "uniform_cube":
        return SampleSet(rng.uniform(-M, M, size=(n, d)), seed if trial is None else (seed, trial), rho, M)
    top = rho.sup_estimate()
    rate = 1.0 / (top * (2.0 * M) ** d)
    if rate < MIN_ACCEPTANCE:
        raise DensityError(f"rejection acceptance {rate:.3g} is below {MIN_ACCEPTANCE}; use a tighter envelope")
    out = np.empty((0, d))
    drawn = 0
    while len(out) < n:
        m = int(1.2 * (n - len(out)) / rate) + 16
        x = rng.uniform(-M, M, size=(m, d))
        u = rng.uniform(0.0, top, size=m)
        out = np.concatenate([out, x[u < rho.pdf(x)]])
        drawn += m
    log.debug("rejection sampling %s: acceptance %.4f", rho.label(), n / drawn)
    return SampleSet(out[:n], seed if trial is None else (seed, trial), rho, M, len(out) / drawn)


def density_extrema(rho: DensitySpec, R: float, grid_step: float = 1.0 / 64) -> tuple[float, float]:
    """``(min over the C_R grid, max over the C_M grid)`` of the density, without margins."""
    if R > rho.M:
        raise DensityError("R must not exceed M")

    def cube(r):
        k = max(1, math.ceil(2 * r / grid_step))
        ax = np.linspace(-r, r, k + 1)
        mesh = np.meshgrid(*([ax] * rho.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    return float(np.min(rho.pdf(cube(R)))), float(np.max(rho.pdf(cube(rho.M))))


def density_constants(rho: DensitySpec, R: float, grid_step: float = 1.0 / 64) -> tuple[float, float]:
    """``(c_rho, C_rho)``: grid extrema deflated and inflated by 5%."""
    lo, hi = density_extrema(rho, R, grid_step)
    if not lo > 0:
        raise DensityError("density vanishes on C_R; the positivity hypothesis fails")
    return (1 - DENSITY_MARGIN) * lo, (1 + DENSITY_MARGIN) * hi


def expected_power(f: SignalFn, rho: DensitySpec, p: float, nu: WeightSpec, quad: QuadratureConfig | None = None) -> float:
    """``int rho |f nu|^p`` over the cube of the density."""
    quad = quad or QuadratureConfig()
    if isinstance(f, ZeroFn):
        return 0.0
    breaks = list(rho.breakpoints())
    axes, weights = [], []
    sup = f.support
    for i in range(rho.d):
        b = breaks
        if sup is not None:
            lo, hi = max(breaks[0], sup[0][i]), min(breaks[-1], sup[1][i])
            if hi <= lo:
                return 0.0
            b = [lo] + [t for t in breaks if lo < t < hi] + [hi]
        x, w = _nodes_with_breaks(quad, b)
        axes.append(x)
        weights.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    wts = np.ones(1)
    for w in weights:
        wts = np.multiply.outer(wts, w)
    return float(wts.ravel() @ (rho.pdf(pts) * (np.abs(f.evaluate(pts)) * nu(pts)) ** p))


def xj_values(f: SignalFn, samples: SampleSet, rho: DensitySpec, p: float, nu: WeightSpec,
              quad: QuadratureConfig | None = None) -> np.ndarray:
    """Centred variables ``|f(x_j) nu(x_j)|^p - E|f nu|^p``."""
    vals = (np.abs(f.evaluate(samples.points)) * nu(samples.points)) ** p
    return vals - expected_power(f, rho, p, nu, quad)


def sphere_functions(basis, count: int, rng, R: float | None = None, delta: float | None = None) -> np.ndarray:
    """Coefficients ``(dim, count)`` of random unit functions of ``V^N``.

    With ``R`` and ``delta`` only functions whose energy on ``C_R`` is at
    least ``1 - delta`` of the total are kept (rejection with a budget of
    100 times ``count`` draws).
    """
    if count < 1:
        raise ValueError("need at least one test function")
    p = basis.p
    kept, drawn = [], 0
    budget = FILTER_BUDGET * count
    while sum(k.shape[1] for k in kept) < count:
        if drawn >= budget:
            raise EnergyFilterError(
                f"only {sum(k.shape[1] for k in kept)} of {drawn} draws concentrate on C_R; increase R or delta")
        m = min(budget - drawn, max(count, 64))
        C = basis.random_coefficients(m, rng)
        drawn += m
        full = basis.lp_norms(C)
        C = C / full[None, :]
        if R is not None:
            inner = basis.lp_norms(C, domain=R) ** p
            C = C[:, inner >= (1 - delta)]
        kept.append(C)
    return np.concatenate(kept, axis=1)[:, :count]


@dataclass(frozen=True)
class StabilityReport:
    n: int
    p: float
    gamma: float
    eps: float
    delta: float
    L: float
    U: float
    success_probability: float
    lower_ratio: float
    upper_ratio: float
    event_held: bool
    test_count: int
    seed: object = None

    def __post_init__(self):
        if self.lower_ratio > self.upper_ratio:
            raise ValueError("lower ratio exceeds upper ratio")


def weighted_sample_matrix(basis, samples: SampleSet) -> np.ndarray:
    """``nu(x_j) phi_lam(x_j)``, shape ``(n, dim)``."""
    return basis.phi_matrix(samples.points) * basis.nu(samples.points)[:, None]


def sample_ratios(basis, C: np.ndarray, samples: SampleSet, WU: np.ndarray | None = None) -> np.ndarray:
    """``sum_j |f(x_j) nu(x_j)|^p / (n ||f||^p)`` for coefficient columns ``C``.

    For p = 2 the sums are the quadratic forms ``c^T (WU)^T (WU) c``.
    """
    if WU is None:
        WU = weighted_sample_matrix(basis, samples)
    if basis.p == 2:
        H = WU.T @ WU
        sums = np.einsum("ij,ij->j", C, H @ C)
    else:
        sums = np.sum(np.abs(WU @ C) ** basis.p, axis=0)
    return sums / (samples.n * basis.lp_norms(C) ** basis.p)


def empirical_stability(basis, samples: SampleSet, L: float, U: float, test_coefficients=None,
                        count: int = 100, seed=0, R: float | None = None, delta: float | None = None,
                        gamma: float = math.nan, eps: float = math.nan, probability: float = math.nan,
                        functions=None, WU: np.ndarray | None = None) -> StabilityReport:
    """Extremes of the normalized sample sums over test functions and the event ``L <= ratio <= U``.

    Test functions are random unit functions of ``V^N`` (filtered by energy
    concentration when ``R``/``delta`` are given), explicit coefficient
    columns, or arbitrary signals via ``functions``.
    """
    if functions is not None:
        r = []
        for f in functions:
            norm = _lp_norm_full(basis, f)
            s = np.sum((np.abs(f.evaluate(samples.points)) * basis.nu(samples.points)) ** basis.p)
            r.append(s / (samples.n * norm**basis.p))
        r = np.array(r)
    else:
        if test_coefficients is None:
            test_coefficients = sphere_functions(basis, count, trial_rng(seed), R, delta)
        r = sample_ratios(basis, test_coefficients, samples, WU)
    lo, hi = float(r.min()), float(r.max())
    return StabilityReport(samples.n, basis.p, gamma, eps, delta if delta is not None else math.nan,
                           L, U, probability, lo, hi, bool(lo >= L and hi <= U), len(r), samples.seed)


def _lp_norm_full(basis, f):
    from .subspace import lp_norm

    return lp_norm(f, basis.p, basis.nu, quad=basis.quad)


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    successes: int
    success_rate: float
    stderr: float
    theoretical: TailBound
    verdict: str
    L: float
    U: float
    n: int
    rows: list = field(repr=False, default_factory=list)

    @property
    def no_claim(self) -> bool:
        return self.verdict == "no claim"


def binomial_stderr(rate: float, trials: int) -> float:
    return math.sqrt(max(rate * (1 - rate), 0.0) / trials)


def monte_carlo_stability(basis, rho: DensitySpec, n: int, gamma: float, eps: float, delta: float,
                          trials: int, seed, bundle: ConstantsBundle, test_count: int = 100,
                          on_trial=None) -> MonteCarloResult:
    """Repeat sampling and the empirical event over independent trials.

    The theoretical success probability is compared with the observed rate
    up to three binomial standard errors of the bound; a vacuous bound is
    reported as ``no claim``.  ``on_trial(trial, samples, WU, report)`` is called
    after every trial with the weighted sample matrix ``WU``.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    L, U, feasible = bundle.LU(eps, gamma)
    if not feasible:
        raise ValueError(f"L(eps, gamma) = {L:.6g} <= 0: no stability claim at eps={eps:g}, gamma={gamma:g}")
    prob = stability_probability(bundle.deviation(), n, bundle.c_rho, bundle.C_rho, gamma)
    tests = sphere_functions(basis, test_count, trial_rng(seed, TEST_STREAM), bundle.R, delta)
    rows, wins = [], 0
    for t in range(trials):
        samples = draw_samples(rho, n, seed, trial=t)
        WU = weighted_sample_matrix(basis, samples)
        rep = empirical_stability(basis, samples, L, U, tests, gamma=gamma, eps=eps, delta=delta,
                                  probability=prob.value, WU=WU)
        wins += rep.event_held
        rows.append((t, seed, rep.lower_ratio, rep.upper_ratio, rep.event_held))
        if on_trial is not None:
            on_trial(t, samples, WU, rep)
    rate = wins / trials
    se = binomial_stderr(prob.value, trials)
    if prob.vacuous:
        verdict = "no claim"
    else:
        verdict = "pass" if rate >= prob.value - 3 * se else "fail"
    return MonteCarloResult(trials, wins, rate, se, prob, verdict, L, U, n, rows)
