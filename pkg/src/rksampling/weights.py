"""Radial weight functions and the moderation constant C0.

Three parametric families are provided, all with ``w(0) = 1``:

* ``constant``:        w(x) = 1
* ``polynomial``:      w(x) = (1 + |x|)^s
* ``subexponential``:  w(x) = exp(a |x|^beta),  0 < beta < 1

``|x|`` is the Euclidean norm on R^d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightSpec",
    "ModeratePair",
    "SubmultiplicativeReport",
    "as_points",
    "evaluate_weight",
    "verify_submultiplicative",
    "estimate_C0",
    "moderate_pair",
    "parse_weight",
]

KINDS = ("constant", "polynomial", "subexponential")
C0_MARGIN = 1.05
# exp() overflows a little above 709
_EXP_LIMIT = 700.0


def as_points(x, d: int) -> np.ndarray:
    """Coerce ``x`` to an ``(n, d)`` float array of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if d == 1 else x.reshape(1, -1)
    if x.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return x.reshape(-1, d)


@dataclass(frozen=True)
class WeightSpec:
    kind: str = "constant"
    d: int = 1
    s: float = 0.0
    a: float = 0.0
    beta: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}; expected one of {KINDS}")
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "polynomial" and self.s < 0:
            raise ValueError("polynomial exponent must be nonnegative")
        if self.kind == "subexponential":
            if self.a < 0:
                raise ValueError("subexponential rate must be nonnegative")
            if not 0 < self.beta < 1:
                raise ValueError("subexponential beta must lie in (0, 1)")

    def __call__(self, x) -> np.ndarray:
        return evaluate_weight(self, x)

    def of_norm(self, r) -> np.ndarray:
        """Evaluate the radial profile at Euclidean norm ``r``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            return np.ones_like(r)
        if self.kind == "polynomial":
            return (1.0 + r) ** self.s
        return np.exp(self.a * r**self.beta)

    def max_on_cell(self, half_width: float) -> float:
        """Max of the weight over the cube [-half_width, half_width]^d."""
        return float(self.of_norm(np.sqrt(self.d) * half_width))

    @property
    def is_constant(self) -> bool:
        return (
            self.kind == "constant"
            or (self.kind == "polynomial" and self.s == 0)
            or (self.kind == "subexponential" and self.a == 0)
        )

    def label(self) -> str:
        if self.kind == "constant":
            return "const"
        if self.kind == "polynomial":
            return f"poly:{self.s:g}"
        return f"subexp:{self.a:g},{self.beta:g}"


def parse_weight(text: str, d: int = 1) -> WeightSpec:
    """Parse ``const``, ``poly:<s>`` or ``subexp:<a>,<beta>``."""
    text = text.strip()
    head, _, args = text.partition(":")
    head = head.lower()
    try:
        if head in ("const", "constant", "1"):
            return WeightSpec("constant", d)
        if head in ("poly", "polynomial"):
            return WeightSpec("polynomial", d, s=float(args))
        if head in ("subexp", "subexponential"):
            a, beta = (float(v) for v in args.split(","))
            return WeightSpec("subexponential", d, a=a, beta=beta)
    except ValueError as exc:
        raise ValueError(f"malformed weight {text!r}: {exc}") from None
    raise ValueError(f"unknown weight {text!r}")


def evaluate_weight(w: WeightSpec, x) -> np.ndarray:
    pts = as_points(x, w.d)
    if not np.all(np.isfinite(pts)):
        raise ValueError("weight evaluated at a non-finite point")
    return w.of_norm(np.linalg.norm(pts, axis=1))


@dataclass(frozen=True)
class SubmultiplicativeReport:
    max_violation: float
    scale: float
    passed: bool


def _pairs(d: int, trial_count: int, box_radius: float, seed):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-box_radius, box_radius, size=(trial_count, 2, d))
    return xy[:, 0, :], xy[:, 1, :]


def verify_submultiplicative(w: WeightSpec, trial_count: int = 1000,
                             box_radius: float = 10.0, seed=0) -> SubmultiplicativeReport:
    """Check ``w(x+y) <= w(x) w(y)`` on random pairs from the box."""
    if trial_count < 1:
        raise ValueError("trial_count must be at least 1")
    x, y = _pairs(w.d, trial_count, box_radius, seed)
    rhs = w(x) * w(y)
    violation = float(np.max(w(x + y) - rhs))
    scale = float(np.max(rhs))
    return SubmultiplicativeReport(violation, scale, violation <= 1e-12 * scale)


def estimate_C0(omega: WeightSpec, nu: WeightSpec, trial_count: int = 2000,
                box_radius: float = 10.0, seed=0) -> float:
    """Empirical sup of ``nu(x+y) / (omega(x) nu(y))`` times a 5% margin.

    Pairs with ``x = 0`` or ``y = 0`` are always included, so the ratio
    ``nu(x)/omega(x)`` along the axes is never missed.
    """
    if omega.d != nu.d:
        raise ValueError("omega and nu must share the dimension")
    for spec in (omega, nu):
        if spec.kind == "subexponential" and spec.a * (2 * np.sqrt(spec.d) * box_radius) ** spec.beta > _EXP_LIMIT:
            raise OverflowError(
                f"weight {spec.label()} overflows on a box of radius {box_radius}; use a smaller box_radius"
            )
    x, y = _pairs(omega.d, trial_count, box_radius, seed)
    zero = np.zeros_like(x)
    xs = np.concatenate([x, zero, x])
    ys = np.concatenate([y, x, zero])
    ratio = nu(xs + ys) / (omega(xs) * nu(ys))
    return C0_MARGIN * float(np.max(ratio))


@dataclass(frozen=True)
class ModeratePair:
    omega: WeightSpec
    nu: WeightSpec
    C0: float

    def __post_init__(self):
        if self.omega.d != self.nu.d:
            raise ValueError("omega and nu must share the dimension")
        if not self.C0 > 0:
            raise ValueError("C0 must be positive")

    @property
    def d(self) -> int:
        return self.omega.d


def moderate_pair(omega: WeightSpec | None = None, nu: WeightSpec | None = None,
                  C0: float | str = "auto", d: int = 1, seed=0) -> ModeratePair:
    omega = omega or WeightSpec("constant", d)
    nu = nu or WeightSpec("constant", omega.d)
    if C0 == "auto":
        C0 = estimate_C0(omega, nu, seed=seed)
    return ModeratePair(omega, nu, float(C0))
