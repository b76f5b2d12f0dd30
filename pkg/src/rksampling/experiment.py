"""Seeded experiment pipeline behind the command line.

Every command builds its objects from an :class:`ExperimentConfig`, returns
a :class:`RunReport` of ordered key/value sections plus CSV tables, and
writes them with fixed formatting so reruns are byte-identical.  Timing
and version data go to a separate ``meta.txt``.
"""

from __future__ import annotations

import csv
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import (
    AdmissibilityError,
    ConstantsBundle,
    condition_number_bound,
    covering_sphere_bound,
    required_sample_size,
    stability_probability,
)
from .config import ConfigError, ExperimentConfig
from .kernel import KernelError, ShiftInvariantKernel, check_idempotent
from .quadrature import QuadratureConfig
from .reconstruct import (
    GRAM_CONDITION_LIMIT,
    SamplingMatrix,
    SingularGramError,
    build_U,
    condition_number,
    estimate_alpha_p,
    reconstruct_ls,
    sampling_event_p2,
    zeta_witness,
)
from .sampling import (
    DensityError,
    DensitySpec,
    draw_samples,
    density_constants,
    mixture,
    monte_carlo_stability,
    truncated_gaussian,
    uniform_cube,
)
from .subspace import SubspaceBasis, build_basis, estimate_C_K, estimate_C_star
from .weights import moderate_pair, parse_weight

__all__ = [
    "RunReport",
    "SectionError",
    "EXIT_CODES",
    "build_kernel",
    "build_subspace",
    "build_density",
    "constants_bundle",
    "run_constants",
    "run_verify_frame",
    "run_sample",
    "run_stability",
    "run_reconstruct",
    "run_experiment",
    "write_csv",
    "write_report",
    "format_value",
]

EXIT_CODES = {"config": 3, "reconstruct.singular": 2, "kernel": 4, "subspace": 5, "density": 6,
              "sampling": 6, "stability": 7, "reconstruct": 8}


class SectionError(RuntimeError):
    """Module error tagged with the config section it came from."""

    def __init__(self, section: str, exc: Exception):
        super().__init__(f"[{section}] {exc}")
        self.section = section
        self.exit_code = EXIT_CODES.get(section, 1)


@dataclass
class RunReport:
    command: str
    config: ExperimentConfig
    sections: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def section(self, name: str) -> dict:
        return self.sections.setdefault(name, {})

    def text(self) -> str:
        lines = ["[config]", self.config.resolved()]
        for name, kv in self.sections.items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {format_value(v)}" for k, v in kv.items())
        return "\n".join(lines) + "\n"

    def meta(self) -> str:
        return (f"command = {self.command}\nwall_clock_s = {self.wall_clock:.3f}\nrksampling = {__version__}\n"
                f"numpy = {np.__version__}\nscipy = {scipy.__version__}\npython = {platform.python_version()}\n")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def write_report(report: RunReport, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{report.command}.txt").write_text(report.text())
    (out / "meta.txt").write_text(report.meta())
    for name, (header, rows) in report.tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    return out


def _guard(section):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (ConfigError, SectionError):
                raise
            except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
                raise SectionError(section, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def _optional_float(text: str, key: str):
    if text in ("auto", "none", ""):
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected 'auto' or a number, got {text!r}") from None


@_guard("kernel")
def build_kernel(cfg: ExperimentConfig) -> ShiftInvariantKernel:
    k, q, w = cfg.kernel, cfg.quad, cfg.weight
    radius = _optional_float(q.radius, "quad.radius")
    quad = QuadratureConfig(q.h, radius, q.rule, q.order, q.tol)
    C0 = _optional_float(w.C0, "weight.C0")
    weights = moderate_pair(parse_weight(w.omega, k.d), parse_weight(w.nu, k.d),
                            "auto" if C0 is None else C0, d=k.d)
    return ShiftInvariantKernel.from_spec(k.kind, k.order, k.sigma, k.duality, k.d, quad, weights)


@_guard("subspace")
def build_subspace(cfg: ExperimentConfig, sys: ShiftInvariantKernel | None = None) -> SubspaceBasis:
    sys = sys or build_kernel(cfg)
    s = cfg.subspace
    delta0 = _optional_float(s.delta0, "subspace.delta0")
    if delta0 is None:
        try:
            delta0 = sys.select_delta0()
        except KernelError as exc:
            raise SectionError("kernel", exc) from exc
    surrogate = _optional_float(s.K_delta0, "subspace.K_delta0")
    return build_basis(sys, s.N, s.p, delta0, K_delta0_surrogate=surrogate,
                       frame_trials=s.frame_trials, seed=cfg.sampling.seed)


@_guard("density")
def build_density(cfg: ExperimentConfig) -> DensitySpec:
    dc, d = cfg.density, cfg.kernel.d
    if dc.kind == "uniform_cube":
        return uniform_cube(dc.M, d)
    if dc.kind == "truncated_gaussian":
        return truncated_gaussian(dc.sigma, dc.M, d)
    if dc.kind == "mixture":
        comps = []
        for item in filter(None, (c.strip() for c in dc.components.split(";"))):
            kind, _, args = item.partition(":")
            vals = [float(v) for v in args.split(",") if v.strip()]
            if kind == "uniform_cube" and len(vals) == 1:
                comps.append(uniform_cube(vals[0], d))
            elif kind == "truncated_gaussian" and len(vals) == 2:
                comps.append(truncated_gaussian(vals[0], vals[1], d))
            else:
                raise ConfigError(f"density.components: cannot parse {item!r}")
        weights = [float(v) for v in dc.weights.split(",") if v.strip()]
        return mixture(weights, comps)
    raise ConfigError(f"density.kind: unknown density {dc.kind!r}")


def constants_bundle(cfg: ExperimentConfig, basis: SubspaceBasis, rho: DensitySpec) -> ConstantsBundle:
    st = cfg.stability
    mode = cfg.subspace.constants
    if mode not in ("empirical", "formula"):
        raise ConfigError("subspace.constants: expected 'empirical' or 'formula'")
    try:
        c_rho, C_rho = density_constants(rho, st.R)
    except DensityError as exc:
        raise SectionError("density", exc) from exc
    seed = cfg.sampling.seed
    try:
        C_K = estimate_C_K(basis, mode, seed=seed)
        C_star = estimate_C_star(basis, mode, seed=seed)
        fb = basis.frame_bounds()
        return ConstantsBundle(basis.p, basis.d, basis.delta0, basis.lattice.N, basis.weights.C0, basis.K_W,
                               C_K, C_star, fb.B, fb.A, c_rho, C_rho, rho.M, st.R, st.delta)
    except ValueError as exc:
        raise SectionError("stability", exc) from exc


def _basis_section(report: RunReport, basis: SubspaceBasis):
    sec = report.section("basis")
    sec.update(kernel=basis.kernel.label, dim=basis.dim, N=basis.lattice.N, p=basis.p, delta0=basis.delta0,
               cardinality_bound=basis.lattice.cardinality_bound(basis.delta0),
               K_delta0_surrogate="K" if basis.K_delta0_surrogate is None else basis.K_delta0_surrogate)
    report.tables["basis"] = (["index", *[f"lambda_{i}" for i in range(basis.d)], "nu_lambda"],
                              list(basis.summary_rows()))


def run_constants(cfg: ExperimentConfig) -> RunReport:
    cfg.require("sampling.n")
    report = RunReport("constants", cfg)
    basis = build_subspace(cfg)
    rho = build_density(cfg)
    bundle = constants_bundle(cfg, basis, rho)
    _basis_section(report, basis)
    report.section("constants").update(bundle.items())
    dev = bundle.deviation()
    report.section("deviation").update(dev.items())
    st, n = cfg.stability, cfg.sampling.n
    sec = report.section("stability_bounds")
    try:
        L, U, feasible = bundle.LU(st.epsilon, st.gamma)
    except ValueError as exc:
        raise SectionError("stability", exc) from exc
    prob = stability_probability(dev, n, bundle.c_rho, bundle.C_rho, st.gamma)
    sec.update(n=n, gamma=st.gamma, epsilon=st.epsilon, L=L, U=U, feasible=feasible,
               success_probability=prob.value, log_tail=prob.log_value, vacuous=prob.vacuous,
               n_for_0_9=required_sample_size(dev, bundle.c_rho, bundle.C_rho, st.gamma, 0.9),
               A_convention="A = exp(C N^d)", N_convention="one N per experiment (the basis N)")
    cover, log_cover = covering_sphere_bound(basis.lattice.N, basis.d, basis.delta0, 0.5, bundle.C_star)
    sec.update(log_covering_bound_eta_0_5=log_cover)
    report.tables["constants"] = (["key", "value"],
                                  [(k, v) for k, v in [*bundle.items(), *dev.items(), *sec.items()]])
    return report


@_guard("subspace")
def run_verify_frame(cfg: ExperimentConfig) -> RunReport:
    report = RunReport("verify-frame", cfg)
    basis = build_subspace(cfg)
    _basis_section(report, basis)
    rng = np.random.default_rng(cfg.sampling.seed)
    C = basis.random_coefficients(50, rng)
    lo, hi = basis.synthesis_support
    grid = np.linspace(lo[0], hi[0], 2001) if basis.d == 1 else basis.grid().points[::97]
    worst = 0.0
    for c in C.T:
        f = basis.synthesize(c)
        g = basis.synthesize(basis.analyze(f))
        worst = max(worst, float(np.max(np.abs(f(grid) - g(grid)))))
    bio = float(np.max(np.abs(basis.analysis_matrix - np.eye(basis.dim))))
    fb = basis.frame_bounds()
    t = np.linspace(lo[0] - hi[0], hi[0] - lo[0], 4001)
    pts = np.stack([t] * basis.d, axis=1)
    env = basis.envelope_at(pts - basis.lattice.points[0])
    direct = np.abs(basis.phi_matrix(pts)[:, 0]) + np.abs(basis.dual_matrix(pts)[:, 0])
    idem = check_idempotent(basis.kernel, seed=cfg.sampling.seed)
    sec = report.section("frame")
    sec.update(round_trip_max_error=worst, biorthogonality_defect=bio, A_p=fb.A, B_p=fb.B,
               ratio_min=fb.ratio_min, ratio_max=fb.ratio_max, frame_probes=fb.probes,
               envelope_violations=int(np.sum(direct > env + 1e-12)), idempotency_defect=idem.max_defect,
               passed=bool(worst <= 1e-6 and bio <= 1e-8 and fb.A <= fb.B and idem.passed))
    return report


@_guard("sampling")
def run_sample(cfg: ExperimentConfig) -> RunReport:
    cfg.require("sampling.n")
    report = RunReport("sample", cfg)
    rho = build_density(cfg)
    s = draw_samples(rho, cfg.sampling.n, cfg.sampling.seed)
    report.section("samples").update(density=rho.label(), n=s.n, seed=cfg.sampling.seed, M=rho.M,
                                     acceptance=s.acceptance)
    report.tables["samples"] = (["j", *[f"x_{i}" for i in range(rho.d)]],
                                [(j, *x) for j, x in enumerate(s.points.tolist())])
    return report


def _kappa_hook(basis, bundle, gamma, seed):
    """Per-trial p = 2 matrix event and condition number, plus the bound when ``gamma`` is admissible."""
    try:
        alpha = estimate_alpha_p(basis, bundle.R, seed=seed)
        bound = condition_number_bound(gamma, bundle.c_rho, bundle.C_rho, alpha, bundle.C_K, 2)
    except AdmissibilityError:
        bound = math.nan
    except ValueError:
        alpha, bound = 0.0, math.nan
    extra = {}

    def hook(t, samples, WU, rep):
        U = SamplingMatrix.from_weighted(WU, basis, samples.points)
        held, low, up = sampling_event_p2(basis, U, gamma, bundle.c_rho, bundle.C_rho, bundle.R)
        extra[t] = (low, up, held, condition_number(U, 2).value)

    return alpha, bound, extra, hook


def run_stability(cfg: ExperimentConfig) -> RunReport:
    cfg.require("sampling.n")
    report = RunReport("stability", cfg)
    basis = build_subspace(cfg)
    rho = build_density(cfg)
    bundle = constants_bundle(cfg, basis, rho)
    st, sa = cfg.stability, cfg.sampling
    hook, extra = None, None
    try:
        if basis.p == 2:
            alpha, bound, extra, hook = _kappa_hook(basis, bundle, st.gamma, sa.seed)
        mc = monte_carlo_stability(basis, rho, sa.n, st.gamma, st.epsilon, st.delta, sa.trials, sa.seed,
                                   bundle, st.test_fns, on_trial=hook)
    except ValueError as exc:
        raise SectionError("stability", exc) from exc
    report.section("constants").update(bundle.items())
    report.section("stability").update(
        n=mc.n, trials=mc.trials, successes=mc.successes, success_rate=mc.success_rate, L=mc.L, U=mc.U,
        theoretical_probability=mc.theoretical.value, log_tail=mc.theoretical.log_value,
        vacuous=mc.theoretical.vacuous, stderr=mc.stderr, verdict=mc.verdict,
        seed_derivation="SeedSequence(seed, spawn_key=(trial_id,))")
    header = ["trial_id", "seed", "lower_ratio", "upper_ratio", "event_held"]
    rows = mc.rows
    if extra is not None:
        header += ["matrix_lower", "matrix_upper", "matrix_event", "kappa"]
        rows = [(*r, *extra[r[0]]) for r in rows]
        held = [e for e in extra.values() if e[2]]
        violations = sum(k > bound for *_, k in held) if math.isfinite(bound) else 0
        report.section("condition").update(
            alpha_p=alpha, kappa_bound=bound, admissible=math.isfinite(bound), matrix_events=len(held),
            max_kappa_in_event=max((e[3] for e in held), default=math.nan),
            max_kappa=max(e[3] for e in extra.values()), kappa_violations=violations)
    report.tables["trials"] = (header, rows)
    return report


def _read_samples(path: str, d: int):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"reconstruct.input: file {p} not found")
    try:
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"reconstruct.input: {exc}") from None
    if data.shape[1] != d + 1:
        raise ConfigError(f"reconstruct.input: expected {d} coordinate columns plus one value column")
    return data[:, :d], data[:, d]


def _reconstruction_kappa_bound(cfg: ExperimentConfig, basis: SubspaceBasis):
    """Condition-number bound from the density and stability sections, or nan with the reason."""
    st = cfg.stability
    try:
        c_rho, C_rho = density_constants(build_density(cfg), st.R)
        alpha = estimate_alpha_p(basis, st.R, seed=cfg.sampling.seed)
        C_K = estimate_C_K(basis, cfg.subspace.constants, seed=cfg.sampling.seed)
        return condition_number_bound(st.gamma, c_rho, C_rho, alpha, C_K, basis.p), "ok"
    except (ValueError, SectionError) as exc:
        return math.nan, str(exc).replace("\n", " ")


def run_reconstruct(cfg: ExperimentConfig, input_path: str | None = None) -> RunReport:
    report = RunReport("reconstruct", cfg)
    path = input_path or cfg.reconstruct.input
    if not path:
        raise ConfigError("reconstruct.input: no sample CSV given")
    basis = build_subspace(cfg)
    pts, vals = _read_samples(path, basis.d)
    U = build_U(basis, pts)
    try:
        c, residual = reconstruct_ls(U, vals)
    except SingularGramError as exc:
        raise SectionError("reconstruct.singular", exc) from exc
    except ValueError as exc:
        raise SectionError("reconstruct", exc) from exc
    kappa = condition_number(U, basis.p, seed=cfg.sampling.seed)
    kappa_bound, bound_note = _reconstruction_kappa_bound(cfg, basis)
    report.section("reconstruction").update(
        n=len(vals), dim=basis.dim, residual=residual, gram_condition=U.gram_condition,
        gram_condition_flag=bool(U.gram_condition > GRAM_CONDITION_LIMIT), kappa=kappa.value,
        kappa_lower=kappa.lower, kappa_upper=kappa.upper, kappa_exact=kappa.exact,
        kappa_bound=kappa_bound, kappa_bound_note=bound_note,
        zeta_witness=zeta_witness(U, basis.p, seed=cfg.sampling.seed))
    report.tables["coefficients"] = (["index", *[f"lambda_{i}" for i in range(basis.d)], "c"],
                                     [(i, *basis.lattice.points[i].tolist(), c[i]) for i in range(basis.dim)])
    return report


COMMANDS = {
    "constants": run_constants,
    "verify-frame": run_verify_frame,
    "sample": run_sample,
    "stability": run_stability,
    "reconstruct": run_reconstruct,
}


def run_experiment(cfg: ExperimentConfig, command: str = "constants", **kwargs) -> RunReport:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    t0 = time.perf_counter()
    report = COMMANDS[command](cfg, **kwargs)
    report.wall_clock = time.perf_counter() - t0
    return report
