"""Estimator suite: effective diffusivity, localisation and Hölder controls, exit-time tails,
exit-law convergence with rate fits, and the null-environment suite.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .brownian import harmonic_oracle
from .coupling import coupling_deviation, one_step_law_tests, run_coupled_chain
from .environment import EnvironmentParams, generate
from .geometry import Ball, Domain, domain_from_config
from .rng import derive_seed
from .scales import ScaleLevel, ScheduleParams, StopLevel, build_schedule, m_bar_for
from .simulate import (DiscreteStopSpec, ExcursionStop, ExitStop, HorizonStop, IntegratorConfig, joint_times,
                       sample_exit_law, simulate_paths)
from .stats import mean_se, weighted_line_fit, wilson_interval

# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class BoundaryFunction:
    name: str
    fn: Callable
    modulus: Callable  # sigma_f(r), a modulus of continuity on the unit ball's neighbourhood
    sup_norm: float

    def __call__(self, y):
        return self.fn(np.atleast_2d(y))


def _asym(y):
    return np.exp(y[:, 0]) + y[:, 1] ** 2 * y[:, 2] + 0.3 * y[:, 2]


BOUNDARY_FUNCTIONS = {
    "x1": BoundaryFunction("x1", lambda y: y[:, 0], lambda r: r, 1.0),
    "one": BoundaryFunction("one", lambda y: np.ones(y.shape[0]), lambda r: 0.0 * r, 1.0),
    "asym": BoundaryFunction("asym", _asym, lambda r: (math.e + 2.3) * r, math.e + 1.3),
}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    env: EnvironmentParams
    schedule: ScheduleParams
    domain: dict
    boundary_function: str = "x1"
    epsilons: list = field(default_factory=lambda: [1 / 25, 1 / 50, 1 / 100])
    probes: list = field(default_factory=lambda: [[0.0, 0.0, 0.0]])
    n_paths: int = 100_000
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "out"
    dt: float | None = None
    track_stopping: bool = False
    wos_samples: int = 100_000

    @property
    def geometry(self) -> Domain:
        return domain_from_config(self.domain)

    @property
    def f(self) -> BoundaryFunction:
        return BOUNDARY_FUNCTIONS[self.boundary_function]

    def validate(self) -> None:
        self.env.validate()
        if len(self.epsilons) < 1 or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        dom = self.geometry
        p = np.asarray(self.probes, dtype=float)
        if np.any(np.asarray(dom.signed_distance(p)) > 1e-12):
            raise ValueError("probes must lie in the closure of the domain")
        if self.boundary_function not in BOUNDARY_FUNCTIONS:
            raise ValueError(f"unknown boundary function {self.boundary_function!r}")

    def level_record(self) -> list:
        """For each epsilon, the schedule level ``n`` with ``L_n <= 1/eps < L_{n+1}`` (``None`` if none)."""
        sched = build_schedule(self.schedule)
        return [sched.level_for(1.0 / e) for e in self.epsilons]

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["env"] = json.loads(self.env.to_json())
        doc["schedule"] = asdict(self.schedule)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        env = dict(doc.pop("env"))
        if "region" in env:
            env["region"] = tuple(tuple(r) for r in env["region"])
        sched = ScheduleParams(**doc.pop("schedule", {"L0": 3125, "a": 0.2}))
        return cls(env=EnvironmentParams(**env), schedule=sched, **doc)


def _env_or_none(params: EnvironmentParams):
    return None if params.eta0 == 0.0 else generate(params)


# ---------------------------------------------------------------------------
# effective diffusivity


@dataclass
class DiffusivityEstimate:
    alpha: float
    se: float
    normalization: str
    truncated_fraction: float
    flagged: bool
    L: float
    D_tilde: float
    n_paths: int


def effective_diffusivity(env, level: ScaleLevel, n_paths: int, normalization: str = "scale_free", seed: int = 0,
                          dt: float | None = None, x0=None, threads: int = 1) -> DiffusivityEstimate:
    """``(1/2d) E |X_{L^2 ^ T} - x0|^2`` with ``T`` the first time the excursion reaches ``D_tilde``.

    ``scale_free`` divides by ``L^2``, so standard Brownian motion gives 1/2.
    """
    if normalization not in ("paper", "scale_free"):
        raise ValueError("normalization must be 'paper' or 'scale_free'")
    L = float(level.L)
    d = 3 if x0 is None else len(x0)
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    t = L * L
    dt = min(0.5, t / 200.0) if dt is None else dt
    cfg = IntegratorConfig(dt=dt, max_time=t + dt, seed=seed)
    batch = simulate_paths(env, np.tile(x0, (n_paths, 1)), cfg, [HorizonStop(t), ExcursionStop(level.D_tilde)],
                           threads=threads)
    sq = np.sum((batch.result.x_stop - x0) ** 2, axis=1) / (2.0 * d)
    if normalization == "scale_free":
        sq = sq / t
    m, se = mean_se(sq)
    trunc = float(np.mean(batch.rule == "T_n"))
    return DiffusivityEstimate(m, se, normalization, trunc, trunc > 0.01, L, level.D_tilde, n_paths)


# ---------------------------------------------------------------------------
# localisation control


@dataclass
class TailCurve:
    v: np.ndarray
    p_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    bound: np.ndarray
    passed: np.ndarray
    D: float
    n_paths: int


def gaussian_excursion_bound(v, L: float, d: int = 3) -> np.ndarray:
    """Union plus reflection bound ``P(sup_{s<=L^2} |B_s| >= v) <= d * 4 Phi^c(v / (sqrt(d) L))``."""
    v = np.asarray(v, dtype=float)
    return np.minimum(1.0, d * 4.0 * stats.norm.sf(v / (math.sqrt(d) * L)))


def localization_tail(env, level: ScaleLevel, x, v_values, n_paths: int, seed: int = 0, dt: float | None = None,
                      threads: int = 1) -> TailCurve:
    """Empirical ``P(X*_{L^2} >= v)`` with Wilson intervals; pass iff the upper end is ``<= exp(-v/D)``."""
    v = np.asarray(v_values, dtype=float)
    D = level.D
    if np.any(v < D * (1 - 1e-12)):
        raise ValueError("the control is stated for v >= D_n")
    L = float(level.L)
    t = L * L
    dt = min(0.5, t / 400.0) if dt is None else dt
    x = np.asarray(x, dtype=float)
    cfg = IntegratorConfig(dt=dt, max_time=t + dt, seed=seed)
    batch = simulate_paths(env, np.tile(x, (n_paths, 1)), cfg, [HorizonStop(t), ExcursionStop(float(v.max()))],
                           threads=threads)
    xmax = batch.result.xmax_stop
    k = np.array([int(np.sum(xmax >= vi)) for vi in v])
    ints = np.array([wilson_interval(int(ki), n_paths) for ki in k])
    bound = np.exp(-v / D)
    return TailCurve(v, k / n_paths, ints[:, 0], ints[:, 1], bound, ints[:, 1] <= bound, D, n_paths)


# ---------------------------------------------------------------------------
# Hölder control


@dataclass
class HolderNormEstimate:
    n: int | None
    L: float
    sup_term: float
    seminorm_term: float

    @property
    def value(self) -> float:
        return self.sup_term + self.seminorm_term


def holder_norm(values, points, L: float, beta: float, n: int | None = None) -> HolderNormEstimate:
    """``sup |g| + sup_{pairs} L^beta |g(y) - g(z)| / |y - z|^beta`` on the given points."""
    values = np.asarray(values, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sup = float(np.max(np.abs(values)))
    semi = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            r = float(np.linalg.norm(pts[i] - pts[j]))
            if r > 0:
                semi = max(semi, L ** beta * abs(values[i] - values[j]) / r ** beta)
    return HolderNormEstimate(n, L, sup, semi)


def cutoff(y, x, radius: float) -> np.ndarray:
    """Continuous cutoff: 1 on ``B_radius(x)``, linear to 0 at twice the radius."""
    r = np.linalg.norm(np.atleast_2d(y) - x, axis=1)
    return np.clip(2.0 - r / radius, 0.0, 1.0)


@dataclass
class HolderResidual:
    probes: np.ndarray
    values: np.ndarray  # chi S_n f at probes (signed)
    se: np.ndarray
    norm: HolderNormEstimate
    threshold: float
    f_norm: float
    inconclusive: bool
    null_consistent: bool
    z_bonferroni: float


def _gauss_hermite_expectation(f, y, s, d, order=24):
    """``E f(y + s Z) - f(y)`` for ``Z ~ N(0, I_d)`` by tensor Gauss–Hermite quadrature."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    wt = np.ones(pts.shape[0])
    for k in range(d):
        wt = wt * w[np.searchsorted(z, pts[:, k])]
    base = f(y[None, :])[0]
    return float(np.sum(wt * (f(y + s * pts) - base)))


def holder_control_residual(env, level: ScaleLevel, f: Callable, x, n_paths: int, probes, alpha_hat: float,
                            beta: float = 0.5, delta: float = 5 * 0.5 / 32, seed: int = 0, dt: float | None = None,
                            swap: bool = False, alpha_level: float = 0.01, threads: int = 1) -> HolderResidual:
    """``|chi_{n,x} S_n f|_n`` on probe points with ``S_n = R_n - Rbar_n``.

    ``R_n f(y)`` averages ``f`` over simulated endpoints at time ``L^2``;
    ``Rbar_n f(y)`` integrates ``f`` against the Gaussian kernel with ``alpha_hat``.
    Both are written as expectations of ``f(.) - f(y)``, so constants cancel exactly.
    ``null_consistent`` is a max-of-K test: every probe value and every pair
    difference lies within the Bonferroni ``z`` times its SE.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    x = np.asarray(x, dtype=float)
    d = probes.shape[1]
    L = float(level.L)
    t = L * L
    dt = min(0.5, t / 200.0) if dt is None else dt
    radius = 30.0 * math.sqrt(d) * L
    cfg = IntegratorConfig(dt=dt, max_time=t + dt, seed=seed)
    n_p = probes.shape[0]
    batch = simulate_paths(env, np.repeat(probes, n_paths, axis=0), cfg, [HorizonStop(t)], threads=threads)
    end = batch.result.x_stop.reshape(n_p, n_paths, d)
    s = math.sqrt(2.0 * alpha_hat * t)
    vals = np.empty(n_p)
    se = np.empty(n_p)
    diffs = []
    for i, y in enumerate(probes):
        base = f(y[None, :])[0]
        dv = f(end[i]) - base
        r_mc, r_se = mean_se(dv)
        r_bar = _gauss_hermite_expectation(f, y, s, d)
        chi = float(cutoff(y, x, radius)[0])
        vals[i] = chi * ((r_bar - r_mc) if swap else (r_mc - r_bar))
        se[i] = chi * r_se
        diffs.append(chi * dv)
    fvals = np.array([f(p[None, :])[0] for p in probes])
    f_norm = holder_norm(fvals, probes, L, beta).value
    norm = holder_norm(vals, probes, L, beta)
    threshold = L ** (-delta) * f_norm
    # SE of the reported norm: the SE at the maximising probe for the sup term
    i_max = int(np.argmax(np.abs(vals)))
    inconclusive = bool(se[i_max] > threshold / 2)
    pair_se = []
    pair_v = []
    for i in range(n_p):
        for j in range(i + 1, n_p):
            pair_v.append(vals[i] - vals[j])
            pair_se.append(math.sqrt(np.var(diffs[i], ddof=1) / n_paths + np.var(diffs[j], ddof=1) / n_paths))
    K = n_p + len(pair_v)
    z = float(stats.norm.isf(alpha_level / (2 * K)))
    ok = np.all(np.abs(vals) <= z * se + 1e-15)
    if pair_v:
        ok = ok and np.all(np.abs(pair_v) <= z * np.asarray(pair_se) + 1e-15)
    return HolderResidual(probes, vals, se, norm, threshold, f_norm, inconclusive, bool(ok), z)


# ---------------------------------------------------------------------------
# exit-time tail


@dataclass
class ExitTailEstimate:
    epsilon: float
    horizon: float
    p_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sup_p: float
    sup_hi: float
    survival_t: np.ndarray
    survival: np.ndarray
    decay_rate: float | None
    level: StopLevel


def exit_time_tail(env, domain: Domain, epsilon: float, level: StopLevel, probes, n_paths: int, seed: int = 0,
                   dt: float | None = None, n_survival: int = 40, threads: int = 1) -> ExitTailEstimate:
    """``max_x P(tau_eps > L_{n+2}^2)`` over probes, with the pooled survival curve and its decay rate."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    horizon = level.L_next2 ** 2
    scaled = domain.rescale(epsilon)
    dt = 0.5 if dt is None else dt
    cfg = IntegratorConfig(dt=dt, max_time=horizon + 2 * dt, seed=seed)
    x0 = np.repeat(probes / epsilon, n_paths, axis=0)
    batch = simulate_paths(env, x0, cfg, [ExitStop(scaled), HorizonStop(horizon)], threads=threads)
    t_exit = np.where(batch.rule == "tau_eps", batch.result.t_stop, np.inf).reshape(len(probes), n_paths)
    k = (t_exit > horizon).sum(axis=1)
    ints = np.array([wilson_interval(int(ki), n_paths) for ki in k])
    p = k / n_paths
    ts = np.linspace(0.0, float(np.quantile(t_exit[np.isfinite(t_exit)], 0.999)), n_survival + 1)[1:]
    surv = np.array([np.mean(t_exit > ti) for ti in ts])
    rate = None
    use = (surv > 1e-3) & (surv < 0.5)
    if use.sum() >= 3:
        fit = weighted_line_fit(ts[use], np.log(surv[use]))
        rate = -fit["slope"]
    j = int(np.argmax(p))
    return ExitTailEstimate(epsilon, horizon, p, ints[:, 0], ints[:, 1], float(p[j]), float(ints[:, 1].max()), ts,
                            surv, rate, level)


def ball_principal_rate(radius: float, alpha: float = 0.5) -> float:
    """Decay rate ``alpha * pi^2 / radius^2`` of the exit-time survival from a ball in R^3."""
    return alpha * math.pi ** 2 / radius ** 2


# ---------------------------------------------------------------------------
# convergence and rate


@dataclass
class RateFit:
    points: list  # (log 1/eps, log e, se of log e)
    slope: float  # decay exponent gamma in e ~ C eps^gamma
    slope_se: float
    intercept: float
    residuals: list
    slope_lower95: float

    @property
    def positive(self) -> bool:
        return self.slope_lower95 > 0


def fit_rate(epsilons, errors, ses) -> RateFit:
    """Weighted least squares of ``log e`` on ``log(1/eps)``; the reported slope is the decay exponent."""
    if len(epsilons) < 3:
        raise ValueError("a rate fit needs at least three points")
    lx = np.log(1.0 / np.asarray(epsilons, dtype=float))
    e = np.asarray(errors, dtype=float)
    s = np.asarray(ses, dtype=float)
    ly = np.log(e)
    sly = s / e
    fit = weighted_line_fit(lx, ly, sly)
    slope = -fit["slope"]
    return RateFit([(float(a), float(b), float(c)) for a, b, c in zip(lx, ly, sly)], slope, fit["slope_se"],
                   fit["intercept"], fit["residuals"], slope - float(stats.norm.ppf(0.95)) * fit["slope_se"])


@dataclass
class EpsilonRow:
    epsilon: float
    level: int | None
    u_hat: list
    u_se: list
    u_bar: list
    u_bar_se: list
    oracle: str
    error: float
    error_se: float
    argmax_probe: int
    censored_max: float
    inconclusive: bool
    stopping: dict | None = None


@dataclass
class ConvergenceResult:
    rows: list
    rate: RateFit | None
    monotone: bool
    consistent_with_convergence: bool
    null_ok: bool
    warnings: list


def _stop_level_for(epsilon: float, sched_params: ScheduleParams) -> StopLevel:
    return StopLevel.relaxed(1.0 / epsilon, sched_params.a, sched_params.c0, m_bar_for(sched_params.a))


def convergence_and_rate(config: ExperimentConfig, threads: int = 1, keep_batches: bool = False) -> ConvergenceResult:
    """``e(eps) = max_probe |u^eps - ubar|`` for every epsilon, a monotonicity check and a rate fit."""
    config.validate()
    env = _env_or_none(config.env)
    dom = config.geometry
    f = config.f
    probes = np.asarray(config.probes, dtype=float)
    levels = config.level_record()
    seed = config.seeds[0]
    oracle = [harmonic_oracle(dom, f, p, n_samples=config.wos_samples, seed=derive_seed(seed, "oracle"), stream=j)
              for j, p in enumerate(probes)]
    ubar = np.array([o[0] for o in oracle])
    ubar_se = np.array([o[1] for o in oracle])
    rows = []
    warnings = []
    for eps, lvl in zip(config.epsilons, levels):
        scaled = dom.rescale(eps)
        dt = config.dt if config.dt is not None else (0.05 * min(1.0, scaled.r0)) ** 2
        stop_level = _stop_level_for(eps, config.schedule)
        max_time = 10.0 * stop_level.L_next2 ** 2
        cfg = IntegratorConfig(dt=dt, max_time=max_time, seed=derive_seed(seed, "exit", eps))
        lattice = DiscreteStopSpec.from_level(stop_level, scaled, mode="tau2") if config.track_stopping else None
        est = sample_exit_law(env, dom, eps, f, probes, config.n_paths, cfg, threads=threads, lattice=lattice,
                              keep_batch=config.track_stopping)
        u = est.means
        use = est.ses
        err = np.abs(u - ubar)
        j = int(np.argmax(err))
        comb = float(math.sqrt(use[j] ** 2 + ubar_se[j] ** 2))
        stopping = None
        if config.track_stopping:
            jt = joint_times(est.batch, stop_level)
            stopping = {"violations": jt.ordering_violations(), "end_time": jt.end_time_probability(),
                        "L_prev": stop_level.L_prev, "L_sub": stop_level.L_sub, "D_tilde_sub": stop_level.D_tilde_sub}
        row = EpsilonRow(eps, lvl, u.tolist(), use.tolist(), ubar.tolist(), ubar_se.tolist(), oracle[0][2],
                         float(err[j]), comb, j, float(max(p.censored_fraction for p in est.probes)),
                         bool(comb > err[j] / 2), stopping)
        if row.inconclusive:
            warnings.append(f"eps={eps:g}: combined SE exceeds e/2; excluded from the rate fit")
        rows.append(row)
    monotone = all(b.error <= a.error + 3 * math.hypot(a.error_se, b.error_se) for a, b in zip(rows, rows[1:]))
    good = [r for r in rows if not r.inconclusive]
    rate = fit_rate([r.epsilon for r in good], [r.error for r in good], [r.error_se for r in good]) if len(good) >= 3 else None
    null_ok = all(
        abs(r.u_hat[k] - r.u_bar[k]) <= 3 * math.hypot(r.u_se[k], r.u_bar_se[k]) + 1e-15
        for r in rows for k in range(len(probes))
    )
    return ConvergenceResult(rows, rate, monotone, monotone and rate is not None and rate.positive, null_ok, warnings)


# ---------------------------------------------------------------------------
# null suite (eta0 = 0)


def _round(obj):
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    return obj


@dataclass
class NullSuiteConfig:
    seed: int = 0
    diffusivity_L: int = 10
    diffusivity_paths: int = 20_000
    epsilons: tuple = (1 / 8, 1 / 16, 1 / 24)
    exit_probes: tuple = ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.0, -0.6, 0.3), (0.0, 0.0, 0.85))
    exit_paths: int = 20_000
    exit_dt: float = 0.25
    holder_L: int = 10
    holder_paths: int = 20_000
    holder_probes: tuple = ((0.0, 0.0, 0.0), (5.0, 0.0, 0.0), (0.0, 5.0, 5.0), (-7.0, 2.0, 0.0))
    chain_L: float = 25.0
    chain_steps: int = 10
    chain_count: int = 100
    chain_budget: int = 256


def null_suite(cfg: NullSuiteConfig = NullSuiteConfig(), threads: int = 1) -> dict:
    """The four trivial-environment checks; returns a JSON-ready summary with pass flags."""
    out: dict = {"config": asdict(cfg)}
    # (a) diffusivity
    lvl = ScaleLevel.at_length(cfg.diffusivity_L)
    de = effective_diffusivity(None, lvl, cfg.diffusivity_paths, seed=derive_seed(cfg.seed, "diffusivity"),
                               threads=threads)
    out["diffusivity"] = {**asdict(de), "pass": abs(de.alpha - 0.5) <= 3 * de.se}
    # (b) exit law
    ec = ExperimentConfig(env=EnvironmentParams(0.0), schedule=ScheduleParams(3125, 0.2), domain={"ball": 1.0},
                          boundary_function="x1", epsilons=list(cfg.epsilons), probes=[list(p) for p in cfg.exit_probes],
                          n_paths=cfg.exit_paths, seeds=[cfg.seed], dt=cfg.exit_dt)
    conv = convergence_and_rate(ec, threads=threads)
    out["exit_law"] = {
        "rows": [{"epsilon": r.epsilon, "error": r.error, "error_se": r.error_se, "u_hat": r.u_hat, "u_se": r.u_se,
                  "censored_max": r.censored_max} for r in conv.rows],
        "pass": conv.null_ok,
    }
    # (c) Hölder residual with the exact alpha
    hl = ScaleLevel.at_length(cfg.holder_L)
    Ln = float(hl.L)
    hr = holder_control_residual(None, hl, lambda y: np.cos(y[:, 0] / Ln), np.zeros(3), cfg.holder_paths,
                                 cfg.holder_probes, alpha_hat=0.5, seed=derive_seed(cfg.seed, "holder"), threads=threads)
    out["holder"] = {"values": hr.values, "se": hr.se, "norm": hr.norm.value, "threshold": hr.threshold,
                     "z": hr.z_bonferroni, "pass": hr.null_consistent}
    # (d) coupled chain
    sl = StopLevel.relaxed(cfg.chain_L, 0.2, 1.0, m_bar_for(0.2))
    run = run_coupled_chain(None, np.zeros(3), sl, cfg.chain_steps, cfg.chain_budget, n_chains=cfg.chain_count,
                            alpha_hat=0.5, seed=derive_seed(cfg.seed, "chain"), threads=threads)
    dn = run.dn()
    mean = dn.mean(axis=0)
    se = dn.std(axis=0, ddof=1) / math.sqrt(run.n_chains)
    floor = run.noise_floor()
    out["coupling"] = {"mean_dn": mean, "se_dn": se, "floor": floor, "meta": run.meta,
                       "one_step_p": one_step_law_tests(run),
                       "pass": bool(np.all(mean - 3 * se <= floor))}
    out["pass"] = all(out[k]["pass"] for k in ("diffusivity", "exit_law", "holder", "coupling"))
    return _round(out)


def dumps(summary: dict) -> str:
    return json.dumps(_round(summary), sort_keys=True, indent=1)


def deviation_summary(run, gamma: float) -> dict:
    rep = coupling_deviation(run, gamma)
    return _round(asdict(rep))


__all__ = [
    "BOUNDARY_FUNCTIONS", "ExperimentConfig", "effective_diffusivity", "localization_tail", "holder_control_residual",
    "exit_time_tail", "convergence_and_rate", "fit_rate", "null_suite", "NullSuiteConfig", "dumps", "Ball",
]
