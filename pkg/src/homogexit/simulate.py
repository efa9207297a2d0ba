"""Euler–Maruyama paths in a random environment with continuous and lattice stopping rules.

Paths are keyed by ``(config.seed, path id)`` so any partition of a batch
across workers reproduces the same trajectories.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .environment import EnvironmentField, OutOfCoverageError, generate
from .geometry import Domain
from .scales import StopLevel
from .stats import mean_se, wilson_interval

CENSOR_FLAG = 1e-3
_PROBE_SHIFT = 40


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    max_time: float
    seed: int = 0
    bridge_correction: bool = False
    scheme: str = "euler_maruyama"
    sigma0: float = 1.0  # constant diffusion coefficient used when there is no environment

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_time < self.dt:
            raise ValueError("max_time must be at least dt")
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt - 1e-9))


def default_dt(domain: Domain) -> float:
    """``(0.05 min(1, r0))^2`` for a domain already in microscopic units."""
    return (0.05 * min(1.0, domain.r0)) ** 2


def default_max_time(level: StopLevel | None) -> float:
    return 10.0 * level.L_next2 ** 2 if level is not None else math.inf


# ---------------------------------------------------------------------------
# stopping rules


@dataclass(frozen=True)
class ExitStop:
    """``tau_eps``: first exit from ``domain``; with ``stop=False`` the exit is recorded and the path continues."""

    domain: Domain
    stop: bool = True


@dataclass(frozen=True)
class ExcursionStop:
    """``T_n``: first time the maximal excursion reaches ``threshold``."""

    threshold: float


@dataclass(frozen=True)
class HorizonStop:
    time: float


@dataclass(frozen=True)
class DiscreteStopSpec:
    """Lattice-time rules checked every ``step_length`` time units against ``domain``.

    All three lattice times are recorded; ``mode`` selects the one that stops
    the path (``None`` tracks only).
    """

    step_length: float
    threshold: float
    domain: Domain
    mode: str | None = "tau1"

    MODES = {None: kernels.LATTICE_TRACK, "tau1": kernels.LATTICE_TAU1, "tau2": kernels.LATTICE_TAU2,
             "tilde": kernels.LATTICE_TILDE}

    @classmethod
    def from_level(cls, level: StopLevel, domain: Domain, mode: str | None = "tau1") -> "DiscreteStopSpec":
        return cls(level.L_sub ** 2, level.D_tilde_sub, domain, mode)


@dataclass(frozen=True)
class StoppingRecord:
    path_id: int
    rule: str
    time: float
    position: np.ndarray
    max_excursion: float


@dataclass
class PathBatch:
    """Columnar results for a batch of paths (one row per path)."""

    path_ids: np.ndarray
    x0: np.ndarray
    result: kernels.BatchResult
    dt: float

    def __len__(self) -> int:
        return self.path_ids.size

    @property
    def rule(self) -> np.ndarray:
        return self.result.rule_names()

    @property
    def censored(self) -> np.ndarray:
        return self.result.rule == kernels.RULE_NAMES.index("time_cap")

    def record(self, i: int) -> StoppingRecord:
        r = self.result
        return StoppingRecord(int(self.path_ids[i]), kernels.RULE_NAMES[r.rule[i]], float(r.t_stop[i]),
                              r.x_stop[i].copy(), float(r.xmax_stop[i]))

    def records(self) -> list:
        return [self.record(i) for i in range(len(self))]

    def write_csv(self, path) -> None:
        """Per-path rows: path_id, rule, time, x_0.., max_excursion, t_exit, tau1, tau2, tau_tilde."""
        d = self.x0.shape[1]
        r = self.result
        names = self.rule
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "rule", "time"] + [f"x_{k}" for k in range(d)]
                       + ["max_excursion", "t_exit", "tau1", "tau2", "tau_tilde"])
            for i in range(len(self)):
                w.writerow([int(self.path_ids[i]), names[i], repr(float(r.t_stop[i]))]
                           + [repr(float(v)) for v in r.x_stop[i]]
                           + [repr(float(r.xmax_stop[i])), repr(float(r.t_exit[i])), repr(float(r.tau1[i])),
                              repr(float(r.tau2[i])), repr(float(r.tau_tilde[i]))])


class CoverageExceededError(OutOfCoverageError):
    pass


def _coverage_box(x0: np.ndarray, stops, cfg: IntegratorConfig, nu: float, drift: float):
    """Axis box every path stays in until it stops, up to a 7-sigma one-interval move."""
    exit_stop = next((s for s in stops if isinstance(s, ExitStop)), None)
    lattice = next((s for s in stops if isinstance(s, DiscreteStopSpec)), None)
    exc = next((s for s in stops if isinstance(s, ExcursionStop)), None)
    horizon = next((s for s in stops if isinstance(s, HorizonStop)), None)
    d = x0.shape[1]
    step = math.sqrt(cfg.dt * nu) + drift * cfg.dt
    boxes = []
    if exit_stop is not None and exit_stop.stop:
        lo, hi = exit_stop.domain.bounding_box(d)
        boxes.append((np.asarray(lo) - 7 * step, np.asarray(hi) + 7 * step))
    if lattice is not None and lattice.mode in ("tau1", "tilde"):
        lo, hi = lattice.domain.bounding_box(d)
        m = 7 * math.sqrt(lattice.step_length * nu) + drift * lattice.step_length
        boxes.append((np.asarray(lo) - m, np.asarray(hi) + m))
    if lattice is not None and lattice.mode == "tau2":
        lo, hi = lattice.domain.bounding_box(d)
        m = lattice.threshold + 7 * math.sqrt(lattice.step_length * nu) + drift * lattice.step_length
        boxes.append((np.asarray(lo) - m, np.asarray(hi) + m))
    if exc is not None:
        boxes.append((x0.min(axis=0) - exc.threshold - 7 * step, x0.max(axis=0) + exc.threshold + 7 * step))
    if horizon is not None:
        m = 7 * math.sqrt(horizon.time * nu) + drift * horizon.time
        boxes.append((x0.min(axis=0) - m, x0.max(axis=0) + m))
    if not boxes:
        raise ValueError("stoppers do not bound the path; add an exit, excursion or horizon rule")
    # the tightest rule bounds where paths can go
    widths = [np.prod(hi - lo) for lo, hi in boxes]
    lo, hi = boxes[int(np.argmin(widths))]
    return np.minimum(lo, x0.min(axis=0)), np.maximum(hi, x0.max(axis=0))


def _table_for(env, lo, hi):
    if env is None or env.params.eta0 == 0.0:
        return None
    if np.any(lo < env.lo) or np.any(hi > env.hi):
        # noise is keyed by lattice chunk, so a wider region reproduces the same field
        region = tuple((float(min(a, b)), float(max(c, e))) for a, b, c, e in zip(lo, env.lo, hi, env.hi))
        env = generate(replace(env.params, region=region))
    return env.tabulate(lo, hi)


def build_spec(env: EnvironmentField | None, x0, path_ids, config: IntegratorConfig, stoppers: Sequence) -> kernels.BatchSpec:
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if not stoppers:
        raise ValueError("at least one stopper is required")
    kw: dict = {}
    geom = None
    for s in stoppers:
        if isinstance(s, ExitStop):
            geom = s.domain
            kw["stop_on_exit"] = s.stop
        elif isinstance(s, ExcursionStop):
            kw["excursion_threshold"] = float(s.threshold)
        elif isinstance(s, HorizonStop):
            kw["horizon_steps"] = max(1, int(round(s.time / config.dt)))
        elif isinstance(s, DiscreteStopSpec):
            if "lattice_steps" in kw:
                raise ValueError("only one discrete stopping spec per run")
            if geom is not None and s.domain != geom:
                raise ValueError("exit rule and lattice rule must refer to the same domain")
            geom = s.domain
            kw["lattice_steps"] = max(1, int(round(s.step_length / config.dt)))
            kw["lattice_threshold"] = float(s.threshold)
            kw["lattice_mode"] = DiscreteStopSpec.MODES[s.mode]
        else:
            raise TypeError(f"unknown stopper {s!r}")
    if geom is not None:
        code = geom.sim_spec()
        if code is None:
            raise NotImplementedError(f"the path kernel has no exit test for {geom.kind} domains")
        kw["geom_kind"], kw["r_a"], kw["r_b"] = code
        if not any(isinstance(s, ExitStop) for s in stoppers):
            kw["stop_on_exit"] = False
    nu = env.params.nu if env is not None else config.sigma0 ** 2
    drift = env.params.eta0 if env is not None else 0.0
    lo, hi = _coverage_box(x0, stoppers, config, nu, drift)
    table = _table_for(env, lo, hi)
    sigma0 = config.sigma0 if env is None else 1.0
    return kernels.BatchSpec(x0=x0, path_ids=path_ids, seed=config.seed, dt=config.dt, max_steps=config.max_steps,
                             bridge=config.bridge_correction and table is None, sigma0=sigma0, table=table, **kw)


def simulate_paths(env, x0, config: IntegratorConfig, stoppers: Sequence, path_ids=None, threads: int = 1,
                   backend: str | None = None) -> PathBatch:
    """Run one path per row of ``x0``; ``env=None`` means constant coefficients ``sigma0 I``."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if path_ids is None:
        path_ids = np.arange(x0.shape[0], dtype=np.uint64)
    spec = build_spec(env, x0, path_ids, config, stoppers)
    res = kernels.run_batch(spec, threads=threads, backend=backend)
    cov = res.rule == kernels.RULE_NAMES.index("coverage")
    if cov.any():
        raise CoverageExceededError(f"{int(cov.sum())} path(s) left the tabulated environment")
    return PathBatch(np.asarray(path_ids, dtype=np.uint64), x0, res, config.dt)


def simulate_path(env, x0, config: IntegratorConfig, stoppers: Sequence, path_id: int = 0) -> StoppingRecord:
    return simulate_paths(env, np.asarray(x0)[None, :], config, stoppers, np.array([path_id], dtype=np.uint64)).record(0)


# ---------------------------------------------------------------------------
# exit laws


@dataclass
class ProbeEstimate:
    probe: np.ndarray
    mean: float
    se: float
    n_paths: int
    censored_fraction: float
    flagged: bool


@dataclass
class ExitLawEstimate:
    epsilon: float
    probes: list
    batch: PathBatch | None = field(default=None, repr=False)

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.probes])

    @property
    def ses(self) -> np.ndarray:
        return np.array([p.se for p in self.probes])


def probe_path_ids(probe_index: int, n_paths: int) -> np.ndarray:
    return (np.uint64(probe_index) << np.uint64(_PROBE_SHIFT)) + np.arange(n_paths, dtype=np.uint64)


def sample_exit_law(env, domain: Domain, epsilon: float, f: Callable, probes, n_paths: int,
                    config: IntegratorConfig, threads: int = 1, lattice: DiscreteStopSpec | None = None,
                    keep_batch: bool = False) -> ExitLawEstimate:
    """Estimate ``u^eps(x) = E f(eps X_tau)`` with paths started at ``x/eps`` in ``domain/eps``.

    ``f`` maps an (n, d) array of macroscopic points to n values and is
    evaluated at the first simulated point outside the domain. With a
    ``lattice`` spec (already in microscopic units) the paths continue past the
    exit until the lattice rule fires, so the same trajectories also yield the
    discrete stopping times.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    scaled = domain.rescale(epsilon)
    x0 = np.repeat(probes / epsilon, n_paths, axis=0)
    ids = np.concatenate([probe_path_ids(j, n_paths) for j in range(len(probes))])
    stoppers = [ExitStop(scaled, stop=lattice is None)]
    if lattice is not None:
        stoppers.append(lattice)
    batch = simulate_paths(env, x0, config, stoppers, ids, threads=threads)
    r = batch.result
    est = []
    for j, p in enumerate(probes):
        sl = slice(j * n_paths, (j + 1) * n_paths)
        exited = np.isfinite(r.t_exit[sl])
        vals = np.asarray(f(epsilon * r.x_exit[sl][exited]), dtype=float)
        m, se = mean_se(vals)
        cens = 1.0 - exited.mean()
        est.append(ProbeEstimate(p.copy(), m, se, int(exited.sum()), float(cens), bool(cens > CENSOR_FLAG)))
    return ExitLawEstimate(epsilon, est, batch if keep_batch else None)


# ---------------------------------------------------------------------------
# joint stopping times


@dataclass
class JointStoppingTimes:
    tau_eps: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    tau_tilde: np.ndarray
    level: StopLevel

    def ordering_violations(self) -> dict:
        return {
            "tau1>tau2": int(np.sum(self.tau1 > self.tau2)),
            "tau_eps>tau_tilde": int(np.sum(self.tau_eps > self.tau_tilde)),
        }

    def end_time_probability(self, confidence: float = 0.95) -> dict:
        """Empirical ``P(tau_eps - tau1 >= L_prev^2)`` with a Wilson interval."""
        ok = np.isfinite(self.tau_eps) & np.isfinite(self.tau1)
        gap = self.tau_eps[ok] - self.tau1[ok]
        k = int(np.sum(gap >= self.level.L_prev ** 2))
        n = int(ok.sum())
        lo, hi = wilson_interval(k, n, confidence)
        return {"p": k / n if n else math.nan, "lo": lo, "hi": hi, "k": k, "n": n,
                "threshold": self.level.L_prev ** 2, "dropped": int((~ok).sum())}


def joint_times(batch: PathBatch, level: StopLevel) -> JointStoppingTimes:
    r = batch.result
    return JointStoppingTimes(r.t_exit.copy(), r.tau1.copy(), r.tau2.copy(), r.tau_tilde.copy(), level)


def discrete_stopping_times(env, domain: Domain, epsilon: float, level: StopLevel, x0, n_paths: int,
                            config: IntegratorConfig, threads: int = 1) -> JointStoppingTimes:
    """All four stopping times on the same trajectories, started at ``x0/eps``.

    Paths run until ``tau2`` (the latest of the rules) or the time cap.
    """
    scaled = domain.rescale(epsilon)
    spec = DiscreteStopSpec.from_level(level, scaled, mode="tau2")
    start = np.repeat(np.atleast_2d(np.asarray(x0, dtype=float)) / epsilon, n_paths, axis=0)
    batch = simulate_paths(env, start, config, [ExitStop(scaled, stop=False), spec], threads=threads)
    return joint_times(batch, level)
