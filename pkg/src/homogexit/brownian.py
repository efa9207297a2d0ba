"""Closed forms and walk-on-spheres baselines for the homogenized (Brownian) side.

Convention throughout: the generator is ``alpha * Laplacian`` so the
transition density is ``(4 pi alpha t)^{-d/2} exp(-|y-x|^2 / (4 alpha t))``
and standard Brownian motion has ``alpha = 1/2``. A diffusion with generator
``alpha Laplacian`` is simulated with constant coefficient ``sqrt(2 alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Ball, Domain, GeometryError
from .rng import derive_seed, step_normals
from .simulate import ExitStop, IntegratorConfig, default_dt, simulate_paths
from .stats import mean_se


def sigma_for(alpha: float) -> float:
    return math.sqrt(2.0 * alpha)


def heat_kernel(alpha: float, t: float, x, y) -> np.ndarray:
    """Transition density of the generator ``alpha Laplacian`` after time ``t``."""
    if alpha <= 0 or t <= 0:
        raise ValueError("alpha and t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    r2 = np.sum((y - x) ** 2, axis=-1)
    return (4.0 * math.pi * alpha * t) ** (-d / 2) * np.exp(-r2 / (4.0 * alpha * t))


# ---------------------------------------------------------------------------
# annulus


@dataclass(frozen=True)
class AnnulusExitSolution:
    """``u(r) = c1 + c2 r^{2-d} - r^2/(2 d alpha)``, the mean exit time from ``r1 < |x| < r2``."""

    r1: float
    r2: float
    d: int
    alpha: float

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("the radial formula needs d >= 3")
        if not 0 < self.r1 < self.r2 or self.alpha <= 0:
            raise ValueError("need 0 < r1 < r2 and alpha > 0")

    @property
    def _den(self) -> float:
        return self.r2 ** (2 - self.d) - self.r1 ** (2 - self.d)

    @property
    def c1(self) -> float:
        d, r1, r2 = self.d, self.r1, self.r2
        return (r1 * r1 * r2 ** (2 - d) - r2 * r2 * r1 ** (2 - d)) / self._den / (2 * d * self.alpha)

    @property
    def c2(self) -> float:
        return (self.r2 ** 2 - self.r1 ** 2) / self._den / (2 * self.d * self.alpha)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.c1 + self.c2 * r ** (2 - self.d) - r * r / (2 * self.d * self.alpha)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return (2 - self.d) * self.c2 * r ** (1 - self.d) - r / (self.d * self.alpha)


def annulus_mean_exit(r1: float, r2: float, d: int, alpha: float, r: float) -> float:
    if not r1 <= r <= r2:
        raise ValueError(f"radius {r} outside [{r1}, {r2}]")
    if r == r1 or r == r2:
        return 0.0
    return float(AnnulusExitSolution(r1, r2, d, alpha)(r))


def annulus_linear_bound(r1: float, r2: float, d: int, alpha: float, n_grid: int = 10_000) -> float:
    """Smallest ``C`` with ``u(r) <= C (r - r1)`` on a uniform grid of ``(r1, r2]``.

    The slope at ``r1`` is included so the bound also covers points closer to
    the inner sphere than the first grid node.
    """
    sol = AnnulusExitSolution(r1, r2, d, alpha)
    r = np.linspace(r1, r2, n_grid + 1)[1:]
    ratio = sol(r) / (r - r1)
    return float(max(ratio.max(), sol.derivative(r1)))


# ---------------------------------------------------------------------------
# harmonic extension on balls


def _sphere_rule(n_theta: int, n_phi: int):
    """Nodes (cos theta, phi) and weights for surface integrals over the unit sphere in R^3."""
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    CT, PH = np.meshgrid(ct, phi, indexing="ij")
    W = np.repeat(wt[:, None], n_phi, axis=1) * (2.0 * math.pi / n_phi)
    st = np.sqrt(1.0 - CT ** 2)
    pts = np.stack([st * np.cos(PH), st * np.sin(PH), CT], axis=-1).reshape(-1, 3)
    return pts, W.reshape(-1)


def _frame(axis: np.ndarray) -> np.ndarray:
    """Rotation whose third column is ``axis``."""
    a = axis / np.linalg.norm(axis)
    helper = np.eye(3)[int(np.argmin(np.abs(a)))]
    e1 = np.cross(helper, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.column_stack([e1, e2, a])


def poisson_kernel_ball(x, y, radius: float = 1.0) -> np.ndarray:
    """Harmonic-measure density for ``B_radius(0)`` in R^d w.r.t. surface measure."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return (radius ** 2 - np.sum(x * x, axis=-1)) / (radius * area * np.linalg.norm(y - x, axis=-1) ** d)


def harmonic_ball(f: Callable, x, radius: float = 1.0, n_theta: int = 400, n_phi: int = 256) -> float:
    """``u(x)`` for the Dirichlet problem on ``B_radius(0)`` in R^3 by Poisson-kernel quadrature.

    Polar axis aligned with ``x`` so the kernel peak sits on the Gauss–Legendre end.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("quadrature oracle is implemented for d = 3")
    rho = float(np.linalg.norm(x))
    if rho >= radius:
        raise ValueError("x must lie inside the ball")
    pts, w = _sphere_rule(n_theta, n_phi)
    rot = _frame(x) if rho > 0 else np.eye(3)
    y = radius * pts @ rot.T
    vals = np.asarray(f(y), dtype=float)
    ker = poisson_kernel_ball(x[None, :], y, radius)
    return float(np.sum(w * radius ** 2 * ker * vals))


def spherical_average(f: Callable, centre=(0.0, 0.0, 0.0), radius: float = 1.0, n_theta: int = 200, n_phi: int = 256) -> float:
    pts, w = _sphere_rule(n_theta, n_phi)
    y = np.asarray(centre, dtype=float) + radius * pts
    return float(np.sum(w * np.asarray(f(y), dtype=float)) / (4.0 * math.pi))


# ---------------------------------------------------------------------------
# walk on spheres


class WalkOnSpheresError(RuntimeError):
    pass


@dataclass
class WosEstimate:
    mean: float
    se: float
    n_samples: int
    mean_steps: float
    shell_eps: float


def walk_on_spheres(domain: Domain, f: Callable, x, shell_eps: float | None = None, n_samples: int = 10_000,
                    seed: int = 0, max_steps: int = 10_000, stream: int = 0) -> WosEstimate:
    """Estimate the harmonic extension of ``f`` at ``x`` by walk on spheres.

    Walkers stop inside the ``shell_eps`` shell and score ``f`` at the nearest
    boundary point. Randomness is keyed by ``(seed, stream, walker)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    if not bool(domain.contains(x)):
        raise GeometryError("walk on spheres needs a start point inside the domain")
    if shell_eps is None:
        shell_eps = 1e-4 * domain.diameter(d)
    key = derive_seed(seed, "wos", stream)
    ids = np.arange(n_samples, dtype=np.uint64)
    pos = np.tile(x, (n_samples, 1))
    steps = np.zeros(n_samples, dtype=np.int64)
    active = np.ones(n_samples, dtype=bool)
    k = 0
    while active.any():
        if k >= max_steps:
            raise WalkOnSpheresError(f"{int(active.sum())} walkers exceeded {max_steps} steps; check the distance oracle")
        idx = np.nonzero(active)[0]
        r = np.asarray(domain.distance_to_complement(pos[idx]))
        done = r <= shell_eps
        active[idx[done]] = False
        idx, r = idx[~done], r[~done]
        if idx.size == 0:
            break
        z = step_normals(key, ids[idx], np.uint64(k), d)
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        pos[idx] += r[:, None] * z
        steps[idx] += 1
        k += 1
    y = np.asarray(domain.nearest_boundary_point(pos))
    m, se = mean_se(np.asarray(f(y), dtype=float))
    return WosEstimate(m, se, n_samples, float(steps.mean()), float(shell_eps))


def harmonic_oracle(domain: Domain, f: Callable, x, n_samples: int = 10_000, seed: int = 0, stream: int = 0):
    """``(value, se, method)``: Poisson quadrature on origin-centred balls in R^3, else walk on spheres."""
    x = np.asarray(x, dtype=float)
    if isinstance(domain, Ball) and x.size == 3:
        return harmonic_ball(f, x, domain.radius), 0.0, "poisson"
    est = walk_on_spheres(domain, f, x, n_samples=n_samples, seed=seed, stream=stream)
    return est.mean, est.se, "wos"


def brownian_exit_law(domain: Domain, f: Callable, x, alpha: float, n_paths: int, seed: int = 0,
                      dt: float | None = None, threads: int = 1):
    """Monte Carlo ``E f(W_tau)`` for the diffusion with generator ``alpha Laplacian`` (bridge-corrected)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dt = default_dt(domain) if dt is None else dt
    cfg = IntegratorConfig(dt=dt, max_time=1e6 * dt, seed=seed, bridge_correction=True, sigma0=sigma_for(alpha))
    batch = simulate_paths(None, np.repeat(x, n_paths, axis=0), cfg, [ExitStop(domain)], threads=threads)
    vals = np.asarray(f(batch.result.x_stop), dtype=float).reshape(x.shape[0], n_paths)
    return [mean_se(v) for v in vals]


# ---------------------------------------------------------------------------
# inflated domains


@dataclass
class InflatedExitReport:
    delta: float
    alpha: float
    r1: float
    r2: float
    C: float
    bound: float
    probes: np.ndarray
    mean_exit: np.ndarray
    se: np.ndarray
    passed: bool
    epsilon: float | None = None
    scaled_mean_exit: np.ndarray | None = None
    scaled_se: np.ndarray | None = None
    scaled_bound: float | None = None
    scaling_ratio: np.ndarray | None = None
    scaled_passed: bool | None = None


def inflated_exit_bound_check(domain: Domain, delta: float, alpha: float, probes, n_paths: int, seed: int = 0,
                              epsilon: float | None = None, dt: float | None = None, threads: int = 1) -> InflatedExitReport:
    """Mean exit times from ``U_delta`` at probes within ``2 delta`` of its boundary versus ``C 2 delta``.

    ``C`` is the annulus linear bound for inner radius ``r1 = min(r0 - delta, diam)``
    (an exterior ball of ``U_delta``) and ``r2 = r1 + diam(U_delta)``: any point of
    ``U_delta`` near a boundary point ``y`` lies in that annulus around the exterior
    centre, and its distance to the inner sphere is at most ``d(x, dU_delta) <= 2 delta``.
    With ``epsilon`` the same probes are rerun in ``U_delta / epsilon`` with time step
    ``dt / epsilon^2``.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    d = probes.shape[1]
    inflated = domain.inflate(delta)
    dist = -np.asarray(inflated.signed_distance(probes))
    if np.any(dist <= 0) or np.any(dist > 2 * delta + 1e-12):
        raise ValueError("probes must lie in U_delta within 2 delta of its boundary")
    diam = inflated.diameter(d)
    r1 = min(inflated.r0, diam)
    r2 = r1 + diam
    C = annulus_linear_bound(r1, r2, max(d, 3), alpha)
    bound = C * 2.0 * delta
    dt = default_dt(inflated) if dt is None else dt
    sig = sigma_for(alpha)

    def run(dom, starts, step, tag):
        cfg = IntegratorConfig(dt=step, max_time=1e7 * step, seed=derive_seed(seed, tag), bridge_correction=True, sigma0=sig)
        b = simulate_paths(None, np.repeat(starts, n_paths, axis=0), cfg, [ExitStop(dom)], threads=threads)
        t = b.result.t_stop.reshape(len(starts), n_paths)
        return t.mean(axis=1), t.std(axis=1, ddof=1) / math.sqrt(n_paths)

    m, se = run(inflated, probes, dt, "inflated")
    rep = InflatedExitReport(delta, alpha, r1, r2, C, bound, probes, m, se, bool(np.all(m <= bound)))
    if epsilon is not None:
        sm, sse = run(inflated.rescale(epsilon), probes / epsilon, dt / epsilon ** 2, "inflated-scaled")
        rep.epsilon = epsilon
        rep.scaled_mean_exit, rep.scaled_se = sm, sse
        rep.scaled_bound = bound / epsilon ** 2
        rep.scaling_ratio = sm * epsilon ** 2 / m
        rep.scaled_passed = bool(np.all(sm <= rep.scaled_bound) and np.all((rep.scaling_ratio >= 0.5) & (rep.scaling_ratio <= 2.0)))
    return rep
