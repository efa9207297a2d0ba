"""Gridded transition kernels, their optimal couplings under a Hölder cost, and the coupled chain.

A chain pair ``(X_k, Xbar_k)`` starts at ``(x0, x0)``. At each step the
empirical kernel of the environment at ``X_k`` is coupled to the Gaussian
kernel with diffusivity ``alpha_hat``. A pair of cells is drawn from the plan.
``X`` jumps to an actual simulated endpoint and ``Xbar`` takes the coupled
Gaussian displacement from its own position.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, sparse, special, stats

from . import kernels
from .environment import generate
from .rng import derive_seed
from .scales import StopLevel
from .stats import weighted_line_fit, wilson_interval

LEAK_MAX = 1e-3
EXACT_MAX_PAIRS = 250_000
G_TRUNC = 1e-7  # Gaussian cells below this mass are dropped in the chain
CHAIN_REG = 0.02  # entropic regularisation relative to the mean Gaussian step cost
CHAIN_TOL = 1e-4


class GridTooSmallError(ValueError):
    pass


class PlanTooLargeError(ValueError):
    pass


class CouplingStepError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"coupled chain failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class HolderMetric:
    """``d(x, y) = (|x - y| / L)^beta``."""

    L: float
    beta: float

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1] for the triangle inequality")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (np.linalg.norm(x - y, axis=-1) / self.L) ** self.beta

    def pairwise(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        diff = X[:, None, :] - Y[None, :, :]
        return (np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) / self.L) ** self.beta


# ---------------------------------------------------------------------------
# grids


@dataclass
class KernelGrid:
    """Cell masses on a box lattice; cell ``k`` has centre ``origin + k * spacing``."""

    origin: np.ndarray
    spacing: float
    mass: np.ndarray
    leak: float = 0.0
    n_paths: int | None = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)

    @classmethod
    def around(cls, centre, spacing: float, half_width: float) -> "KernelGrid":
        """Empty grid of cells centred on ``centre + k spacing`` reaching at least ``half_width``."""
        centre = np.asarray(centre, dtype=float)
        K = int(math.ceil(half_width / spacing - 0.5))
        shape = (2 * K + 1,) * centre.size
        return cls(centre - K * spacing, spacing, np.zeros(shape))

    @property
    def d(self) -> int:
        return self.origin.size

    @property
    def shape(self) -> tuple:
        return self.mass.shape

    def lower_edge(self) -> np.ndarray:
        return self.origin - 0.5 * self.spacing

    def upper_edge(self) -> np.ndarray:
        return self.origin + (np.asarray(self.shape) - 0.5) * self.spacing

    def covers(self, x, radius: float) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x - radius >= self.lower_edge() - 1e-12) and np.all(x + radius <= self.upper_edge() + 1e-12))

    def centres(self) -> np.ndarray:
        axes = [self.origin[k] + self.spacing * np.arange(n) for k, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_index(self, points) -> np.ndarray:
        """Flat cell index per point, ``-1`` outside the grid."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        k = np.floor((p - self.lower_edge()) / self.spacing).astype(np.int64)
        shape = np.asarray(self.shape)
        ok = np.all((k >= 0) & (k < shape), axis=1)
        flat = np.full(p.shape[0], -1, dtype=np.int64)
        if ok.any():
            flat[ok] = np.ravel_multi_index(tuple(k[ok].T), self.shape)
        return flat

    @property
    def flat(self) -> np.ndarray:
        return self.mass.reshape(-1)

    def total(self) -> float:
        return float(self.mass.sum())

    def support(self, tol: float = 0.0):
        idx = np.nonzero(self.flat > tol)[0]
        return idx, self.centres()[idx], self.flat[idx]

    def cell_se(self) -> np.ndarray:
        if self.n_paths is None:
            return np.zeros_like(self.mass)
        p = self.mass
        return np.sqrt(p * (1 - p) / self.n_paths)

    def matches(self, other: "KernelGrid") -> bool:
        return (self.shape == other.shape and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing))


def gaussian_kernel(alpha: float, t: float, x, grid: KernelGrid) -> KernelGrid:
    """Exact cell masses of ``N(x, 2 alpha t I)``: products of one-dimensional normal CDF differences."""
    if alpha <= 0 or t <= 0:
        raise ValueError("alpha and t must be positive")
    x = np.asarray(x, dtype=float)
    s = math.sqrt(2.0 * alpha * t)
    per_axis = []
    for k, n in enumerate(grid.shape):
        edges = grid.lower_edge()[k] + grid.spacing * np.arange(n + 1)
        z = (edges - x[k]) / s
        # difference of upper tails is accurate on the right, of lower tails on the left
        m = np.where(z[:-1] >= 0, special.ndtr(-z[:-1]) - special.ndtr(-z[1:]), special.ndtr(z[1:]) - special.ndtr(z[:-1]))
        per_axis.append(m)
    mass = per_axis[0]
    for m in per_axis[1:]:
        mass = np.multiply.outer(mass, m)
    inside = float(np.prod([m.sum() for m in per_axis]))
    return KernelGrid(grid.origin.copy(), grid.spacing, mass, leak=1.0 - inside)


def _bin(grid: KernelGrid, points, n_total: int) -> KernelGrid:
    idx = grid.cell_index(points)
    counts = np.bincount(idx[idx >= 0], minlength=int(np.prod(grid.shape))).astype(float)
    leak = (n_total - counts.sum()) / n_total
    return KernelGrid(grid.origin.copy(), grid.spacing, (counts / n_total).reshape(grid.shape), leak, n_total)


def empirical_kernel(env, x, t: float, n_paths: int, grid: KernelGrid, seed: int = 0, dt: float | None = None,
                     threads: int = 1, return_endpoints: bool = False):
    """Histogram of ``X_t`` started at ``x`` over ``n_paths`` Euler–Maruyama paths."""
    from .simulate import HorizonStop, IntegratorConfig, simulate_paths

    x = np.asarray(x, dtype=float)
    nu = env.params.nu if env is not None else 1.0
    if t <= 0:
        raise ValueError("t must be positive")
    if not grid.covers(x, 6.0 * math.sqrt(2.0 * nu * t)):
        raise GridTooSmallError("grid half-width must be at least 6 sqrt(2 nu t) around x")
    dt = t / 32.0 if dt is None else dt
    steps = max(1, int(round(t / dt)))
    cfg = IntegratorConfig(dt=t / steps, max_time=t * (1 + 1e-9) + t / steps, seed=seed)
    batch = simulate_paths(env, np.tile(x, (n_paths, 1)), cfg, [HorizonStop(t)], threads=threads)
    end = batch.result.x_stop
    kg = _bin(grid, end, n_paths)
    if kg.leak >= LEAK_MAX:
        raise GridTooSmallError(f"kernel leak {kg.leak:.2e} exceeds {LEAK_MAX}")
    return (kg, end) if return_endpoints else kg


# ---------------------------------------------------------------------------
# transport


@dataclass
class TransportPlan:
    rows: np.ndarray  # flat cell index in nu's grid
    cols: np.ndarray  # flat cell index in nu_prime's grid
    mass: np.ndarray
    cost_value: float
    marginal_residuals: tuple
    method: str
    reg: float | None = None
    duality_gap: float | None = None
    lower_bound: float | None = None
    leaks: tuple = (0.0, 0.0)
    iterations: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass"])
            for i, j, m in zip(self.rows, self.cols, self.mass):
                w.writerow([int(i), int(j), repr(float(m))])


def transport_lp(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact discrete optimal transport as a linear program over the transport polytope."""
    n, m = C.shape
    rows = sparse.kron(sparse.identity(n, format="csr"), np.ones((1, m)), format="csr")
    cols = sparse.kron(np.ones((1, n)), sparse.identity(m, format="csr"), format="csr")
    A = sparse.vstack([rows, cols], format="csr")
    res = optimize.linprog(C.reshape(-1), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
                           options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return np.maximum(res.x.reshape(n, m), 0.0)


def sinkhorn(a, b, C, reg: float, tol: float = 1e-10, max_iter: int = 20_000, K: np.ndarray | None = None):
    """Entropic transport plan ``diag(u) exp(-C/reg) diag(v)`` by alternating scaling.

    Runs in the log domain when ``exp(-C/reg)`` would underflow. Returns the
    plan, the potentials ``(f, g) = reg (log u, log v)`` and the iteration count.
    A precomputed Gibbs matrix ``K`` may be passed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if K is not None or C.max() / reg < 600:
        K = np.exp(-C / reg) if K is None else K
        u = np.ones_like(a)
        v = np.ones_like(b)
        it = 0
        for it in range(1, max_iter + 1):
            u = a / (K @ v)
            v = b / (K.T @ u)
            if it % 10 == 0 and np.abs(u * (K @ v) - a).sum() < tol:
                break
        P = u[:, None] * K * v[None, :]
        return P, reg * np.log(u), reg * np.log(v), it
    la, lb = np.log(a), np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    M = -C / reg
    it = 0
    for it in range(1, max_iter + 1):
        f = reg * (la - special.logsumexp(M + g[None, :] / reg, axis=1))
        g = reg * (lb - special.logsumexp(M + f[:, None] / reg, axis=0))
        if it % 10 == 0:
            P = np.exp(M + f[:, None] / reg + g[None, :] / reg)
            if np.abs(P.sum(axis=1) - a).sum() < tol:
                break
    P = np.exp(M + f[:, None] / reg + g[None, :] / reg)
    return P, f, g, it


def round_to_feasible(P, a, b) -> np.ndarray:
    """Project a near-feasible plan onto the transport polytope (scale rows, scale columns, rank-one fix)."""
    P = np.asarray(P, dtype=float).copy()
    r = P.sum(axis=1)
    P *= np.minimum(a / np.where(r > 0, r, 1.0), 1.0)[:, None]
    c = P.sum(axis=0)
    P *= np.minimum(b / np.where(c > 0, c, 1.0), 1.0)[None, :]
    er = a - P.sum(axis=1)
    ec = b - P.sum(axis=0)
    s = er.sum()
    if s > 0:
        P += np.outer(er, ec) / s
    return P


def _c_transform_bound(f, a, b, C) -> float:
    g = np.min(C - f[:, None], axis=0)
    return float(f @ a + g @ b)


def optimal_coupling(nu: KernelGrid, nu_prime: KernelGrid, metric: HolderMetric, method: str = "exact",
                     reg: float | None = None, support_tol: float = 0.0, cost_matrix: np.ndarray | None = None) -> TransportPlan:
    """Optimal coupling of two gridded laws for the cost ``metric`` between cell centres.

    Leaked mass is dropped and both laws renormalised; leaks are reported on the plan.
    """
    if not nu.matches(nu_prime):
        raise ValueError("kernels must live on the same grid")
    ia, xa, a = nu.support(support_tol)
    ib, xb, b = nu_prime.support(support_tol)
    a = a / a.sum()
    b = b / b.sum()
    C = metric.pairwise(xa, xb) if cost_matrix is None else cost_matrix[np.ix_(ia, ib)]
    leaks = (nu.leak, nu_prime.leak)
    if method == "exact":
        if a.size * b.size > EXACT_MAX_PAIRS:
            raise PlanTooLargeError(f"{a.size} x {b.size} support pairs exceed {EXACT_MAX_PAIRS}; coarsen or use entropic")
        P = transport_lp(a, b, C)
        gap, lb, iters = None, None, 0
    elif method == "entropic":
        reg = 1e-2 * float(np.median(C[C > 0])) if reg is None and np.any(C > 0) else (reg or 1e-3)
        P, f, _, iters = sinkhorn(a, b, C, reg)
        P = round_to_feasible(P, a, b)
        lb = _c_transform_bound(f, a, b, C)
    else:
        raise ValueError(f"unknown method {method!r}")
    cost = float(np.sum(P * C))
    if method == "entropic":
        gap = cost - lb
    nz = np.nonzero(P > 0)
    res = (float(np.abs(P.sum(axis=1) - a).max()), float(np.abs(P.sum(axis=0) - b).max()))
    return TransportPlan(ia[nz[0]], ib[nz[1]], P[nz], cost, res, method, reg, gap, lb, leaks, iters)


def kr_dual_value(nu: KernelGrid, nu_prime: KernelGrid, metric: HolderMetric) -> float:
    """``max sum f (nu - nu')`` over functions 1-Lipschitz for ``metric`` on the joint support (small supports)."""
    idx = np.union1d(nu.support()[0], nu_prime.support()[0])
    if idx.size > 400:
        raise PlanTooLargeError("dual LP is only meant for small supports")
    pts = nu.centres()[idx]
    w = nu.flat[idx] / nu.flat.sum() - nu_prime.flat[idx] / nu_prime.flat.sum()
    C = metric.pairwise(pts, pts)
    n = idx.size
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    A = sparse.lil_matrix((len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        A[r, i] = 1.0
        A[r, j] = -1.0
    bub = np.array([C[i, j] for i, j in pairs])
    bounds = [(0, 0)] + [(None, None)] * (n - 1)
    res = optimize.linprog(-w, A_ub=A.tocsr(), b_ub=bub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"dual LP failed: {res.message}")
    return float(-res.fun)


# ---------------------------------------------------------------------------
# coupled chain


@dataclass
class _StateKernel:
    endpoints: np.ndarray  # displacements of simulated paths
    cells: np.ndarray  # flat cell index per endpoint
    plan_rows: dict  # cell -> (cols, cumulative probs)
    cost_value: float
    plan: TransportPlan


@dataclass
class ChainRun:
    X: np.ndarray  # (chains, steps + 1, d)
    Xbar: np.ndarray
    step_cost: np.ndarray  # realised d_n between the coupled endpoints, (chains, steps)
    plan_cost: np.ndarray  # expected plan cost at each chain's state, (chains, steps)
    metric: HolderMetric
    t: float
    alpha_hat: float
    meta: dict = field(default_factory=dict)
    first_step_x: np.ndarray | None = None
    first_step_xbar: np.ndarray | None = None
    first_kernel: KernelGrid | None = None
    first_gaussian: KernelGrid | None = None

    @property
    def n_chains(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.X.shape[1] - 1

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.X - self.Xbar, axis=-1)

    def dn(self) -> np.ndarray:
        return self.metric(self.X, self.Xbar)

    def noise_floor(self) -> np.ndarray:
        """Cumulative ``sum_j (mean step cost + 3 SE)``; bounds ``E d_n(X_k, Xbar_k)`` by subadditivity."""
        m = self.step_cost.mean(axis=0)
        se = self.step_cost.std(axis=0, ddof=1) / math.sqrt(self.n_chains) if self.n_chains > 1 else np.zeros_like(m)
        return np.concatenate([[0.0], np.cumsum(m + 3 * se)])


def _quantize(x, x0, spacing):
    return tuple(int(v) for v in np.round((x - x0) / spacing))


def run_coupled_chain(env, x0, level: StopLevel, n_steps: int, kernel_budget: int, n_chains: int = 1,
                      alpha_hat: float = 0.5, beta: float = 0.5, seed: int = 0, method: str = "entropic",
                      reg: float | None = None, spacing: float | None = None, dt: float | None = None,
                      threads: int = 1) -> ChainRun:
    """Run ``n_chains`` independent coupled chains for ``n_steps`` steps of time ``L_sub^2``.

    Kernels and plans are cached per quantised state (quantisation radius = grid
    spacing) with the kernel seed derived from the quantised key.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    cap = 2.0 * (level.L_next2 / level.L_sub) ** 2
    if n_steps > cap:
        raise ValueError(f"n_steps must not exceed 2 (L_next2 / L_sub)^2 = {cap:.1f}")
    t = level.L_sub ** 2
    metric = HolderMetric(level.L, beta)
    nu = env.params.nu if env is not None and env.params.eta0 > 0 else 1.0
    spacing = math.sqrt(2.0 * alpha_hat * t) if spacing is None else spacing
    grid = KernelGrid.around(np.zeros(d), spacing, 6.0 * math.sqrt(2.0 * nu * t))
    gauss = gaussian_kernel(alpha_hat, t, np.zeros(d), grid)
    centres = grid.centres()
    # cells the empirical kernel cannot resolve are dropped from the Gaussian side and counted as leak
    ib, xb, gb = gauss.support(G_TRUNC)
    g_leak = gauss.leak + (gauss.total() - gb.sum())
    b_full = gb / gb.sum()
    C_all = metric.pairwise(centres, xb)
    if method == "entropic":
        reg = CHAIN_REG * float(np.average(metric.pairwise(np.zeros((1, d)), xb)[0], weights=b_full)) if reg is None else reg
        K_all = np.exp(-C_all / reg) if C_all.max() / reg < 600 else None

    # a bulk table over the typical chain spread; states outside it get a local table
    steps_dt = t / 32.0 if dt is None else dt
    n_sub = max(1, int(round(t / steps_dt)))
    path_reach = 7.0 * math.sqrt(nu * t) + t * (env.params.eta0 if env is not None else 0.0)
    bulk = None
    field_ = None
    if env is not None and env.params.eta0 > 0:
        spread = 3.0 * math.sqrt(nu * t * n_steps) + path_reach
        region = tuple((float(c - spread - path_reach - spacing), float(c + spread + path_reach + spacing)) for c in x0)
        field_ = generate(replace(env.params, region=region))
        bulk = field_.tabulate(x0 - spread, x0 + spread)

    def table_for(q):
        if field_ is None:
            return None
        lo, hi = q - path_reach, q + path_reach
        if np.all(lo >= bulk.lo) and np.all(hi <= bulk.hi):
            return bulk
        reg_ = tuple((float(a - spacing), float(b + spacing)) for a, b in zip(lo, hi))
        return generate(replace(env.params, region=reg_)).tabulate(lo, hi)

    cache: dict = {}

    def state_kernel(key) -> _StateKernel:
        sk = cache.get(key)
        if sk is not None:
            return sk
        q = x0 + spacing * np.asarray(key, dtype=float)
        spec = kernels.BatchSpec(x0=np.tile(q, (kernel_budget, 1)), path_ids=np.arange(kernel_budget, dtype=np.uint64),
                                 seed=derive_seed(seed, "kernel", key), dt=t / n_sub, max_steps=n_sub + 1,
                                 horizon_steps=n_sub, table=table_for(q))
        res = kernels.run_batch(spec, threads=threads)
        if np.any(res.rule == kernels.RULE_NAMES.index("coverage")):
            raise GridTooSmallError("chain left the tabulated environment")
        disp = res.x_stop - q
        emp = _bin(grid, disp, kernel_budget)
        if emp.leak >= LEAK_MAX:
            raise GridTooSmallError(f"kernel leak {emp.leak:.2e} at state {q}")
        ia, _, a = emp.support()
        a = a / a.sum()
        if method == "exact":
            plan = optimal_coupling(emp, gauss, metric, method="exact", support_tol=G_TRUNC)
        else:
            plan = _entropic_on(a, b_full, ia, ib, C_all[ia], reg, None if K_all is None else K_all[ia], g_leak)
        rows = {}
        # entries below 1e-12 come from the rank-one feasibility fix and are never worth sampling
        big = plan.mass > 1e-12
        order = np.argsort(plan.rows[big], kind="stable")
        pr, pc, pm = plan.rows[big][order], plan.cols[big][order], plan.mass[big][order]
        bounds = np.searchsorted(pr, np.unique(pr))
        for s, e in zip(bounds, list(bounds[1:]) + [pr.size]):
            cum = np.cumsum(pm[s:e])
            rows[int(pr[s])] = (pc[s:e], cum / cum[-1])
        summary = replace(plan, rows=None, cols=None, mass=None)
        sk = _StateKernel(disp, grid.cell_index(disp), rows, plan.cost_value, summary)
        cache[key] = sk
        return sk

    X = np.zeros((n_chains, n_steps + 1, d))
    Xb = np.zeros_like(X)
    X[:, 0] = x0
    Xb[:, 0] = x0
    step_cost = np.zeros((n_chains, n_steps))
    plan_cost = np.zeros((n_chains, n_steps))
    qerr = []
    rng = np.random.Generator(np.random.Philox(key=derive_seed(seed, "chain")))
    first = None
    for k in range(n_steps):
        try:
            for c in range(n_chains):
                key = _quantize(X[c, k], x0, spacing)
                qerr.append(float(np.linalg.norm(X[c, k] - x0 - spacing * np.asarray(key))))
                sk = state_kernel(key)
                p = int(rng.integers(sk.endpoints.shape[0]))
                i = int(sk.cells[p])
                cols, cum = sk.plan_rows[i]
                j = int(cols[min(int(np.searchsorted(cum, rng.random(), side="right")), cols.size - 1)])
                disp1 = sk.endpoints[p]
                disp2 = centres[j] + (disp1 - centres[i])
                X[c, k + 1] = X[c, k] + disp1
                Xb[c, k + 1] = Xb[c, k] + disp2
                step_cost[c, k] = float(metric(centres[i], centres[j]))
                plan_cost[c, k] = sk.cost_value
                if k == 0 and first is None:
                    first = sk
        except (GridTooSmallError, RuntimeError, ValueError) as exc:
            raise CouplingStepError(k, exc) from exc
    run = ChainRun(X, Xb, step_cost, plan_cost, metric, t, alpha_hat)
    run.meta = {
        "alpha_hat": alpha_hat, "t": t, "spacing": spacing, "grid_shape": list(grid.shape), "method": method,
        "kernel_budget": kernel_budget, "cached_states": len(cache),
        "quantisation_error_mean": float(np.mean(qerr)) if qerr else 0.0,
        "quantisation_error_max": float(np.max(qerr)) if qerr else 0.0,
        "gaussian_leak": g_leak, "reg": reg,
        "mean_duality_gap": float(np.mean([v.plan.duality_gap or 0.0 for v in cache.values()])), "L": level.L, "L_sub": level.L_sub,
    }
    run.first_step_x = X[:, 1] - x0
    run.first_step_xbar = Xb[:, 1] - x0
    run.first_kernel = _bin(grid, first.endpoints, first.endpoints.shape[0]) if first is not None else None
    run.first_gaussian = gauss
    return run


def _entropic_on(a, b, ia, ib, C, reg, K, g_leak) -> TransportPlan:
    P, f, _, iters = sinkhorn(a, b, C, reg, tol=CHAIN_TOL, K=K)
    P = round_to_feasible(P, a, b)
    cost = float(np.sum(P * C))
    lb = _c_transform_bound(f, a, b, C)
    nz = np.nonzero(P > 0)
    res = (float(np.abs(P.sum(axis=1) - a).max()), float(np.abs(P.sum(axis=0) - b).max()))
    return TransportPlan(ia[nz[0]], ib[nz[1]], P[nz], cost, res, "entropic", reg, cost - lb, lb, (0.0, g_leak), iters)


# ---------------------------------------------------------------------------
# chain diagnostics


def one_step_law_tests(run: ChainRun, min_expected: float = 5.0) -> dict:
    """Chi-square checks of the first step: X against its empirical kernel (two-sample), Xbar against the Gaussian cells."""
    out = {}
    grid = run.first_gaussian
    n = run.n_chains
    # Xbar vs exact Gaussian cell masses, pooling sparse cells into one bin
    idx = grid.cell_index(run.first_step_xbar)
    obs = np.bincount(idx[idx >= 0], minlength=grid.flat.size).astype(float)
    p = grid.flat / grid.flat.sum()
    exp = p * n
    big = exp >= min_expected
    o = np.append(obs[big], obs[~big].sum())
    e = np.append(exp[big], exp[~big].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    out["xbar_vs_gaussian"] = float(stats.chisquare(o, e * o.sum() / e.sum()).pvalue)
    # X vs the kernel sample at x0
    kern = run.first_kernel
    idx = kern.cell_index(run.first_step_x)
    c1 = np.bincount(idx[idx >= 0], minlength=kern.flat.size).astype(float)
    c2 = kern.flat * kern.n_paths
    tot = c1 + c2
    keep = tot * min(c1.sum(), c2.sum()) / (c1.sum() + c2.sum()) >= min_expected
    t1 = np.append(c1[keep], c1[~keep].sum())
    t2 = np.append(c2[keep], c2[~keep].sum())
    table = np.vstack([t1, t2])
    table = table[:, table.sum(axis=0) > 0]
    out["x_vs_kernel"] = float(stats.chi2_contingency(table)[1]) if table.shape[1] > 1 else 1.0
    return out


@dataclass
class DeviationReport:
    gamma: float
    probability: float
    interval: tuple
    mean_dn: np.ndarray
    se_dn: np.ndarray
    slope: float
    slope_band: tuple
    curvature: float
    curvature_band: tuple
    at_most_linear: bool


def coupling_deviation(run: ChainRun, gamma: float, n_boot: int = 500, seed: int = 0) -> DeviationReport:
    """Tail ``P(max_k |X_k - Xbar_k| >= gamma)`` and the growth of ``E d_n(X_k, Xbar_k)`` in ``k``.

    Slope and curvature come from least-squares line and quadratic fits with a
    percentile bootstrap over chains.
    """
    dist = run.distances().max(axis=1)
    k_hits = int(np.sum(dist >= gamma))
    n = run.n_chains
    lo, hi = wilson_interval(k_hits, n)
    dn = run.dn()
    mean = dn.mean(axis=0)
    se = dn.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    ks = np.arange(dn.shape[1], dtype=float)

    def fits(m):
        line = weighted_line_fit(ks, m)["slope"]
        quad = np.polyfit(ks, m, 2)[0] if ks.size >= 3 else 0.0
        return line, quad

    slope, curv = fits(mean)
    rng = np.random.default_rng(seed)
    boots = np.array([fits(dn[rng.integers(0, n, n)].mean(axis=0)) for _ in range(n_boot)])
    sb = tuple(np.percentile(boots[:, 0], [2.5, 97.5]))
    cb = tuple(np.percentile(boots[:, 1], [2.5, 97.5]))
    return DeviationReport(gamma, k_hits / n, (lo, hi), mean, se, slope, sb, curv, cb,
                           bool(sb[1] >= 0 and cb[0] <= 0))
