"""Random coefficient fields built from kernel-smoothed lattice noise.

A realisation is ``b = eta0 * s(phi)`` and ``A = I + eta0 * diag(s(psi))``
where ``phi, psi`` are the noise convolved with a radial bump of radius R/2
and ``s = tanh(gain * .)``. Noise lives on the lattice ``h_env Z^d`` and is
drawn lazily per chunk from a Philox stream keyed by ``(seed, chunk index)``.
"""
from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, signal, special, stats

CHUNK = 8
DEFAULT_MEMORY_BUDGET = 2 * 1024 ** 3


class OutOfCoverageError(ValueError):
    """A point lies outside the region the field was generated for."""


class EnvironmentSizeError(MemoryError):
    """The requested coverage exceeds the memory budget."""


@dataclass(frozen=True)
class EnvironmentParams:
    eta0: float
    R: float = 4.0
    h_env: float = 0.5
    d: int = 3
    seed: int = 0
    region: tuple = ((-16.0, 16.0),)
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if len(self.region) == 1 and self.d != 1:
            object.__setattr__(self, "region", tuple(tuple(self.region[0]) for _ in range(self.d)))
        object.__setattr__(self, "region", tuple(tuple(map(float, r)) for r in self.region))

    def validate(self) -> None:
        if not 0.0 <= self.eta0 < 0.5:
            raise ValueError("eta0 must lie in [0, 1/2)")
        if self.R <= 0 or self.h_env <= 0:
            raise ValueError("R and h_env must be positive")
        if not self.h_env < self.R / 4.0:
            raise ValueError("h_env must be smaller than R/4")
        ratio = (self.R / 2.0) / self.h_env
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("h_env must divide R/2")
        if len(self.region) != self.d or any(lo >= hi for lo, hi in self.region):
            raise ValueError("region must be d nonempty intervals")
        if self.d > 6:
            raise ValueError("chunk keys support d <= 6")

    @property
    def radius(self) -> float:
        return self.R / 2.0

    @property
    def nu(self) -> float:
        """Ellipticity constant with ``(1/nu) I <= A <= nu I``."""
        return 1.0 / (1.0 - self.eta0)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["region"] = [list(r) for r in self.region]
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnvironmentParams":
        doc = json.loads(text)
        doc["region"] = tuple(tuple(r) for r in doc["region"])
        return cls(**doc)


# ---------------------------------------------------------------------------
# radial bump


def _bump_profile(s):
    """exp(-1/(1-s^2)) on |s|<1, zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _bump_profile_deriv(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    t = 1.0 - s[m] ** 2
    out[m] = np.exp(-1.0 / t) * (-2.0 * s[m] / t ** 2)
    return out


@dataclass(frozen=True)
class RadialBump:
    """Smooth radial bump of radius ``rho`` with unit mass in R^d."""

    rho: float
    d: int
    norm: float = field(init=False)
    l2: float = field(init=False)
    grad_max: float = field(init=False)

    def __post_init__(self):
        area = 2.0 * math.pi ** (self.d / 2) / special.gamma(self.d / 2)
        m1, _ = integrate.quad(lambda s: _bump_profile(s) * s ** (self.d - 1), 0.0, 1.0)
        m2, _ = integrate.quad(lambda s: _bump_profile(s) ** 2 * s ** (self.d - 1), 0.0, 1.0)
        c = 1.0 / (area * m1 * self.rho ** self.d)
        object.__setattr__(self, "norm", c)
        object.__setattr__(self, "l2", c * c * area * m2 * self.rho ** self.d)
        grid = np.linspace(0.0, 1.0, 20001)
        gmax = np.abs(_bump_profile_deriv(grid)).max()
        object.__setattr__(self, "grad_max", c * gmax / self.rho)

    def __call__(self, r):
        return self.norm * _bump_profile(np.asarray(r) / self.rho)


# ---------------------------------------------------------------------------
# field


class EnvironmentField:
    """One realisation; evaluable at any point of ``params.region``."""

    def __init__(self, params: EnvironmentParams):
        params.validate()
        self.params = params
        self.d = params.d
        self.h = params.h_env
        self.kernel = RadialBump(params.radius, params.d)
        # continuum variance of kernel * white noise with site weight h^d is h^d ||k||_2^2
        self.gain = 1.0 / math.sqrt(self.h ** self.d * self.kernel.l2)
        self.m = int(round(params.radius / self.h))
        offs = np.array(list(itertools.product(range(-self.m, self.m + 1), repeat=self.d)), dtype=np.int64)
        self._offsets = offs
        self._chunks: dict = {}
        self._lock = threading.Lock()
        lo = np.array([r[0] for r in params.region])
        hi = np.array([r[1] for r in params.region])
        self.lo, self.hi = lo, hi
        site_lo = np.floor(lo / self.h).astype(np.int64) - self.m - 1
        site_hi = np.ceil(hi / self.h).astype(np.int64) + self.m + 1
        n_sites = int(np.prod(site_hi - site_lo + 1))
        if n_sites * 2 * self.d * 8 > params.memory_budget:
            raise EnvironmentSizeError(
                f"region needs {n_sites} noise sites ({n_sites * 16 * self.d / 2**20:.0f} MiB), over budget"
            )

    # -- noise --------------------------------------------------------------

    def _chunk(self, key: tuple) -> np.ndarray:
        arr = self._chunks.get(key)
        if arr is not None:
            return arr
        words = [np.uint64(0)] * 4
        for i, c in enumerate(key):
            w = (int(c) + 2 ** 31) & 0xFFFFFFFF
            slot = 1 + i // 2
            words[slot] = np.uint64(int(words[slot]) | (w << (32 * (i % 2))))
        bg = np.random.Philox(key=int(self.params.seed) & 0xFFFFFFFFFFFFFFFF, counter=np.array(words, dtype=np.uint64))
        arr = np.random.Generator(bg).standard_normal((CHUNK,) * self.d + (2 * self.d,))
        with self._lock:
            # first writer wins; every writer computes identical values
            arr = self._chunks.setdefault(key, arr)
        return arr

    def noise_block(self, site_lo, site_hi) -> np.ndarray:
        """Noise at lattice sites ``site_lo..site_hi`` inclusive, shape (n_1..n_d, 2d)."""
        site_lo = np.asarray(site_lo, dtype=np.int64)
        site_hi = np.asarray(site_hi, dtype=np.int64)
        shape = tuple(site_hi - site_lo + 1)
        nbytes = int(np.prod(shape)) * 2 * self.d * 8
        if nbytes > self.params.memory_budget:
            raise EnvironmentSizeError(f"noise block of {nbytes / 2**20:.0f} MiB exceeds budget")
        out = np.empty(shape + (2 * self.d,))
        c_lo = np.floor_divide(site_lo, CHUNK)
        c_hi = np.floor_divide(site_hi, CHUNK)
        for key in itertools.product(*[range(a, b + 1) for a, b in zip(c_lo, c_hi)]):
            base = np.array(key) * CHUNK
            a = np.maximum(base, site_lo)
            b = np.minimum(base + CHUNK - 1, site_hi)
            src = tuple(slice(int(x - y), int(z - y) + 1) for x, y, z in zip(a, base, b))
            dst = tuple(slice(int(x - y), int(z - y) + 1) for x, y, z in zip(a, site_lo, b))
            out[dst] = self._chunk(tuple(int(k) for k in key))[src]
        return out

    # -- evaluation ---------------------------------------------------------

    def _check(self, x: np.ndarray) -> None:
        bad = np.any((x < self.lo) | (x > self.hi), axis=1)
        if bad.any():
            raise OutOfCoverageError(f"{int(bad.sum())} point(s) outside the generated region, e.g. {x[bad][0]}")

    def site_indices(self, x) -> set:
        """Lattice sites whose noise enters the field value at ``x``."""
        x = np.asarray(x, dtype=float)
        base = np.floor(x / self.h).astype(np.int64)
        sites = base + self._offsets
        r = np.linalg.norm(x - sites * self.h, axis=1)
        return {tuple(s) for s in sites[r < self.params.radius]}

    def smoothed(self, x) -> np.ndarray:
        """The raw smoothed noise (phi, psi) at points ``x``: shape (n, 2d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check(x)
        base = np.floor(x / self.h).astype(np.int64)
        lo = base.min(axis=0) - self.m
        hi = base.max(axis=0) + self.m + 1
        block = self.noise_block(lo, hi)
        out = np.zeros((x.shape[0], 2 * self.d))
        w0 = self.h ** self.d
        for off in self._offsets:
            sites = base + off
            r = np.linalg.norm(x - sites * self.h, axis=1)
            w = w0 * self.kernel(r)
            nz = w > 0
            if not nz.any():
                continue
            idx = tuple((sites[nz] - lo).T)
            out[nz] += w[nz, None] * block[idx]
        return out

    def stencil(self) -> np.ndarray:
        """Site weights ``h^d k(|j| h)`` for lattice offsets ``|j_i| <= m``."""
        r = np.linalg.norm(self._offsets * self.h, axis=1)
        w = self.h ** self.d * self.kernel(r)
        return w.reshape((2 * self.m + 1,) * self.d)

    def squash(self, v):
        return np.tanh(self.gain * v)

    def evaluate(self, x):
        """Coefficients at ``x``: returns (A of shape (n,d,d), b of shape (n,d)); squeezed for one point."""
        single = np.ndim(x) == 1
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eta = self.params.eta0
        n, d = x.shape
        if eta == 0.0:
            self._check(x)
            A = np.broadcast_to(np.eye(d), (n, d, d)).copy()
            b = np.zeros((n, d))
        else:
            s = self.squash(self.smoothed(x))
            b = eta * s[:, :d]
            A = np.zeros((n, d, d))
            A[:, np.arange(d), np.arange(d)] = 1.0 + eta * s[:, d:]
        if single:
            return A[0], b[0]
        return A, b

    def lipschitz_bound(self) -> float:
        """Upper bound on the Lipschitz constant of ``b`` over the region.

        ``|grad phi_c| <= h^d sup|grad k| N max|xi|`` with N the number of sites in
        a kernel ball, then ``|grad tanh(g phi)| <= g |grad phi|``.
        """
        eta = self.params.eta0
        if eta == 0.0:
            return 0.0
        site_lo = np.floor(self.lo / self.h).astype(np.int64) - self.m - 1
        site_hi = np.ceil(self.hi / self.h).astype(np.int64) + self.m + 1
        xi_max = np.abs(self.noise_block(site_lo, site_hi)[..., : self.d]).max()
        n_sites = int((np.linalg.norm(self._offsets * self.h, axis=1) < self.params.radius + self.h * math.sqrt(self.d)).sum())
        per_comp = self.gain * self.h ** self.d * self.kernel.grad_max * n_sites * xi_max
        return float(eta * per_comp * math.sqrt(self.d))

    # -- tabulation for the path kernel --------------------------------------

    def tabulate(self, lo, hi) -> "CoefficientTable":
        """Values of ``(b, sqrt(diag A))`` on the noise lattice covering ``[lo, hi]``.

        The path kernel interpolates these multilinearly between lattice sites.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo < self.lo) or np.any(hi > self.hi):
            raise OutOfCoverageError("tabulation box exceeds the generated region")
        g_lo = np.floor(lo / self.h).astype(np.int64)
        g_hi = np.ceil(hi / self.h).astype(np.int64)
        shape = tuple(g_hi - g_lo + 1)
        npts = int(np.prod(shape))
        need = npts * 2 * self.d * 8 * 3
        if need > self.params.memory_budget:
            raise EnvironmentSizeError(f"table of {npts} points needs ~{need / 2**20:.0f} MiB, over budget")
        block = self.noise_block(g_lo - self.m, g_hi + self.m)
        # the stencil is symmetric, so convolution equals the correlation used by smoothed()
        acc = np.empty(shape + (2 * self.d,))
        stencil = self.stencil()
        for c in range(2 * self.d):
            acc[..., c] = signal.fftconvolve(block[..., c], stencil, mode="valid")
        s = self.squash(acc)
        eta = self.params.eta0
        vals = np.empty_like(s)
        vals[..., : self.d] = eta * s[..., : self.d]
        vals[..., self.d :] = np.sqrt(1.0 + eta * s[..., self.d :])
        return CoefficientTable(origin=g_lo * self.h, spacing=self.h, values=np.ascontiguousarray(vals))


def generate(params: EnvironmentParams) -> EnvironmentField:
    """Realisation of the field described by ``params`` (deterministic in ``params.seed``)."""
    return EnvironmentField(params)


@dataclass
class CoefficientTable:
    origin: np.ndarray
    spacing: float
    values: np.ndarray  # shape (n_1..n_d, 2d): b then sigma

    def __post_init__(self):
        self.origin = np.ascontiguousarray(self.origin, dtype=np.float64)
        self.shape_array = np.ascontiguousarray(self.values.shape[:-1], dtype=np.int64)

    @property
    def lo(self) -> np.ndarray:
        return self.origin

    @property
    def hi(self) -> np.ndarray:
        return self.origin + (self.shape_array - 1) * self.spacing


# ---------------------------------------------------------------------------
# isotropy harness


def signed_permutation(perm, signs) -> np.ndarray:
    d = len(perm)
    r = np.zeros((d, d))
    for i, (p, s) in enumerate(zip(perm, signs)):
        r[i, p] = s
    return r


@dataclass
class IsotropyReport:
    passed: bool
    exact: bool
    mean_delta: dict
    var_delta: dict
    p_values: dict
    alpha: float
    n_samples: int


def verify_isotropy(params: EnvironmentParams, r, n_samples: int = 2000, alpha: float = 0.01) -> IsotropyReport:
    """Compare the law of ``(A(rx), b(rx))`` with that of ``(r A(x) r^T, r b(x))`` across seeds.

    The probe ``x`` is placed so that ``rx`` and ``x`` are at least ``R`` apart
    whenever they differ, which makes the two samples independent.
    """
    r = np.asarray(r, dtype=float)
    d = params.d
    if not np.allclose(np.abs(r).sum(axis=0), 1) or not np.allclose(np.abs(r).sum(axis=1), 1):
        raise ValueError("r must be a signed permutation matrix")
    x = params.R * (1.0 + 2.0 * np.arange(d)) + 0.37 * params.h_env
    rx = r @ x
    reach = np.abs(x).max() + params.R
    region = tuple((-reach, reach) for _ in range(d))
    left = np.empty((n_samples, d + d))
    right = np.empty((n_samples, d + d))
    for i in range(n_samples):
        p = EnvironmentParams(params.eta0, params.R, params.h_env, d, derive_seed_for(params.seed, i), region)
        fld = EnvironmentField(p)
        A1, b1 = fld.evaluate(np.vstack([rx, x]))
        left[i, :d] = np.diagonal(A1[0])
        left[i, d:] = b1[0]
        rA = r @ A1[1] @ r.T
        right[i, :d] = np.diagonal(rA)
        right[i, d:] = r @ b1[1]
        if not np.allclose(rA - np.diag(np.diagonal(rA)), 0.0):
            raise AssertionError("conjugated A left the diagonal class")
    names = [f"A{k}{k}" for k in range(d)] + [f"b{k}" for k in range(d)]
    exact = bool(np.array_equal(left, right))
    mean_delta, var_delta, pvals = {}, {}, {}
    n_tests = 0
    for j, nm in enumerate(names):
        a_, b_ = left[:, j], right[:, j]
        mean_delta[nm] = float(a_.mean() - b_.mean())
        var_delta[nm] = float(a_.var(ddof=1) - b_.var(ddof=1))
        if exact or (np.ptp(a_) == 0 and np.ptp(b_) == 0):
            pvals[nm] = 1.0
            continue
        pt = stats.ttest_ind(a_, b_, equal_var=False).pvalue
        pl = stats.levene(a_, b_, center="median").pvalue
        pvals[nm] = float(min(pt, pl))
        n_tests += 2
    thresh = alpha / max(n_tests, 1)
    passed = exact or all(p > thresh for p in pvals.values())
    return IsotropyReport(passed, exact, mean_delta, var_delta, pvals, alpha, n_samples)


def derive_seed_for(seed: int, i: int) -> int:
    from .rng import derive_seed

    return derive_seed(seed, "isotropy", i)
