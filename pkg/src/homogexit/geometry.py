"""Bounded domains with an exterior ball certificate, their inflations and rescalings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class GeometryError(ValueError):
    pass


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _unwrap(x, values):
    return values[0] if np.ndim(x) == 1 else values


class Domain:
    """Open bounded set U with exterior ball radius ``r0``."""

    r0: float
    kind: str = "general"

    # signed distance: negative inside, positive outside
    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x):
        p = _as_points(x)
        return _unwrap(x, self.signed_distance(p) < 0.0)

    def distance_to_complement(self, x):
        p = _as_points(x)
        return _unwrap(x, np.maximum(-self.signed_distance(p), 0.0))

    def distance_to_domain(self, x):
        p = _as_points(x)
        return _unwrap(x, np.maximum(self.signed_distance(p), 0.0))

    def bounding_box(self, d: int) -> tuple:
        raise NotImplementedError

    def diameter(self, d: int = 3) -> float:
        lo, hi = self.bounding_box(d)
        return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))

    def nearest_boundary_point(self, x) -> np.ndarray:
        raise NotImplementedError

    def outward_normal(self, y) -> np.ndarray:
        raise NotImplementedError

    def inflate(self, delta: float) -> "Domain":
        if not 0.0 < delta < self.r0 / 2.0:
            raise GeometryError(f"inflation {delta} must lie in (0, r0/2) with r0={self.r0}")
        return self._inflate(delta)

    def rescale(self, epsilon: float) -> "Domain":
        if epsilon <= 0:
            raise GeometryError("epsilon must be positive")
        return self._rescale(epsilon)

    def sample_boundary(self, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def certify_exterior_ball(self, n: int = 200, d: int = 3, seed: int = 0, tol: float = 1e-9) -> dict:
        """Check ``d(x*, U) >= r0`` for ``x* = y + r n(y)`` at sampled boundary points.

        For unbounded ``r0`` the check uses ``r = diameter``, which certifies every
        finite radius below it by nesting of tangent balls.
        """
        rng = np.random.default_rng(seed)
        y = self.sample_boundary(n, d, rng)
        r = self.r0 if math.isfinite(self.r0) else self.diameter(d)
        centers = y + r * self.outward_normal(y)
        gap = np.asarray(self.distance_to_domain(centers)) - r
        return {"radius": r, "n": n, "min_gap": float(gap.min()), "ok": bool(gap.min() >= -tol * max(1.0, r))}

    def to_config(self) -> dict:
        raise NotImplementedError

    def sim_spec(self):
        """(kind code, r_a, r_b) understood by the path kernel, or None for oracle-only domains."""
        return None


@dataclass(frozen=True)
class Ball(Domain):
    radius: float
    r0: float = math.inf
    kind = "ball"

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("radius must be positive")

    def signed_distance(self, x):
        return np.linalg.norm(_as_points(x), axis=1) - self.radius

    def bounding_box(self, d):
        return (-self.radius * np.ones(d), self.radius * np.ones(d))

    def diameter(self, d=3):
        return 2.0 * self.radius

    def nearest_boundary_point(self, x):
        p = _as_points(x)
        nrm = np.linalg.norm(p, axis=1, keepdims=True)
        safe = np.where(nrm > 0, nrm, 1.0)
        e = np.where(nrm > 0, p / safe, np.eye(p.shape[1])[0])
        return _unwrap(x, self.radius * e)

    def outward_normal(self, y):
        y = _as_points(y)
        return y / np.linalg.norm(y, axis=1, keepdims=True)

    def _inflate(self, delta):
        return Ball(self.radius + delta, self.r0 - delta)

    def _rescale(self, eps):
        return Ball(self.radius / eps, self.r0 / eps)

    def sample_boundary(self, n, d, rng):
        z = rng.standard_normal((n, d))
        return self.radius * z / np.linalg.norm(z, axis=1, keepdims=True)

    def to_config(self):
        return {"ball": self.radius}

    def sim_spec(self):
        return (1, self.radius, 0.0)


@dataclass(frozen=True)
class Annulus(Domain):
    r1: float
    r2: float
    r0: float = None
    kind = "annulus"

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise GeometryError("annulus needs 0 < r1 < r2")
        if self.r0 is None:
            object.__setattr__(self, "r0", self.r1)
        elif self.r0 > self.r1 * (1 + 1e-12):
            raise GeometryError("the hole only admits exterior balls of radius <= r1")

    def signed_distance(self, x):
        r = np.linalg.norm(_as_points(x), axis=1)
        return np.maximum(self.r1 - r, r - self.r2)

    def bounding_box(self, d):
        return (-self.r2 * np.ones(d), self.r2 * np.ones(d))

    def diameter(self, d=3):
        return 2.0 * self.r2

    def nearest_boundary_point(self, x):
        p = _as_points(x)
        nrm = np.linalg.norm(p, axis=1, keepdims=True)
        safe = np.where(nrm > 0, nrm, 1.0)
        e = np.where(nrm > 0, p / safe, np.eye(p.shape[1])[0])
        target = np.where(nrm - self.r1 < self.r2 - nrm, self.r1, self.r2)
        return _unwrap(x, target * e)

    def outward_normal(self, y):
        y = _as_points(y)
        r = np.linalg.norm(y, axis=1, keepdims=True)
        sign = np.where(np.abs(r - self.r1) < np.abs(r - self.r2), -1.0, 1.0)
        return sign * y / r

    def _inflate(self, delta):
        return Annulus(self.r1 - delta, self.r2 + delta, self.r0 - delta)

    def _rescale(self, eps):
        return Annulus(self.r1 / eps, self.r2 / eps, self.r0 / eps)

    def sample_boundary(self, n, d, rng):
        z = rng.standard_normal((n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rad = np.where(rng.random(n) < 0.5, self.r1, self.r2)
        return rad[:, None] * z

    def to_config(self):
        return {"annulus": [self.r1, self.r2]}

    def sim_spec(self):
        return (2, self.r1, self.r2)


# ---------------------------------------------------------------------------
# general domains given by an exact signed-distance function


def _sdf_rounded_cube(x, half=0.6, rounding=0.4):
    q = np.abs(x) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside - rounding


def _sdf_capsule(x, half_length=0.5, radius=0.5):
    y = x.copy()
    y[:, 0] = np.clip(y[:, 0], -half_length, half_length)
    return np.linalg.norm(x - y, axis=1) - radius


def _sdf_unit_ball(x):
    return np.linalg.norm(x, axis=1) - 1.0


BUILTIN_SDF = {
    "unit_ball": (_sdf_unit_ball, 1.0),
    "rounded_cube": (_sdf_rounded_cube, 1.0),
    "capsule": (_sdf_capsule, 1.0),
}


@dataclass(frozen=True)
class General(Domain):
    """Domain given by an exact signed-distance oracle; ``r0`` is asserted by the user and certified by sampling."""

    sdf: Callable
    half_extent: float
    r0: float
    name: str = "custom"
    offset: float = 0.0
    scale: float = 1.0
    tol: float = 1e-9
    kind = "general"

    def signed_distance(self, x):
        p = _as_points(x)
        return self.scale * self.sdf(p / self.scale) - self.offset

    def bounding_box(self, d):
        h = self.scale * self.half_extent + self.offset
        return (-h * np.ones(d), h * np.ones(d))

    def _raw_grad(self, x, h=1e-6):
        x = _as_points(x)
        g = np.empty_like(x)
        for k in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[k] = h * self.scale
            g[:, k] = (self.signed_distance(x + e) - self.signed_distance(x - e)) / (2 * h * self.scale)
        return g

    def _grad(self, x, h=1e-6):
        g = self._raw_grad(x, h)
        n = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.where(n > 0, n, 1.0)

    def nearest_boundary_point(self, x):
        p = _as_points(x).copy()
        for _ in range(8):
            p = p - self.signed_distance(p)[:, None] * self._grad(p)
        return _unwrap(x, p)

    def outward_normal(self, y):
        return self._grad(y)

    def _inflate(self, delta):
        return General(self.sdf, self.half_extent, self.r0 - delta, self.name, self.offset + delta, self.scale, self.tol)

    def _rescale(self, eps):
        return General(self.sdf, self.half_extent, self.r0 / eps, self.name, self.offset / eps, self.scale / eps, self.tol)

    def sample_boundary(self, n, d, rng):
        # an exact sdf has unit gradient off the medial axis; projections from near it are unreliable
        lo, hi = self.bounding_box(d)
        out = np.empty((0, d))
        while out.shape[0] < n:
            x = rng.uniform(lo, hi, size=(4 * n, d))
            x = x[np.linalg.norm(self._raw_grad(x), axis=1) > 0.99]
            y = self.nearest_boundary_point(x)
            y = y[np.abs(self.signed_distance(y)) < 1e-7 * max(1.0, self.scale)]
            out = np.vstack([out, y])
        return out[:n]

    def to_config(self):
        return {"sdf": self.name, "r0": self.r0}


def domain_from_config(cfg: dict) -> Domain:
    """Parse ``{"ball": r} | {"annulus": [r1, r2]} | {"sdf": name, "r0": v}``."""
    if "ball" in cfg:
        return Ball(float(cfg["ball"]))
    if "annulus" in cfg:
        r1, r2 = cfg["annulus"]
        return Annulus(float(r1), float(r2))
    if "sdf" in cfg:
        name = cfg["sdf"]
        if name not in BUILTIN_SDF:
            raise GeometryError(f"unknown builtin sdf {name!r}; choose from {sorted(BUILTIN_SDF)}")
        fn, half = BUILTIN_SDF[name]
        return General(fn, half, float(cfg.get("r0", math.inf)), name=name)
    raise GeometryError(f"unrecognised domain config {cfg!r}")
