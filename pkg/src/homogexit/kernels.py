"""Backend selection and threaded dispatch for the path kernel.

The compiled extension is preferred; setting ``HOMOGEXIT_BACKEND=python``
forces the numpy fallback.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _fallback

try:  # pragma: no cover - depends on build
    from . import _core
except ImportError:  # pragma: no cover
    _core = None

RULE_NAMES = ("tau_eps", "tau1", "tau2", "tau_tilde", "T_n", "horizon", "time_cap", "coverage")
GEOM_NONE, GEOM_BALL, GEOM_ANNULUS = 0, 1, 2
LATTICE_TRACK, LATTICE_TAU1, LATTICE_TAU2, LATTICE_TILDE = 0, 1, 2, 3


def _pick_backend():
    forced = os.environ.get("HOMOGEXIT_BACKEND", "").lower()
    if forced == "python" or _core is None:
        return "python", _fallback.run_chunk
    return "compiled", _core.run_chunk


BACKEND, _RUN_CHUNK = _pick_backend()


def available_backends() -> dict:
    out = {"python": _fallback.run_chunk}
    if _core is not None:
        out["compiled"] = _core.run_chunk
    return out


@dataclass
class BatchSpec:
    """Everything the kernel needs for one batch of independent paths."""

    x0: np.ndarray
    path_ids: np.ndarray
    seed: int
    dt: float
    max_steps: int
    horizon_steps: int = 0
    excursion_threshold: float = np.inf
    geom_kind: int = GEOM_NONE
    r_a: float = 0.0
    r_b: float = 0.0
    stop_on_exit: bool = True
    bridge: bool = False
    sigma0: float = 1.0
    lattice_steps: int = 0
    lattice_threshold: float = 0.0
    lattice_mode: int = LATTICE_TRACK
    table: object = None

    def __post_init__(self):
        self.x0 = np.ascontiguousarray(self.x0, dtype=np.float64)
        if self.x0.ndim != 2:
            raise ValueError("x0 must have shape (n, d)")
        self.path_ids = np.ascontiguousarray(self.path_ids, dtype=np.uint64)
        if self.path_ids.shape != (self.x0.shape[0],):
            raise ValueError("one path id per start point")
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.bridge and self.table is not None:
            raise ValueError("bridge correction is only exact for constant coefficients")


@dataclass
class BatchResult:
    rule: np.ndarray
    t_stop: np.ndarray
    x_stop: np.ndarray
    xmax_stop: np.ndarray
    t_exit: np.ndarray
    x_exit: np.ndarray
    xmax_exit: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    tau_tilde: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int, d: int) -> "BatchResult":
        return cls(
            rule=np.full(n, -1, dtype=np.int8),
            t_stop=np.zeros(n),
            x_stop=np.zeros((n, d)),
            xmax_stop=np.zeros(n),
            t_exit=np.zeros(n),
            x_exit=np.zeros((n, d)),
            xmax_exit=np.zeros(n),
            tau1=np.zeros(n),
            tau2=np.zeros(n),
            tau_tilde=np.zeros(n),
        )

    def rule_names(self) -> np.ndarray:
        return np.array(RULE_NAMES, dtype=object)[self.rule]


def run_batch(spec: BatchSpec, threads: int = 1, backend: str | None = None, chunk: int = 256) -> BatchResult:
    """Run all paths of ``spec``; output is independent of ``threads``."""
    n, d = spec.x0.shape
    out = BatchResult.empty(n, d)
    runner = _RUN_CHUNK if backend is None else available_backends()[backend]
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if threads <= 1 or len(bounds) <= 1:
        for i0, i1 in bounds:
            runner(spec, out, i0, i1)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: runner(spec, out, b[0], b[1]), bounds))
    out.meta["backend"] = backend or BACKEND
    return out
