"""Pure numpy path kernel, used when the compiled extension is unavailable.

Vectorised over the live paths of a chunk; consumes exactly the same Philox
blocks as the compiled kernel, so both produce the same trajectories up to
last-bit differences in the transcendental functions.
"""
from __future__ import annotations

import numpy as np

from .rng import step_bridge_uniform, step_normals

RULE_EXIT = 0
RULE_TAU1 = 1
RULE_TAU2 = 2
RULE_TILDE = 3
RULE_EXCURSION = 4
RULE_HORIZON = 5
RULE_CAP = 6
RULE_COVERAGE = 7


def _inside(kind, r, ra, rb):
    if kind == 1:
        return r < ra
    if kind == 2:
        return (r > ra) & (r < rb)
    return np.ones_like(r, dtype=bool)


def _dist_complement(kind, r, ra, rb):
    if kind == 1:
        v = ra - r
    elif kind == 2:
        v = np.minimum(r - ra, rb - r)
    else:
        return np.full_like(r, np.inf)
    return np.maximum(v, 0.0)


def _dist_domain(kind, r, ra, rb):
    if kind == 1:
        v = r - ra
    elif kind == 2:
        v = np.maximum(ra - r, r - rb)
    else:
        return np.zeros_like(r)
    return np.maximum(v, 0.0)


def _cross_prob(kind, ro, rn, ra, rb, var):
    if kind == 1:
        return np.exp(-2.0 * (ra - ro) * (ra - rn) / var)
    if kind == 2:
        p_in = np.exp(-2.0 * (ro - ra) * (rn - ra) / var)
        p_out = np.exp(-2.0 * (rb - ro) * (rb - rn) / var)
        return 1.0 - (1.0 - p_in) * (1.0 - p_out)
    return np.zeros_like(ro)


def interpolate(table, x):
    """Multilinear interpolation of a coefficient table at points ``x`` (n, d).

    Returns (values (n, nch), ok mask).
    """
    d = x.shape[1]
    shape = table.shape_array
    u = (x - table.origin) / table.spacing
    fl = np.floor(u)
    idx = fl.astype(np.int64)
    ok = np.all((idx >= 0) & (idx <= shape - 2), axis=1)
    idx = np.where(ok[:, None], idx, 0)
    frac = np.where(ok[:, None], u - fl, 0.0)
    vals = table.values.reshape(-1, table.values.shape[-1])
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    base = idx @ strides
    out = np.zeros((x.shape[0], vals.shape[1]))
    for corner in range(1 << d):
        w = np.ones(x.shape[0])
        off = base.copy()
        for k in range(d):
            if (corner >> k) & 1:
                w = w * frac[:, k]
                off += strides[k]
            else:
                w = w * (1.0 - frac[:, k])
        out += w[:, None] * vals[off]
    return out, ok


def run_chunk(spec, out, i0: int, i1: int) -> None:
    """Advance paths ``i0:i1`` of ``spec`` and write results into ``out``."""
    if i1 <= i0:
        return
    sl = slice(i0, i1)
    x0 = spec.x0[sl]
    ids = spec.path_ids[sl]
    n, d = x0.shape
    kind, ra, rb = spec.geom_kind, spec.r_a, spec.r_b
    dt = spec.dt
    sq = np.sqrt(dt)
    var0 = spec.sigma0 ** 2 * dt
    # with the bridge test a crossing lies inside the step; its midpoint is the time estimate
    half_dt = 0.5 * dt if spec.bridge else 0.0
    lat_steps, lat_thr, lat_mode = spec.lattice_steps, spec.lattice_threshold, spec.lattice_mode

    x = x0.copy()
    xmax = np.zeros(n)
    code = np.full(n, -1, dtype=np.int8)
    exited = np.zeros(n, dtype=bool)
    t_exit = np.full(n, np.inf)
    x_exit = np.full((n, d), np.nan)
    xmax_exit = np.full(n, np.nan)
    tau1 = np.full(n, np.inf)
    tau2 = np.full(n, np.inf)
    ttil = np.full(n, np.inf)
    kfin = np.zeros(n, dtype=np.int64)

    r = np.linalg.norm(x, axis=1)
    if kind != 0:
        out0 = ~_inside(kind, r, ra, rb)
        exited |= out0
        t_exit[out0] = 0.0
        xmax_exit[out0] = 0.0
        x_exit[out0] = x[out0]
        if spec.stop_on_exit:
            code[out0] = RULE_EXIT
    if lat_steps > 0:
        live = code < 0
        dc = _dist_complement(kind, r, ra, rb)
        du = _dist_domain(kind, r, ra, rb)
        f1 = live & (dc <= lat_thr)
        tau1[f1] = 0.0
        f2 = live & (du >= lat_thr)
        tau2[f2] = 0.0
        f3 = live & ~_inside(kind, r, ra, rb) if kind != 0 else np.zeros(n, dtype=bool)
        ttil[f3] = 0.0
        for flag, mode, rc in ((f1, 1, RULE_TAU1), (f2, 2, RULE_TAU2), (f3, 3, RULE_TILDE)):
            if lat_mode == mode:
                code[flag & (code < 0)] = rc

    k = 0
    while True:
        live = np.nonzero(code < 0)[0]
        if live.size == 0:
            break
        if k >= spec.max_steps:
            code[live] = RULE_CAP
            kfin[live] = k
            break
        xl = x[live]
        if spec.table is not None:
            coef, ok = interpolate(spec.table, xl)
            bad = live[~ok]
            code[bad] = RULE_COVERAGE
            kfin[bad] = k
            live = live[ok]
            xl = xl[ok]
            coef = coef[ok]
            if live.size == 0:
                continue
        z = step_normals(spec.seed, ids[live], np.uint64(k), d)
        if spec.table is not None:
            xn = xl + coef[:, :d] * dt + coef[:, d:] * sq * z
        else:
            xn = xl + spec.sigma0 * sq * z
        r_old = np.linalg.norm(xl, axis=1)
        r_new = np.linalg.norm(xn, axis=1)
        k += 1
        exc = np.linalg.norm(xn - x0[live], axis=1)
        xmax[live] = np.maximum(xmax[live], exc)
        if kind != 0:
            cand = ~exited[live]
            hit = cand & ~_inside(kind, r_new, ra, rb)
            if spec.bridge:
                rest = cand & ~hit
                if rest.any():
                    u = step_bridge_uniform(spec.seed, ids[live[rest]], np.uint64(k - 1), d)
                    pc = _cross_prob(kind, r_old[rest], r_new[rest], ra, rb, var0)
                    hb = np.zeros_like(rest)
                    hb[np.nonzero(rest)[0]] = u < pc
                    hit |= hb
            if hit.any():
                hp = live[hit]
                exited[hp] = True
                t_exit[hp] = k * dt - half_dt
                xmax_exit[hp] = xmax[hp]
                x_exit[hp] = xn[hit]
                if spec.stop_on_exit:
                    code[hp] = RULE_EXIT
        x[live] = xn
        kfin[live] = k
        act = code[live] < 0
        exc_hit = act & (xmax[live] >= spec.excursion_threshold)
        code[live[exc_hit]] = RULE_EXCURSION
        act &= ~exc_hit
        if spec.horizon_steps > 0 and k >= spec.horizon_steps:
            code[live[act]] = RULE_HORIZON
            act[:] = False
        if lat_steps > 0 and k % lat_steps == 0 and act.any():
            pl = live[act]
            rn = r_new[act]
            dc = _dist_complement(kind, rn, ra, rb)
            du = _dist_domain(kind, rn, ra, rb)
            f1 = np.isinf(tau1[pl]) & (dc <= lat_thr)
            tau1[pl[f1]] = k * dt
            if kind != 0:
                f3 = np.isinf(ttil[pl]) & ~_inside(kind, rn, ra, rb)
            else:
                f3 = np.zeros(pl.size, dtype=bool)
            ttil[pl[f3]] = k * dt
            f2 = np.isinf(tau2[pl]) & (du >= lat_thr)
            tau2[pl[f2]] = k * dt
            for flag, mode, rc in ((f1, 1, RULE_TAU1), (f3, 3, RULE_TILDE), (f2, 2, RULE_TAU2)):
                if lat_mode == mode:
                    code[pl[flag]] = rc

    out.rule[sl] = code
    out.t_stop[sl] = kfin * dt - np.where((code == RULE_EXIT) & (kfin > 0), half_dt, 0.0)
    out.x_stop[sl] = x
    out.xmax_stop[sl] = xmax
    out.t_exit[sl] = t_exit
    out.x_exit[sl] = x_exit
    out.xmax_exit[sl] = xmax_exit
    out.tau1[sl] = tau1
    out.tau2[sl] = tau2
    out.tau_tilde[sl] = ttil
