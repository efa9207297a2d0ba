# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama path kernel.

Mirrors ``_fallback.run_chunk`` step for step: same Philox streams, same
stopping logic, same output layout.
"""
from libc.math cimport sqrt, log, cos, sin, exp, floor, INFINITY, NAN, M_PI
from libc.stdint cimport uint32_t, uint64_t, int64_t

DEF MAXD = 8
DEF MAXCH = 16

cdef enum:
    RULE_EXIT = 0
    RULE_TAU1 = 1
    RULE_TAU2 = 2
    RULE_TILDE = 3
    RULE_EXCURSION = 4
    RULE_HORIZON = 5
    RULE_CAP = 6
    RULE_COVERAGE = 7


cdef inline void _philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                         uint32_t k0, uint32_t k1, uint32_t* out) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t n0, n2
    cdef int r
    for r in range(10):
        p0 = <uint64_t>3528531795U * <uint64_t>c0
        p1 = <uint64_t>3449720151U * <uint64_t>c2
        n0 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0
        n2 = (<uint32_t>(p0 >> 32)) ^ c3 ^ k1
        c1 = <uint32_t>p1
        c3 = <uint32_t>p0
        c0 = n0
        c2 = n2
        k0 = k0 + <uint32_t>2654435769U
        k1 = k1 + <uint32_t>3144134277U
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline double _unif(uint32_t a, uint32_t b) noexcept nogil:
    return ((<double>(a >> 5)) * 67108864.0 + <double>(b >> 6) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline void _block(uint64_t seed, uint64_t stream, uint64_t blk, double* u) noexcept nogil:
    cdef uint32_t w[4]
    _philox(<uint32_t>blk, <uint32_t>(blk >> 32),
            <uint32_t>stream, <uint32_t>(stream >> 32),
            <uint32_t>seed, <uint32_t>(seed >> 32), w)
    u[0] = _unif(w[0], w[1])
    u[1] = _unif(w[2], w[3])


cdef inline void _normals(uint64_t seed, uint64_t stream, uint64_t step, int d, double* z) noexcept nogil:
    cdef int nb = (d + 1) // 2
    cdef uint64_t bps = nb + 1
    cdef int j
    cdef double u[2]
    cdef double r, ang
    for j in range(nb):
        _block(seed, stream, step * bps + j, u)
        r = sqrt(-2.0 * log(u[0]))
        ang = 2.0 * M_PI * u[1]
        z[2 * j] = r * cos(ang)
        z[2 * j + 1] = r * sin(ang)


cdef inline double _bridge_u(uint64_t seed, uint64_t stream, uint64_t step, int d) noexcept nogil:
    cdef int nb = (d + 1) // 2
    cdef uint64_t bps = nb + 1
    cdef double u[2]
    _block(seed, stream, step * bps + nb, u)
    return u[0]


cdef inline double _norm(double* x, int d) noexcept nogil:
    cdef double s = 0.0
    cdef int k
    for k in range(d):
        s += x[k] * x[k]
    return sqrt(s)


cdef inline bint _inside(int kind, double r, double ra, double rb) noexcept nogil:
    if kind == 1:
        return r < ra
    if kind == 2:
        return r > ra and r < rb
    return True


cdef inline double _dist_complement(int kind, double r, double ra, double rb) noexcept nogil:
    cdef double v
    if kind == 1:
        v = ra - r
    elif kind == 2:
        v = r - ra
        if rb - r < v:
            v = rb - r
    else:
        return INFINITY
    return v if v > 0.0 else 0.0


cdef inline double _dist_domain(int kind, double r, double ra, double rb) noexcept nogil:
    cdef double v
    if kind == 1:
        v = r - ra
    elif kind == 2:
        v = ra - r
        if r - rb > v:
            v = r - rb
    else:
        return 0.0
    return v if v > 0.0 else 0.0


cdef inline double _cross_prob(int kind, double ro, double rn, double ra, double rb, double var) noexcept nogil:
    # half-space approximation of the bridge crossing probability, per boundary sphere
    cdef double p_out, p_in
    if kind == 1:
        return exp(-2.0 * (ra - ro) * (ra - rn) / var)
    if kind == 2:
        p_in = exp(-2.0 * (ro - ra) * (rn - ra) / var)
        p_out = exp(-2.0 * (rb - ro) * (rb - rn) / var)
        return 1.0 - (1.0 - p_in) * (1.0 - p_out)
    return 0.0


cdef inline int _interp(double* x, int d, const double* tab, const double* origin, double spacing,
                        const int64_t* shape, int nch, double* outv) noexcept nogil:
    cdef double frac[MAXD]
    cdef int64_t strides[MAXD]
    cdef int64_t base = 0
    cdef int64_t i, off
    cdef int k, c, corner
    cdef double u, fl, w
    cdef const double* p
    strides[d - 1] = 1
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    for k in range(d):
        u = (x[k] - origin[k]) / spacing
        fl = floor(u)
        i = <int64_t>fl
        if i < 0 or i > shape[k] - 2:
            return 1
        frac[k] = u - fl
        base += i * strides[k]
    for c in range(nch):
        outv[c] = 0.0
    for corner in range(1 << d):
        w = 1.0
        off = base
        for k in range(d):
            if (corner >> k) & 1:
                w *= frac[k]
                off += strides[k]
            else:
                w *= 1.0 - frac[k]
        p = tab + off * nch
        for c in range(nch):
            outv[c] += w * p[c]
    return 0


cdef void _run(int64_t i0, int64_t i1, int d,
               const double* x0, const uint64_t* ids, uint64_t seed, double dt,
               int64_t max_steps, int64_t horizon_steps, double exc_thr,
               int kind, double ra, double rb, bint stop_exit, bint bridge, double sigma0,
               int64_t lat_steps, double lat_thr, int lat_mode, bint has_env,
               const double* tab, const double* origin, double spacing, const int64_t* shape,
               signed char* rule, double* t_stop, double* x_stop, double* xmax_stop,
               double* t_exit, double* x_exit, double* xmax_exit,
               double* tau1, double* tau2, double* ttil) noexcept nogil:
    cdef double x[MAXD]
    cdef double xn[MAXD]
    cdef double z[MAXD + 1]
    cdef double coef[MAXCH]
    cdef double sq = sqrt(dt)
    cdef double var0 = sigma0 * sigma0 * dt
    cdef double half_dt = 0.5 * dt if bridge else 0.0
    cdef int64_t p, k
    cdef int j, code
    cdef double r_old, r_new, exc, xmax, dc, du, v
    cdef bint exited
    cdef uint64_t sid
    for p in range(i0, i1):
        sid = ids[p]
        for j in range(d):
            x[j] = x0[p * d + j]
        xmax = 0.0
        exited = False
        code = -1
        k = 0
        tau1[p] = INFINITY
        tau2[p] = INFINITY
        ttil[p] = INFINITY
        t_exit[p] = INFINITY
        xmax_exit[p] = NAN
        for j in range(d):
            x_exit[p * d + j] = NAN
        r_new = _norm(x, d)
        if kind != 0 and not _inside(kind, r_new, ra, rb):
            exited = True
            t_exit[p] = 0.0
            xmax_exit[p] = 0.0
            for j in range(d):
                x_exit[p * d + j] = x[j]
            if stop_exit:
                code = RULE_EXIT
        if code < 0 and lat_steps > 0:
            dc = _dist_complement(kind, r_new, ra, rb)
            du = _dist_domain(kind, r_new, ra, rb)
            if dc <= lat_thr:
                tau1[p] = 0.0
                if lat_mode == 1:
                    code = RULE_TAU1
            if du >= lat_thr:
                tau2[p] = 0.0
                if lat_mode == 2:
                    code = RULE_TAU2
            if kind != 0 and not _inside(kind, r_new, ra, rb):
                ttil[p] = 0.0
                if lat_mode == 3:
                    code = RULE_TILDE
        while code < 0:
            if k >= max_steps:
                code = RULE_CAP
                break
            if has_env:
                if _interp(x, d, tab, origin, spacing, shape, 2 * d, coef) != 0:
                    code = RULE_COVERAGE
                    break
            _normals(seed, sid, <uint64_t>k, d, z)
            if has_env:
                for j in range(d):
                    xn[j] = x[j] + coef[j] * dt + coef[d + j] * sq * z[j]
            else:
                for j in range(d):
                    xn[j] = x[j] + sigma0 * sq * z[j]
            r_old = _norm(x, d)
            r_new = _norm(xn, d)
            k += 1
            exc = 0.0
            for j in range(d):
                v = xn[j] - x0[p * d + j]
                exc += v * v
            exc = sqrt(exc)
            if exc > xmax:
                xmax = exc
            if kind != 0 and not exited:
                if not _inside(kind, r_new, ra, rb):
                    exited = True
                elif bridge:
                    if _bridge_u(seed, sid, <uint64_t>(k - 1), d) < _cross_prob(kind, r_old, r_new, ra, rb, var0):
                        exited = True
                if exited:
                    # with the bridge test the crossing lies inside the step; use its midpoint
                    t_exit[p] = k * dt - half_dt
                    xmax_exit[p] = xmax
                    for j in range(d):
                        x_exit[p * d + j] = xn[j]
                    if stop_exit:
                        code = RULE_EXIT
            for j in range(d):
                x[j] = xn[j]
            if code >= 0:
                break
            if xmax >= exc_thr:
                code = RULE_EXCURSION
                break
            if horizon_steps > 0 and k >= horizon_steps:
                code = RULE_HORIZON
                break
            if lat_steps > 0 and k % lat_steps == 0:
                dc = _dist_complement(kind, r_new, ra, rb)
                du = _dist_domain(kind, r_new, ra, rb)
                if tau1[p] == INFINITY and dc <= lat_thr:
                    tau1[p] = k * dt
                    if lat_mode == 1:
                        code = RULE_TAU1
                if ttil[p] == INFINITY and kind != 0 and not _inside(kind, r_new, ra, rb):
                    ttil[p] = k * dt
                    if lat_mode == 3:
                        code = RULE_TILDE
                if tau2[p] == INFINITY and du >= lat_thr:
                    tau2[p] = k * dt
                    if lat_mode == 2:
                        code = RULE_TAU2
        rule[p] = code
        t_stop[p] = k * dt - (half_dt if code == RULE_EXIT and k > 0 else 0.0)
        xmax_stop[p] = xmax
        for j in range(d):
            x_stop[p * d + j] = x[j]


def run_chunk(spec, out, Py_ssize_t i0, Py_ssize_t i1):
    """Advance paths ``i0:i1`` of ``spec`` and write into the arrays of ``out`` (GIL released)."""
    cdef double[:, ::1] x0 = spec.x0
    cdef uint64_t[::1] ids = spec.path_ids
    cdef int d = x0.shape[1]
    if d > MAXD:
        raise ValueError("compiled kernel supports d <= 8")
    cdef double[::1] tab
    cdef double[::1] origin
    cdef int64_t[::1] shape
    cdef bint has_env = spec.table is not None
    cdef double spacing = 1.0
    cdef const double* tab_p = NULL
    cdef const double* org_p = NULL
    cdef const int64_t* shp_p = NULL
    if has_env:
        tab = spec.table.values.reshape(-1)
        origin = spec.table.origin
        shape = spec.table.shape_array
        spacing = spec.table.spacing
        tab_p = &tab[0]
        org_p = &origin[0]
        shp_p = &shape[0]
    cdef signed char[::1] rule = out.rule
    cdef double[::1] t_stop = out.t_stop
    cdef double[:, ::1] x_stop = out.x_stop
    cdef double[::1] xmax_stop = out.xmax_stop
    cdef double[::1] t_exit = out.t_exit
    cdef double[:, ::1] x_exit = out.x_exit
    cdef double[::1] xmax_exit = out.xmax_exit
    cdef double[::1] tau1 = out.tau1
    cdef double[::1] tau2 = out.tau2
    cdef double[::1] ttil = out.tau_tilde
    cdef uint64_t seed = spec.seed
    cdef double dt = spec.dt
    cdef int64_t max_steps = spec.max_steps
    cdef int64_t horizon_steps = spec.horizon_steps
    cdef double exc_thr = spec.excursion_threshold
    cdef int kind = spec.geom_kind
    cdef double ra = spec.r_a
    cdef double rb = spec.r_b
    cdef bint stop_exit = spec.stop_on_exit
    cdef bint bridge = spec.bridge
    cdef double sigma0 = spec.sigma0
    cdef int64_t lat_steps = spec.lattice_steps
    cdef double lat_thr = spec.lattice_threshold
    cdef int lat_mode = spec.lattice_mode
    if i1 <= i0:
        return
    with nogil:
        _run(i0, i1, d, &x0[0, 0], &ids[0], seed, dt, max_steps, horizon_steps, exc_thr,
             kind, ra, rb, stop_exit, bridge, sigma0, lat_steps, lat_thr, lat_mode, has_env,
             tab_p, org_p, spacing, shp_p,
             &rule[0], &t_stop[0], &x_stop[0, 0], &xmax_stop[0],
             &t_exit[0], &x_exit[0, 0], &xmax_exit[0], &tau1[0], &tau2[0], &ttil[0])
