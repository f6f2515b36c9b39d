# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop RK4 kernel; same algorithm as ``_kernel_py``."""

import numpy as np

from libc.math cimport sin, cos, tanh, isnan


cdef struct Params:
    int n
    int mode
    int reject
    int loop
    double kp, ki, ks, Um, Kt, tau, ff


cdef inline int _sched(const double[::1] ts, double t) noexcept nogil:
    cdef int j = 0
    cdef int m = ts.shape[0]
    while j + 1 < m and ts[j + 1] <= t:
        j += 1
    return j


cdef void _deriv(Params* p, double t, double* s, double* ds, double* v, double* hu, int* sat,
                 double* uact, double* r, double* xr0,
                 const double[:, ::1] B, const double[:, ::1] Binv, const double[::1] Tinv,
                 const double[::1] K1, const double[::1] K2, const double[::1] K3,
                 const double[::1] Kp, const double[::1] Kd,
                 const double[::1] ft1, const double[::1] h1_t, const double[:, ::1] h1_fc,
                 const double[::1] ftq, const double[::1] q_t, const double[:, ::1] q_fc,
                 const double[::1] qoff, const double[::1] qamp, const double[::1] qfreq,
                 const double[::1] ramp, const double[::1] rfreq) noexcept nogil:
    cdef int n = p.n
    cdef int n3 = 3 * n, n4 = 4 * n, n5 = 5 * n, n6 = 6 * n
    cdef int i, j
    cdef int j1 = _sched(h1_t, t)
    cdef int jq = _sched(q_t, t)
    cdef double a, w, sw, cw, xd0, xd1, xd2, z1, z2, h, ri, acc, bv
    cdef double cur, idem, it, pre, out, ua, x2, dist, innov
    for i in range(n):
        a = ramp[i]
        w = rfreq[i]
        sw = sin(w * t)
        cw = cos(w * t)
        xd0 = a * sw
        xd1 = a * w * cw
        xd2 = -a * w * w * sw
        xr0[i] = xd0
        z1 = s[n3 + i]
        z2 = s[n4 + i]
        if p.mode == 0:
            h = 0.0
        elif p.mode == 1:
            h = h1_fc[j1, i] * tanh(ft1[i] * xd1)
        else:
            h = h1_fc[j1, i] * tanh(ft1[i] * z2)
        hu[i] = h
        ri = Kp[i] * (xd0 - z1) + Kd[i] * (xd1 - z2) - h + xd2
        if p.reject:
            ri = ri - s[n5 + i]
        r[i] = ri
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Binv[i, j] * r[j]
        v[i] = acc
    if p.loop:
        for i in range(n):
            cur = s[2 * n + i]
            idem = v[i] / p.Kt
            it = idem - cur
            pre = p.kp * it + s[n6 + i] + p.ff * idem
            if pre > p.Um:
                out = p.Um
            elif pre < -p.Um:
                out = -p.Um
            else:
                out = pre
            sat[i] = 1 if out != pre else 0
            ds[2 * n + i] = (out - cur) / p.tau
            ds[n6 + i] = p.ki * (it - p.ks * (pre - out))
            uact[i] = p.Kt * cur
    else:
        for i in range(n):
            ua = s[2 * n + i]
            ds[2 * n + i] = Tinv[i] * (v[i] - ua)
            uact[i] = ua
    for i in range(n):
        acc = 0.0
        bv = 0.0
        for j in range(n):
            acc += B[i, j] * uact[j]
            bv += B[i, j] * v[j]
        x2 = s[n + i]
        dist = h1_fc[j1, i] * tanh(ft1[i] * x2) + (q_fc[jq, i] * tanh(ftq[i] * x2) + qoff[i]
                                                    + qamp[i] * sin(qfreq[i] * t))
        ds[i] = x2
        ds[n + i] = acc + dist
        innov = s[i] - s[n3 + i]
        ds[n3 + i] = K1[i] * innov + s[n4 + i]
        ds[n4 + i] = K2[i] * innov + s[n5 + i] + hu[i] + bv
        ds[n5 + i] = K3[i] * innov


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def integrate(spec, x0, double t0, double dt, long nsteps, long record_every):
    """Compiled counterpart of ``_kernel_py.integrate`` (returns numpy arrays)."""
    cdef Params p
    p.n = int(spec.n)
    p.mode = int(spec.mode)
    p.reject = 1 if spec.reject else 0
    p.loop = 1 if spec.current_loop else 0
    lp = [float(x) for x in spec.loop_params]
    p.kp, p.ki, p.ks, p.Um, p.Kt, p.tau, p.ff = lp
    cdef int n = p.n
    cdef int dim = int(spec.dim)
    cdef double thr2 = float(spec.div_threshold) ** 2

    cdef const double[:, ::1] B = _c(spec.B)
    cdef const double[:, ::1] Binv = _c(spec.Binv)
    cdef const double[::1] Tinv = _c(spec.Tinv)
    cdef const double[::1] K1 = _c(spec.K1)
    cdef const double[::1] K2 = _c(spec.K2)
    cdef const double[::1] K3 = _c(spec.K3)
    cdef const double[::1] Kp = _c(spec.Kp)
    cdef const double[::1] Kd = _c(spec.Kd)
    cdef const double[::1] ft1 = _c(spec.h1_ft)
    cdef const double[::1] h1_t = _c(spec.h1_sched_t)
    cdef const double[:, ::1] h1_fc = _c(spec.h1_sched_fc)
    cdef const double[::1] ftq = _c(spec.q_ft)
    cdef const double[::1] q_t = _c(spec.q_sched_t)
    cdef const double[:, ::1] q_fc = _c(spec.q_sched_fc)
    cdef const double[::1] qoff = _c(spec.q_off)
    cdef const double[::1] qamp = _c(spec.q_amp)
    cdef const double[::1] qfreq = _c(spec.q_freq)
    cdef const double[::1] ramp = _c(spec.ref_amp)
    cdef const double[::1] rfreq = _c(spec.ref_freq)

    cdef long R = nsteps // record_every + 2
    rec_t_a = np.zeros(R)
    rec_x_a = np.zeros((R, dim))
    rec_v_a = np.zeros((R, n))
    rec_hu_a = np.zeros((R, n))
    cdef double[::1] rec_t = rec_t_a
    cdef double[:, ::1] rec_x = rec_x_a
    cdef double[:, ::1] rec_v = rec_v_a
    cdef double[:, ::1] rec_hu = rec_hu_a

    work_a = np.zeros(6 * dim + 7 * n)
    cdef double[::1] work = work_a
    s_a = _c(np.array(x0, dtype=np.float64).copy())
    cdef double[::1] s = s_a
    ise_a = np.zeros(n)
    isc_a = np.zeros(n)
    cdef double[::1] ise = ise_a
    cdef double[::1] isc = isc_a
    sat_a = np.zeros(3 * n, dtype=np.intc)
    cdef int[::1] satbuf = sat_a
    cnt_a = np.zeros(n, dtype=np.int64)
    cdef long long[::1] sat_count = cnt_a

    cdef double* k1 = &work[0]
    cdef double* k2 = &work[dim]
    cdef double* k3 = &work[2 * dim]
    cdef double* k4 = &work[3 * dim]
    cdef double* tmp = &work[4 * dim]
    cdef double* v = &work[6 * dim]
    cdef double* hu = &work[6 * dim + n]
    cdef double* vs = &work[6 * dim + 2 * n]
    cdef double* hus = &work[6 * dim + 3 * n]
    cdef double* uact = &work[6 * dim + 4 * n]
    cdef double* r = &work[6 * dim + 5 * n]
    cdef double* xr0 = &work[6 * dim + 6 * n]
    cdef double* ps = &s[0]
    cdef int* sat = &satbuf[0]
    cdef int* sats = &satbuf[n]
    cdef double* e_prev = &work[5 * dim]
    cdef double* c_prev = &work[5 * dim + n]

    cdef long k
    cdef long nrec = 0
    cdef int status = 0
    cdef long index = -1
    cdef int i, bad
    cdef double t, nrm2, e, e2, c2
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0

    with nogil:
        for k in range(nsteps + 1):
            t = t0 + k * dt
            _deriv(&p, t, ps, k1, v, hu, sat, uact, r, xr0, B, Binv, Tinv, K1, K2, K3, Kp, Kd,
                   ft1, h1_t, h1_fc, ftq, q_t, q_fc, qoff, qamp, qfreq, ramp, rfreq)
            nrm2 = 0.0
            for i in range(dim):
                nrm2 += ps[i] * ps[i]
            bad = 1 if isnan(nrm2) else 0
            for i in range(dim):
                if isnan(k1[i]):
                    bad = 1
            if bad:
                status = 2
                index = k
                break
            for i in range(n):
                e = xr0[i] - ps[i]
                e2 = e * e
                c2 = v[i] * v[i]
                if k > 0:
                    ise[i] += h2 * (e_prev[i] + e2)
                    isc[i] += h2 * (c_prev[i] + c2)
                e_prev[i] = e2
                c_prev[i] = c2
                sat_count[i] += sat[i]
            if k % record_every == 0 or k == nsteps or nrm2 > thr2:
                rec_t[nrec] = t
                for i in range(dim):
                    rec_x[nrec, i] = ps[i]
                for i in range(n):
                    rec_v[nrec, i] = v[i]
                    rec_hu[nrec, i] = hu[i]
                nrec += 1
            if nrm2 > thr2:
                status = 1
                index = k
                break
            if k == nsteps:
                break
            for i in range(dim):
                tmp[i] = ps[i] + h2 * k1[i]
            _deriv(&p, t + h2, tmp, k2, vs, hus, sats, uact, r, xr0, B, Binv, Tinv, K1, K2, K3, Kp, Kd,
                   ft1, h1_t, h1_fc, ftq, q_t, q_fc, qoff, qamp, qfreq, ramp, rfreq)
            for i in range(dim):
                tmp[i] = ps[i] + h2 * k2[i]
            _deriv(&p, t + h2, tmp, k3, vs, hus, sats, uact, r, xr0, B, Binv, Tinv, K1, K2, K3, Kp, Kd,
                   ft1, h1_t, h1_fc, ftq, q_t, q_fc, qoff, qamp, qfreq, ramp, rfreq)
            for i in range(dim):
                tmp[i] = ps[i] + dt * k3[i]
            _deriv(&p, t + dt, tmp, k4, vs, hus, sats, uact, r, xr0, B, Binv, Tinv, K1, K2, K3, Kp, Kd,
                   ft1, h1_t, h1_fc, ftq, q_t, q_fc, qoff, qamp, qfreq, ramp, rfreq)
            for i in range(dim):
                ps[i] = ps[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    return (rec_t_a[:nrec], rec_x_a[:nrec], rec_v_a[:nrec], rec_hu_a[:nrec], ise_a, isc_a,
            cnt_a, status, index, nrec)
