"""Pure-Python closed-loop RK4 kernel.

Mirrors ``_kernel.pyx`` operation for operation so both backends agree to
rounding.  Works on plain lists; used when the compiled extension is missing.

State layout (n axes): ``[x1, x2, w, z1^, z2^, z3^]`` plus ``[s]`` for the
current loop, where ``w`` is the lagged input (lag model) or the motor
current (current loop) and ``s`` the PI integrator.
"""

import math

OK, DIVERGED, NAN_ABORT = 0, 1, 2


def _rows(a):
    return [list(map(float, r)) for r in a]


def integrate(spec, x0, t0, dt, nsteps, record_every):
    """Integrate ``nsteps`` RK4 steps; see ``kernel.KernelSpec`` for the fields.

    Returns ``(rec_t, rec_x, rec_v, rec_hu, ise, isc, sat_count, status, index, nrec)``
    with plain lists.
    """
    n = int(spec.n)
    dim = int(spec.dim)
    B = _rows(spec.B)
    Binv = _rows(spec.Binv)
    Tinv = list(map(float, spec.Tinv))
    K1, K2, K3 = (list(map(float, k)) for k in (spec.K1, spec.K2, spec.K3))
    Kp, Kd = list(map(float, spec.Kp)), list(map(float, spec.Kd))
    mode = int(spec.mode)
    reject = bool(spec.reject)
    ft1 = list(map(float, spec.h1_ft))
    h1_t = list(map(float, spec.h1_sched_t))
    h1_fc = _rows(spec.h1_sched_fc)
    ftq = list(map(float, spec.q_ft))
    q_t = list(map(float, spec.q_sched_t))
    q_fc = _rows(spec.q_sched_fc)
    qoff, qamp, qfreq = (list(map(float, a)) for a in (spec.q_off, spec.q_amp, spec.q_freq))
    ramp, rfreq = list(map(float, spec.ref_amp)), list(map(float, spec.ref_freq))
    loop = bool(spec.current_loop)
    kp, ki, ks, Um, Kt, tau, ff = (float(x) for x in spec.loop_params)
    thr2 = float(spec.div_threshold) ** 2

    n3, n4, n5, n6 = 3 * n, 4 * n, 5 * n, 6 * n
    sin, cos, tanh = math.sin, math.cos, math.tanh
    uact = [0.0] * n
    r = [0.0] * n
    xr0 = [0.0] * n

    def sched(ts, vals, t):
        j = 0
        m = len(ts)
        while j + 1 < m and ts[j + 1] <= t:
            j += 1
        return vals[j]

    def deriv(t, s, ds, v, hu, sat):
        fc1 = sched(h1_t, h1_fc, t)
        fcq = sched(q_t, q_fc, t)
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
            if mode == 0:
                h = 0.0
            elif mode == 1:
                h = fc1[i] * tanh(ft1[i] * xd1)
            else:
                h = fc1[i] * tanh(ft1[i] * z2)
            hu[i] = h
            ri = Kp[i] * (xd0 - z1) + Kd[i] * (xd1 - z2) - h + xd2
            if reject:
                ri = ri - s[n5 + i]
            r[i] = ri
        for i in range(n):
            acc = 0.0
            row = Binv[i]
            for j in range(n):
                acc += row[j] * r[j]
            v[i] = acc
        if loop:
            for i in range(n):
                cur = s[2 * n + i]
                idem = v[i] / Kt
                it = idem - cur
                pre = kp * it + s[n6 + i] + ff * idem
                if pre > Um:
                    out = Um
                elif pre < -Um:
                    out = -Um
                else:
                    out = pre
                sat[i] = 1 if out != pre else 0
                ds[2 * n + i] = (out - cur) / tau
                ds[n6 + i] = ki * (it - ks * (pre - out))
                uact[i] = Kt * cur
        else:
            for i in range(n):
                ua = s[2 * n + i]
                ds[2 * n + i] = Tinv[i] * (v[i] - ua)
                uact[i] = ua
        for i in range(n):
            acc = 0.0
            bv = 0.0
            row = B[i]
            for j in range(n):
                acc += row[j] * uact[j]
                bv += row[j] * v[j]
            x2 = s[n + i]
            dist = fc1[i] * tanh(ft1[i] * x2) + (fcq[i] * tanh(ftq[i] * x2) + qoff[i]
                                                 + qamp[i] * sin(qfreq[i] * t))
            ds[i] = x2
            ds[n + i] = acc + dist
            innov = s[i] - s[n3 + i]
            ds[n3 + i] = K1[i] * innov + s[n4 + i]
            ds[n4 + i] = K2[i] * innov + s[n5 + i] + hu[i] + bv
            ds[n5 + i] = K3[i] * innov

    s = list(map(float, x0))
    k1 = [0.0] * dim
    k2 = [0.0] * dim
    k3 = [0.0] * dim
    k4 = [0.0] * dim
    tmp = [0.0] * dim
    v = [0.0] * n
    hu = [0.0] * n
    vs = [0.0] * n
    hus = [0.0] * n
    sat = [0] * n
    sats = [0] * n
    ise = [0.0] * n
    isc = [0.0] * n
    e_prev = [0.0] * n
    c_prev = [0.0] * n
    sat_count = [0] * n
    rec_t, rec_x, rec_v, rec_hu = [], [], [], []
    status, index = OK, -1
    h2 = 0.5 * dt
    h6 = dt / 6.0
    rng = range(dim)

    for k in range(nsteps + 1):
        t = t0 + k * dt
        deriv(t, s, k1, v, hu, sat)
        nrm2 = 0.0
        for x in s:
            nrm2 += x * x
        if nrm2 != nrm2 or any(d != d for d in k1):
            status, index = NAN_ABORT, k
            break
        for i in range(n):
            e = xr0[i] - s[i]
            e2 = e * e
            c2 = v[i] * v[i]
            if k > 0:
                ise[i] += h2 * (e_prev[i] + e2)
                isc[i] += h2 * (c_prev[i] + c2)
            e_prev[i] = e2
            c_prev[i] = c2
            sat_count[i] += sat[i]
        if k % record_every == 0 or k == nsteps or nrm2 > thr2:
            rec_t.append(t)
            rec_x.append(list(s))
            rec_v.append(list(v))
            rec_hu.append(list(hu))
        if nrm2 > thr2:
            status, index = DIVERGED, k
            break
        if k == nsteps:
            break
        for i in rng:
            tmp[i] = s[i] + h2 * k1[i]
        deriv(t + h2, tmp, k2, vs, hus, sats)
        for i in rng:
            tmp[i] = s[i] + h2 * k2[i]
        deriv(t + h2, tmp, k3, vs, hus, sats)
        for i in rng:
            tmp[i] = s[i] + dt * k3[i]
        deriv(t + dt, tmp, k4, vs, hus, sats)
        for i in rng:
            s[i] = s[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    return rec_t, rec_x, rec_v, rec_hu, ise, isc, sat_count, status, index, len(rec_t)
