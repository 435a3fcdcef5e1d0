# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince flow for first-order loop filters.

Same contract and arithmetic as ``phaselock._flow.flow`` specialised to a
scalar filter state, i.e. the two-dimensional cylinder ``(x, theta)``.
"""
from libc.math cimport sin, sqrt, floor, fabs, pow, isfinite, M_PI

import numpy as np

from phaselock._flow import (A21, A31, A32, A41, A42, A43, A51, A52, A53, A54,
                             A61, A62, A63, A64, A65, A71, A73, A74, A75, A76,
                             E1, E3, E4, E5, E6, E7, D1, D3, D4, D5, D6, D7,
                             SAFE, FAC_MIN, FAC_MAX, BETA, EXPO1)

cdef double cA21 = A21, cA31 = A31, cA32 = A32, cA41 = A41, cA42 = A42, cA43 = A43
cdef double cA51 = A51, cA52 = A52, cA53 = A53, cA54 = A54
cdef double cA61 = A61, cA62 = A62, cA63 = A63, cA64 = A64, cA65 = A65
cdef double cA71 = A71, cA73 = A73, cA74 = A74, cA75 = A75, cA76 = A76
cdef double cE1 = E1, cE3 = E3, cE4 = E4, cE5 = E5, cE6 = E6, cE7 = E7
cdef double cD1 = D1, cD3 = D3, cD4 = D4, cD5 = D5, cD6 = D6, cD7 = D7
cdef double cSAFE = SAFE, cFAC_MIN = FAC_MIN, cFAC_MAX = FAC_MAX, cBETA = BETA, cEXPO1 = EXPO1

DEF REACHED_END = 0
DEF CROSSED = 1
DEF LOCKED = 2
DEF BUDGET = 3
DEF NONFINITE = 4
DEF UNDERFLOW = 5
DEF STOP_ANY = 1
DEF STOP_LEVEL = 2


cdef struct Loop:
    double A, b, c, h, K, w, L


cdef inline void rhs(Loop* m, double x, double th, double* dx, double* dth) noexcept nogil:
    cdef double p = m.L * sin(2.0 * th)
    dx[0] = m.A * x + m.b * p
    dth[0] = m.w - m.K * (m.c * x + m.h * p)


cdef inline double dense_th(double* rc, double sig) noexcept nogil:
    # rc holds (r0x, r0t, r1x, r1t, ... r4t)
    cdef double s1 = 1.0 - sig
    return rc[1] + sig * (rc[3] + s1 * (rc[5] + sig * (rc[7] + s1 * rc[9])))


cdef inline double dense_x(double* rc, double sig) noexcept nogil:
    cdef double s1 = 1.0 - sig
    return rc[0] + sig * (rc[2] + s1 * (rc[4] + sig * (rc[6] + s1 * rc[8])))


cdef double locate(double* rc, double level) noexcept nogil:
    cdef double lo = 0.0, hi = 1.0
    cdef double glo = rc[1] - level
    cdef double ghi = dense_th(rc, 1.0) - level
    cdef int side = 0, it
    cdef double sig = 1.0, g
    for it in range(200):
        sig = (lo * ghi - hi * glo) / (ghi - glo)
        if not (lo < sig < hi):
            sig = 0.5 * (lo + hi)
        g = dense_th(rc, sig) - level
        if fabs(g) < 1e-13 or hi - lo < 1e-16:
            break
        if (g < 0.0) == (glo < 0.0):
            lo = sig
            glo = g
            if side == -1:
                ghi *= 0.5
            side = -1
        else:
            hi = sig
            ghi = g
            if side == 1:
                glo *= 0.5
            side = 1
    return sig


cdef double initial_step(Loop* m, double x, double th, double fx, double ft,
                         double rtol, double atol, double hmax) noexcept nogil:
    cdef double skx = atol + rtol * fabs(x)
    cdef double skt = atol + rtol * M_PI
    cdef double d0 = sqrt(((fabs(x) / skx) ** 2 + (max(fabs(th), M_PI) / skt) ** 2) / 2.0)
    cdef double d1 = sqrt(((fx / skx) ** 2 + (ft / skt) ** 2) / 2.0)
    cdef double h0, h1, d2, dm, gx, gt
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, hmax)
    rhs(m, x + h0 * fx, th + h0 * ft, &gx, &gt)
    d2 = sqrt((((gx - fx) / skx) ** 2 + ((gt - ft) / skt) ** 2) / 2.0) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / dm, 0.2)
    return min(100.0 * h0, min(h1, hmax))


def flow(A, b, c, double h, double K, double w, double L, y0, double t_end,
         double rtol, double atol, double max_step, double h_init,
         double section, int stop, long k_target, eq, double eps_lock,
         double delta_lock, double lock_scale, long max_steps, bint record):
    cdef Loop m
    m.A = float(np.asarray(A, dtype=float).reshape(-1)[0])
    m.b = float(np.asarray(b, dtype=float).reshape(-1)[0])
    m.c = float(np.asarray(c, dtype=float).reshape(-1)[0])
    m.h = h
    m.K = K
    m.w = w
    m.L = L
    cdef double[:, ::1] eqv = np.ascontiguousarray(np.asarray(eq, dtype=float).reshape(-1, 2))
    cdef Py_ssize_t neq = eqv.shape[0], q

    cdef double x = float(y0[0]), th = float(y0[1])
    cdef long wind = 0
    cdef double t = 0.0
    cdef double fx, ft
    rhs(&m, x, th, &fx, &ft)
    cdef double hmax = min(max_step, t_end)
    cdef double hstep = h_init if h_init > 0 else initial_step(&m, x, th, fx, ft, rtol, atol, hmax)
    cdef double facold = 1e-4
    cdef bint reject = False, last, lock_on = eps_lock > 0.0 and neq > 0, up
    cdef long nsteps = 0, nrej = 0
    cdef long level = <long>floor((th - section) / M_PI), lvl1, crossed, mwind
    cdef int status = REACHED_END
    cdef double k1x, k1t, k2x, k2t, k3x, k3t, k4x, k4t, k5x, k5t, k6x, k6t, k7x, k7t
    cdef double x1, th1, ex, et, skx, skt, err, fac11, fac, hnew, d, dist2
    cdef double rc[10]
    cdef double sig, lev_loc, xc, tc_th, tc

    ts = [0.0] if record else None
    ys = [(x, th)] if record else None
    hs = [] if record else None
    dense = [] if record else None
    events = []

    while True:
        if nsteps >= max_steps:
            status = BUDGET
            break
        last = False
        if t + hstep >= t_end:
            hstep = t_end - t
            last = True
        if hstep < 1e-14 * max(1.0, fabs(t)):
            status = UNDERFLOW
            break
        k1x = fx
        k1t = ft
        rhs(&m, x + hstep * (cA21 * k1x), th + hstep * (cA21 * k1t), &k2x, &k2t)
        rhs(&m, x + hstep * (cA31 * k1x + cA32 * k2x), th + hstep * (cA31 * k1t + cA32 * k2t),
            &k3x, &k3t)
        rhs(&m, x + hstep * (cA41 * k1x + cA42 * k2x + cA43 * k3x),
            th + hstep * (cA41 * k1t + cA42 * k2t + cA43 * k3t), &k4x, &k4t)
        rhs(&m, x + hstep * (cA51 * k1x + cA52 * k2x + cA53 * k3x + cA54 * k4x),
            th + hstep * (cA51 * k1t + cA52 * k2t + cA53 * k3t + cA54 * k4t), &k5x, &k5t)
        rhs(&m, x + hstep * (cA61 * k1x + cA62 * k2x + cA63 * k3x + cA64 * k4x + cA65 * k5x),
            th + hstep * (cA61 * k1t + cA62 * k2t + cA63 * k3t + cA64 * k4t + cA65 * k5t),
            &k6x, &k6t)
        x1 = x + hstep * (cA71 * k1x + cA73 * k3x + cA74 * k4x + cA75 * k5x + cA76 * k6x)
        th1 = th + hstep * (cA71 * k1t + cA73 * k3t + cA74 * k4t + cA75 * k5t + cA76 * k6t)
        rhs(&m, x1, th1, &k7x, &k7t)
        nsteps += 1
        if not (isfinite(x1) and isfinite(th1) and isfinite(k7x) and isfinite(k7t)):
            status = NONFINITE
            break
        ex = hstep * (cE1 * k1x + cE3 * k3x + cE4 * k4x + cE5 * k5x + cE6 * k6x + cE7 * k7x)
        et = hstep * (cE1 * k1t + cE3 * k3t + cE4 * k4t + cE5 * k5t + cE6 * k6t + cE7 * k7t)
        skx = atol + rtol * max(fabs(x), fabs(x1))
        skt = atol + rtol * M_PI
        err = sqrt(((ex / skx) ** 2 + (et / skt) ** 2) / 2.0)
        fac11 = pow(err, cEXPO1)
        fac = fac11 / pow(facold, cBETA)
        fac = max(1.0 / cFAC_MAX, min(1.0 / cFAC_MIN, fac / cSAFE))
        hnew = hstep / fac

        lvl1 = wind + <long>floor((th1 - section) / M_PI)
        if err <= 1.0 and (lvl1 - level >= 2 or level - lvl1 >= 2):
            hstep *= 0.5
            reject = True
            nrej += 1
            continue

        if err > 1.0:
            hnew = hstep / min(1.0 / cFAC_MIN, fac11 / cSAFE)
            reject = True
            nrej += 1
            hstep = hnew
            continue

        facold = max(err, 1e-4)
        rc[0] = x
        rc[1] = th
        rc[2] = x1 - x
        rc[3] = th1 - th
        rc[4] = hstep * k1x - rc[2]
        rc[5] = hstep * k1t - rc[3]
        rc[6] = rc[2] - hstep * k7x - rc[4]
        rc[7] = rc[3] - hstep * k7t - rc[5]
        rc[8] = hstep * (cD1 * k1x + cD3 * k3x + cD4 * k4x + cD5 * k5x + cD6 * k6x + cD7 * k7x)
        rc[9] = hstep * (cD1 * k1t + cD3 * k3t + cD4 * k4t + cD5 * k5t + cD6 * k6t + cD7 * k7t)

        if lvl1 != level:
            up = lvl1 > level
            crossed = level + 1 if up else level
            lev_loc = section + (crossed - wind) * M_PI
            sig = locate(rc, lev_loc)
            xc = dense_x(rc, sig)
            tc_th = dense_th(rc, sig)
            tc = t + sig * hstep
            if record:
                events.append((tc, np.array([xc, tc_th + wind * M_PI]), crossed, 1 if up else -1))
            level = lvl1
            if up and (stop == STOP_ANY or (stop == STOP_LEVEL and crossed == k_target)):
                if record:
                    ts.append(tc)
                    ys.append((xc, tc_th + wind * M_PI))
                    hs.append(hstep)
                    dense.append(_rc_rows(rc, wind))
                t = tc
                x = xc
                th = tc_th
                level = crossed
                status = CROSSED
                break

        if record:
            ts.append(t + hstep)
            ys.append((x1, th1 + wind * M_PI))
            hs.append(hstep)
            dense.append(_rc_rows(rc, wind))

        t = t + hstep
        x = x1
        th = th1
        fx = k7x
        ft = k7t
        if fabs(th) >= 4 * M_PI:
            mwind = <long>floor(th / M_PI + 0.5)
            th -= mwind * M_PI
            wind += mwind

        if lock_on and sqrt(fx * fx + ft * ft) < eps_lock * lock_scale:
            for q in range(neq):
                d = th + wind * M_PI - eqv[q, 1]
                d -= M_PI * floor(d / M_PI + 0.5)
                dist2 = (x - eqv[q, 0]) ** 2 + d * d
                if dist2 < delta_lock * delta_lock:
                    status = LOCKED
                    break
            if status == LOCKED:
                break

        if last:
            status = REACHED_END
            break
        if fabs(hnew) > hmax:
            hnew = hmax
        if reject:
            hnew = min(hnew, hstep)
        reject = False
        hstep = hnew

    yg = np.array([x, th + wind * M_PI])
    if record:
        ts = np.array(ts)
        ys = np.array(ys)
        hs = np.array(hs)
        dense = np.array(dense).reshape(-1, 5, 2)
    return status, t, yg, level, nsteps, nrej, ts, ys, hs, dense, events


cdef object _rc_rows(double* rc, long wind):
    return ((rc[0], rc[1] + wind * M_PI), (rc[2], rc[3]), (rc[4], rc[5]),
            (rc[6], rc[7]), (rc[8], rc[9]))
