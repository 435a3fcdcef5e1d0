"""Dormand-Prince 5(4) flow of the phase model, pure Python/numpy.

Reference implementation for filters of any order and the import-time
fallback for the compiled kernel in ``_kernel.pyx``.  Both share the exact
step-size controller, section bookkeeping and lock test so that results agree
to rounding.

The phase is carried as ``theta = theta_loc + wind * pi``; ``theta_loc`` is
rebased whenever it leaves ``[-4 pi, 4 pi)`` so long rotations keep full
precision.  Section levels are ``theta = section + j * pi``.
"""
import math

import numpy as np

REACHED_END = 0
CROSSED = 1
LOCKED = 2
BUDGET = 3
NONFINITE = 4
UNDERFLOW = 5

STOP_NONE = 0
STOP_ANY = 1
STOP_LEVEL = 2

PI = math.pi

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFE = 0.9
FAC_MIN = 0.2    # hnew >= FAC_MIN * h
FAC_MAX = 10.0   # hnew <= FAC_MAX * h
BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75


def _rhs(A, b, c, h, K, w, L, y):
    x = y[:-1]
    p = L * math.sin(2.0 * y[-1])
    out = np.empty_like(y)
    out[:-1] = A @ x + b * p
    out[-1] = w - K * (float(c @ x) + h * p)
    return out


def _err_norm(e, y0, y1, rtol, atol):
    # the phase is measured against pi, the period of the detector
    sk = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    sk[-1] = atol + rtol * PI
    return math.sqrt(float(np.mean((e / sk) ** 2)))


def _dense(rc, sig):
    s1 = 1.0 - sig
    return rc[0] + sig * (rc[1] + s1 * (rc[2] + sig * (rc[3] + s1 * rc[4])))


def _locate(rc, level):
    """First root of theta_dense(sig) = level on [0, 1] (Illinois)."""
    lo, hi = 0.0, 1.0
    glo = rc[0][-1] - level
    ghi = _dense(rc, 1.0)[-1] - level
    side = 0
    sig = 1.0
    for _ in range(200):
        sig = (lo * ghi - hi * glo) / (ghi - glo)
        if not lo < sig < hi:
            sig = 0.5 * (lo + hi)
        g = _dense(rc, sig)[-1] - level
        if abs(g) < 1e-13 or hi - lo < 1e-16:
            break
        if (g < 0.0) == (glo < 0.0):
            lo, glo = sig, g
            if side == -1:
                ghi *= 0.5
            side = -1
        else:
            hi, ghi = sig, g
            if side == 1:
                glo *= 0.5
            side = 1
    return sig


def _initial_step(A, b, c, h, K, w, L, y0, f0, rtol, atol, hmax):
    sk = atol + rtol * np.abs(y0)
    sk[-1] = atol + rtol * PI
    mag = np.abs(y0)
    mag[-1] = max(mag[-1], PI)
    d0 = math.sqrt(float(np.mean((mag / sk) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sk) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    y1 = y0 + h0 * f0
    f1 = _rhs(A, b, c, h, K, w, L, y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sk) ** 2))) / h0
    dm = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
    return min(100.0 * h0, h1, hmax)


def flow(A, b, c, h, K, w, L, y0, t_end, rtol, atol, max_step, h_init,
         section, stop, k_target, eq, eps_lock, delta_lock, lock_scale,
         max_steps, record):
    """Integrate from ``y0 = (x, theta)`` at t = 0.

    Returns ``(status, t, y, level, nsteps, nreject, ts, ys, hs, dense, events)``.
    ``level`` is the section index of the crossing that stopped the run (or
    the index of the final state).  ``ts``/``ys``/``hs``/``dense`` are ``None``
    unless ``record``; segment ``i`` starts at ``ts[i]`` with step ``hs[i]``
    and may be cut short at ``ts[i + 1]``.  ``events`` is a list of
    ``(t, y, level, direction)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    eq = np.asarray(eq, dtype=float).reshape(-1, len(y0))
    n1 = len(y0)

    y = np.array(y0, dtype=float)
    wind = 0
    t = 0.0
    f = _rhs(A, b, c, h, K, w, L, y)
    hmax = min(max_step, t_end)
    hstep = h_init if h_init > 0 else _initial_step(A, b, c, h, K, w, L, y, f, rtol, atol, hmax)
    facold = 1e-4
    reject = False
    nsteps = nrej = 0
    level = math.floor((y[-1] - section) / PI)

    ts = [0.0] if record else None
    ys = [y.copy()] if record else None
    dense = [] if record else None
    hs = [] if record else None
    events = []

    def glob(v):
        g = v.copy()
        g[-1] += wind * PI
        return g

    status = REACHED_END
    lock_on = eps_lock > 0.0 and len(eq) > 0
    while True:
        if nsteps >= max_steps:
            status = BUDGET
            break
        last = False
        if t + hstep >= t_end:
            hstep = t_end - t
            last = True
        if hstep < 1e-14 * max(1.0, abs(t)):
            status = UNDERFLOW
            break
        k1 = f
        k2 = _rhs(A, b, c, h, K, w, L, y + hstep * (A21 * k1))
        k3 = _rhs(A, b, c, h, K, w, L, y + hstep * (A31 * k1 + A32 * k2))
        k4 = _rhs(A, b, c, h, K, w, L, y + hstep * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = _rhs(A, b, c, h, K, w, L, y + hstep * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = _rhs(A, b, c, h, K, w, L,
                  y + hstep * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        y1 = y + hstep * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = _rhs(A, b, c, h, K, w, L, y1)
        nsteps += 1
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(k7))):
            status = NONFINITE
            break
        e = hstep * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        err = _err_norm(e, y, y1, rtol, atol)
        fac11 = err ** EXPO1
        fac = fac11 / facold ** BETA
        fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFE))
        hnew = hstep / fac

        lvl1 = wind + math.floor((y1[-1] - section) / PI)
        if err <= 1.0 and abs(lvl1 - level) >= 2:
            # one level per step keeps every crossing resolvable
            hstep *= 0.5
            reject = True
            nrej += 1
            continue

        if err > 1.0:
            hnew = hstep / min(1.0 / FAC_MIN, fac11 / SAFE)
            reject = True
            nrej += 1
            hstep = hnew
            continue

        facold = max(err, 1e-4)
        ydiff = y1 - y
        bspl = hstep * k1 - ydiff
        rc = (y, ydiff, bspl, ydiff - hstep * k7 - bspl,
              hstep * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7))

        if lvl1 != level:
            up = lvl1 > level
            crossed = level + 1 if up else level
            lev_loc = section + (crossed - wind) * PI
            sig = _locate(rc, lev_loc)
            yc = _dense(rc, sig)
            tc = t + sig * hstep
            if record:
                events.append((tc, glob(yc), crossed, 1 if up else -1))
            level = lvl1
            if up and (stop == STOP_ANY or (stop == STOP_LEVEL and crossed == k_target)):
                if record:
                    ts.append(tc)
                    ys.append(glob(yc))
                    hs.append(hstep)
                    dense.append(np.array([glob(rc[0]), rc[1], rc[2], rc[3], rc[4]]))
                t, y = tc, yc
                level = crossed
                status = CROSSED
                break

        if record:
            ts.append(t + hstep)
            ys.append(glob(y1))
            hs.append(hstep)
            dense.append(np.array([glob(rc[0]), rc[1], rc[2], rc[3], rc[4]]))

        t = t + hstep
        y = y1
        f = k7
        if abs(y[-1]) >= 4 * PI:
            m = math.floor(y[-1] / PI + 0.5)
            y = y.copy()
            y[-1] -= m * PI
            wind += m

        if lock_on and math.sqrt(float(f @ f)) < eps_lock * lock_scale:
            for q in eq:
                d = y[-1] + wind * PI - q[-1]
                d -= PI * math.floor(d / PI + 0.5)
                dist2 = float(np.sum((y[:-1] - q[:-1]) ** 2)) + d * d
                if dist2 < delta_lock * delta_lock:
                    status = LOCKED
                    break
            if status == LOCKED:
                break

        if last:
            status = REACHED_END
            break
        if abs(hnew) > hmax:
            hnew = hmax
        if reject:
            hnew = min(hnew, hstep)
        reject = False
        hstep = hnew

    yg = glob(y)
    if record:
        ts = np.array(ts)
        ys = np.array(ys)
        hs = np.array(hs)
        dense = np.array(dense).reshape(-1, 5, n1)
    return status, t, yg, level, nsteps, nrej, ts, ys, hs, dense, events
