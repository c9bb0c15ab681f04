"""Fixed-step trapezoidal integrator over a stretch of samples (numba).

Linear elements become Norton companions ``i = g*(v_p - v_q) - J`` whose
conductance matrix is inverted once per step size; lossless lines use the
method of characteristics with integer sample delays. Diode junctions are the
only nonlinearity: the linear network is reduced onto the junction voltages
and a small dense Newton solve runs per step.

Branch type codes: 0 resistor, 1 capacitor, 2 inductor, 3 source,
4 line end, 5 stub.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EXP_CLAMP = 80.0
FC = 0.5


@njit(cache=True)
def _expl(x):
    if x > EXP_CLAMP:
        return math.exp(EXP_CLAMP) * (1.0 + x - EXP_CLAMP) - 1.0
    return math.expm1(x)


@njit(cache=True)
def _dexpl(x):
    return math.exp(min(x, EXP_CLAMP))


@njit(cache=True)
def junction_eval(v, i_s, alpha, i_bv, b_v):
    """Static current and conductance of one junction."""
    xf = alpha * v
    xb = -alpha * (v + b_v)
    i = i_s * _expl(xf) - i_bv * (_expl(xb) - math.expm1(-alpha * b_v))
    g = alpha * (i_s * _dexpl(xf) + i_bv * _dexpl(xb))
    return i, g


@njit(cache=True)
def charge_eval(v, cj0, vj):
    """Depletion charge and capacitance (grading 1/2, SPICE forward knee)."""
    if cj0 == 0.0:
        return 0.0, 0.0
    knee = FC * vj
    if v <= knee:
        s = math.sqrt(1.0 - v / vj)
        return 2.0 * cj0 * vj * (1.0 - s), cj0 / s
    f2 = (1.0 - FC) ** 1.5
    q0 = 2.0 * cj0 * vj * (1.0 - math.sqrt(1.0 - FC))
    a = 1.0 - 1.5 * FC
    q = q0 + cj0 / f2 * (a * (v - knee) + 0.25 / vj * (v * v - knee * knee))
    c = cj0 / f2 * (a + 0.5 * v / vj)
    return q, c


@njit(cache=True)
def _limit(vnew, vold, vt, vcrit):
    # SPICE pnjlim
    if vnew > vcrit and abs(vnew - vold) > 2.0 * vt:
        if vold > 0.0:
            arg = 1.0 + (vnew - vold) / vt
            if arg > 0.0:
                return vold + vt * math.log(arg), True
            return vcrit, True
        return vt * math.log(vnew / vt), True
    return vnew, False


@njit(cache=True)
def _solve_inplace(A, b, m):
    """Solve A x = b for the leading m x m block, overwriting b with x."""
    for col in range(m):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, m):
            if abs(A[r, col]) > best:
                best = abs(A[r, col])
                piv = r
        if best == 0.0:
            return False
        if piv != col:
            for c in range(m):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, m):
            fac = A[r, col] * inv
            if fac != 0.0:
                for c in range(col + 1, m):
                    A[r, c] -= fac * A[col, c]
                b[r] -= fac * b[col]
    for r in range(m - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, m):
            acc -= A[r, c] * b[c]
        b[r] = acc / A[r, r]
    return True


@njit(cache=True)
def _hist(buf, head, lag, f):
    """u(t_prev + f*dt - lag*dt) with ``buf[head-1]`` holding u(t_prev)."""
    L = buf.shape[0]
    hi = buf[(head - lag) % L]
    if f == 1.0:
        return hi
    return (1.0 - f) * buf[(head - lag - 1) % L] + f * hi


@njit(cache=True)
def _step(lev, f, t, hs, n, m,
          Minv, MinvP, Zred, bg, bp, bq, btype, baux,
          cap_v, cap_i, ind_v, ind_i,
          amp, omega, phase,
          tl_buf, tl_head, tl_d, tl_k,
          st_buf, st_head, st_d, st_sign,
          j_a, j_c, j_is, j_alpha, j_ibv, j_bv, j_cj0, j_vj, j_vcrit, j_vcrit_b,
          j_v, j_q, j_ic,
          v, J, inl, work, jwork, max_newton, vtol):
    """One implicit step of size ``hs[lev]`` ending at time ``t``.

    ``f`` is where the step ends as a fraction of a full sample, used to
    interpolate line history while sub-stepping. State is committed only on
    success; returns False when Newton fails.
    """
    nb = bp.shape[0]
    rhs = work[0]
    voc = work[1]
    for i in range(n + 1):
        rhs[i] = 0.0
    for b in range(nb):
        typ = btype[b]
        a = baux[b]
        g = bg[lev, b]
        jb = 0.0
        if typ == 1:
            jb = g * cap_v[a] + cap_i[a]
        elif typ == 2:
            jb = -(ind_i[a] + g * ind_v[a])
        elif typ == 3:
            e = 0.0
            for k in range(amp.shape[1]):
                e += amp[a, k] * math.cos(omega[a, k] * t + phase[a, k])
            jb = g * e
        elif typ == 4:
            line = a // 2
            other = 1 - a % 2
            jb = tl_k[line] * _hist(tl_buf[line, other], tl_head[line], tl_d[line], f)
        elif typ == 5:
            jb = st_sign[a] * _hist(st_buf[a], st_head[a], 2 * st_d[a], f)
        J[b] = jb
        rhs[bp[b]] += jb
        rhs[bq[b]] -= jb
    Mi = Minv[lev]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Mi[i, j] * rhs[j]
        voc[i] = acc
    hinv2 = 2.0 / hs[lev]
    if m > 0:
        vj_oc = work[2]
        x = work[3]
        ival = work[4]
        gval = work[5]
        dx = work[6]
        Jm = jwork
        for k in range(m):
            va = voc[j_a[k]] if j_a[k] < n else 0.0
            vc = voc[j_c[k]] if j_c[k] < n else 0.0
            vj_oc[k] = va - vc
            x[k] = j_v[k]
        Z = Zred[lev]
        ok = False
        for _ in range(max_newton):
            for k in range(m):
                i_s, g_s = junction_eval(x[k], j_is[k], j_alpha[k], j_ibv[k], j_bv[k])
                q, c = charge_eval(x[k], j_cj0[k], j_vj[k])
                ival[k] = i_s + hinv2 * (q - j_q[k]) - j_ic[k]
                gval[k] = g_s + hinv2 * c
            for r in range(m):
                acc = x[r] - vj_oc[r]
                for c2 in range(m):
                    acc += Z[r, c2] * ival[c2]
                    Jm[r, c2] = Z[r, c2] * gval[c2]
                Jm[r, r] += 1.0
                dx[r] = -acc
            if not _solve_inplace(Jm, dx, m):
                return False
            conv = True
            for k in range(m):
                vt = 1.0 / j_alpha[k]
                trial = x[k] + dx[k]
                lim, hit = _limit(trial, x[k], vt, j_vcrit[k])
                if not hit:
                    # mirrored limiting around the breakdown knee
                    w, hit = _limit(-(trial + j_bv[k]), -(x[k] + j_bv[k]), vt, j_vcrit_b[k])
                    if hit:
                        lim = -w - j_bv[k]
                if hit or abs(dx[k]) > vtol + 1e-9 * abs(x[k]):
                    conv = False
                x[k] = lim
            if conv:
                ok = True
                break
        if not ok:
            return False
        for k in range(m):
            i_s, _g = junction_eval(x[k], j_is[k], j_alpha[k], j_ibv[k], j_bv[k])
            q, _c = charge_eval(x[k], j_cj0[k], j_vj[k])
            ic = hinv2 * (q - j_q[k]) - j_ic[k]
            inl[k] = i_s + ic
            j_v[k] = x[k]
            j_q[k] = q
            j_ic[k] = ic
        MP = MinvP[lev]
        for i in range(n):
            acc = 0.0
            for k in range(m):
                acc += MP[i, k] * inl[k]
            voc[i] -= acc
    for i in range(n):
        v[i] = voc[i]
    v[n] = 0.0
    for b in range(nb):
        typ = btype[b]
        if typ == 1 or typ == 2:
            a = baux[b]
            vb = v[bp[b]] - v[bq[b]]
            i_new = bg[lev, b] * vb - J[b]
            if typ == 1:
                cap_v[a] = vb
                cap_i[a] = i_new
            else:
                ind_v[a] = vb
                ind_i[a] = i_new
    return True


@njit(cache=True)
def run(nsteps, k0, N, dt, hs, n, m,
        Minv, MinvP, Zred, bg, bp, bq, btype, baux,
        cap_v, cap_i, ind_v, ind_i,
        amp, omega, phase,
        tl_buf, tl_head, tl_d, tl_g, tl_k,
        st_buf, st_head, st_d, st_sign, st_g,
        j_a, j_c, j_is, j_alpha, j_ibv, j_bv, j_cj0, j_vj, j_vcrit, j_vcrit_b,
        j_v, j_q, j_ic,
        v, max_newton, vtol,
        record, rec_v, rec_b, rec_i, acc_b, acc_j, rec_j):
    """Advance ``nsteps`` full samples starting after global sample ``k0``.

    Returns -1 on success or the index of the step that failed even at the
    finest sub-step level. When ``record`` is set, node voltages and the
    listed branch currents are stored per sample and v*i products are
    accumulated for the energy balance.
    """
    nb = bp.shape[0]
    nlev = hs.shape[0]
    J = np.zeros(nb)
    inl = np.zeros(max(m, 1))
    work = np.zeros((7, max(n + 1, m, 1)))
    jwork = np.zeros((max(m, 1), max(m, 1)))
    for s in range(nsteps):
        kk = k0 + s
        t0 = (kk % N) * dt
        lev_used = 0
        if not _step(0, 1.0, t0 + dt, hs, n, m, Minv, MinvP, Zred, bg, bp, bq, btype, baux,
                     cap_v, cap_i, ind_v, ind_i, amp, omega, phase,
                     tl_buf, tl_head, tl_d, tl_k, st_buf, st_head, st_d, st_sign,
                     j_a, j_c, j_is, j_alpha, j_ibv, j_bv, j_cj0, j_vj, j_vcrit, j_vcrit_b,
                     j_v, j_q, j_ic, v, J, inl, work, jwork, max_newton, vtol):
            done = False
            for lev in range(1, nlev):
                snap = (cap_v.copy(), cap_i.copy(), ind_v.copy(), ind_i.copy(),
                        j_v.copy(), j_q.copy(), j_ic.copy())
                nsub = 1 << lev
                good = True
                for ss in range(1, nsub + 1):
                    f = ss / nsub
                    if not _step(lev, f, t0 + f * dt, hs, n, m, Minv, MinvP, Zred, bg, bp, bq,
                                 btype, baux, cap_v, cap_i, ind_v, ind_i, amp, omega, phase,
                                 tl_buf, tl_head, tl_d, tl_k, st_buf, st_head, st_d, st_sign,
                                 j_a, j_c, j_is, j_alpha, j_ibv, j_bv, j_cj0, j_vj, j_vcrit,
                                 j_vcrit_b, j_v, j_q, j_ic, v, J, inl, work, jwork, max_newton, vtol):
                        good = False
                        break
                if good:
                    done = True
                    lev_used = lev
                    break
                cap_v[:] = snap[0]
                cap_i[:] = snap[1]
                ind_v[:] = snap[2]
                ind_i[:] = snap[3]
                j_v[:] = snap[4]
                j_q[:] = snap[5]
                j_ic[:] = snap[6]
            if not done:
                return kk
        # push outgoing waves into the line histories
        for b in range(nb):
            typ = btype[b]
            if typ == 4:
                a = baux[b]
                line = a // 2
                end = a % 2
                tl_buf[line, end, tl_head[line]] = 2.0 * tl_g[line] * v[bp[b]] - J[b]
            elif typ == 5:
                a = baux[b]
                st_buf[a, st_head[a]] = 2.0 * st_g[a] * v[bp[b]] - J[b]
        for line in range(tl_head.shape[0]):
            tl_head[line] = (tl_head[line] + 1) % tl_buf.shape[2]
        for a in range(st_head.shape[0]):
            st_head[a] = (st_head[a] + 1) % st_buf.shape[1]
        if record:
            col = s % rec_v.shape[1]
            for i in range(n):
                rec_v[i, col] = v[i]
            for r in range(rec_b.shape[0]):
                b = rec_b[r]
                rec_i[r, col] = bg[lev_used, b] * (v[bp[b]] - v[bq[b]]) - J[b]
            for b in range(nb):
                vb = v[bp[b]] - v[bq[b]]
                acc_b[b] += vb * (bg[lev_used, b] * vb - J[b])
            for k in range(m):
                acc_j[k] += j_v[k] * inl[k]
                rec_j[k, col] = inl[k]
    return -1
