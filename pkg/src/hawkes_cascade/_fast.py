"""Jit-compiled inner loop of the exact thinning simulator.

One kernel call processes one pre-drawn block of dominating-process
candidates against the current cascade anchors.  All mutation happens in
preallocated arrays owned by the Python wrapper; the kernel returns a status
code when it needs more candidates, more event capacity, or has crossed the
horizon.  Population blocks keep per-block anchors (state at the last jump),
so a rejected candidate costs one single-coordinate flow evaluation.
"""

import math

from numba import njit

STATUS_NEED_CANDIDATES = 0
STATUS_DONE = 1
STATUS_EVENTS_FULL = 2
STATUS_DISCORD_FULL = 3


@njit(cache=True, inline="always")
def _rate(kind, a, A, b, x0, B, x):
    if kind == 0:
        if x < x0:
            return a * math.exp(b * x)
        return A / (1.0 + B * math.exp(-2.0 * b * x))
    return a


@njit(cache=True, inline="always")
def _flow0(x, o, eta, nu, dt):
    # coordinate (k, 0) after flowing the block for dt; Horner on dt^m/m!
    acc = x[o + eta]
    for m in range(eta - 1, -1, -1):
        acc = x[o + m] + acc * dt / (m + 1)
    return math.exp(-nu * dt) * acc


@njit(cache=True, inline="always")
def _flow_block(x, out, o, eta, nu, dt):
    decay = math.exp(-nu * dt)
    for l in range(eta + 1):
        acc = x[o + eta]
        for m in range(eta - 1, l - 1, -1):
            acc = x[o + m] + acc * dt / (m - l + 1)
        out[o + l] = decay * acc


@njit(cache=True, nogil=True)
def thinning_block(
    gaps, us, start, t_start,
    horizon,
    anchor_x, anchor_t, zbar,
    nu, cvec, eta, off,
    rkind, ra, rA, rb, rx0, rB,
    Nk, lam_star, bbound, slotw,
    ev_t, ev_pop, ev_neu, n_ev,
    samp_t, samp_x, samp_z, sp,
    coupled, lim_dt, lim_x,
    delta, disc_t, disc_pop, n_disc,
    rec_int, ci_fin, ci_lim,
):
    n = nu.shape[0]
    t_now = t_start
    idx = start
    lim_len = lim_x.shape[1]
    n_samp = samp_t.shape[0]

    while idx < gaps.shape[0]:
        t_next = t_now + gaps[idx]

        # flush trajectory samples due before this candidate (or the horizon)
        t_stop = t_next if t_next < horizon else horizon
        while sp < n_samp and samp_t[sp] <= t_stop:
            for k in range(n):
                _flow_block(anchor_x, samp_x[sp], off[k], eta[k], nu[k],
                            samp_t[sp] - anchor_t[k])
                samp_z[sp, k] = zbar[k]
            sp += 1

        if t_next > horizon:
            # the overshooting candidate is consumed but contributes nothing
            return idx, horizon, n_ev, sp, n_disc, STATUS_DONE

        u = us[idx]
        k = 0
        while k < n - 1 and u >= bbound[k]:
            k += 1
        lower = bbound[k - 1] if k > 0 else 0.0
        rel = u - lower
        i = int(rel / slotw[k])
        if i >= Nk[k]:
            i = Nk[k] - 1
        z = (rel - i * slotw[k]) * lam_star

        xk0 = _flow0(anchor_x, off[k], eta[k], nu[k], t_next - anchor_t[k])
        lam_fin = _rate(rkind[k], ra[k], rA[k], rb[k], rx0[k], rB[k], xk0)
        accept = z < lam_fin
        if accept and n_ev >= ev_t.shape[0]:
            # bail before any side effect so re-entry replays this candidate
            return idx, t_now, n_ev, sp, n_disc, STATUS_EVENTS_FULL

        if rec_int != 0:
            ci_fin[idx] = lam_fin

        if coupled != 0 and i == 0:
            pos = t_next / lim_dt
            g = int(pos)
            if g > lim_len - 2:
                g = lim_len - 2
            w = pos - g
            xl = lim_x[k, g] * (1.0 - w) + lim_x[k, g + 1] * w
            lam_lim = _rate(rkind[k], ra[k], rA[k], rb[k], rx0[k], rB[k], xl)
            if rec_int != 0:
                ci_lim[idx] = lam_lim
            if (z < lam_lim) != accept:
                if n_disc >= disc_t.shape[0]:
                    return idx, t_now, n_ev, sp, n_disc, STATUS_DISCORD_FULL
                delta[k] += 1.0
                disc_t[n_disc] = t_next
                disc_pop[n_disc] = k
                n_disc += 1

        if accept:
            for kk in range(n):
                # flow block kk in place via a scratch copy
                scratch = anchor_x[off[kk]:off[kk] + eta[kk] + 1].copy()
                dt_kk = t_next - anchor_t[kk]
                decay = math.exp(-nu[kk] * dt_kk)
                for l in range(eta[kk] + 1):
                    acc = scratch[eta[kk]]
                    for m in range(eta[kk] - 1, l - 1, -1):
                        acc = scratch[m] + acc * dt_kk / (m - l + 1)
                    anchor_x[off[kk] + l] = decay * acc
                anchor_t[kk] = t_next
            recv = k - 1 if k > 0 else n - 1
            anchor_x[off[recv] + eta[recv]] += cvec[recv] / Nk[k]
            zbar[k] += 1.0 / Nk[k]
            ev_t[n_ev] = t_next
            ev_pop[n_ev] = k
            ev_neu[n_ev] = i
            n_ev += 1

        t_now = t_next
        idx += 1

    return idx, t_now, n_ev, sp, n_disc, STATUS_NEED_CANDIDATES
