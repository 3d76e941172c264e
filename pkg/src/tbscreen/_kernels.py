"""Compiled inner loops for transition expectations.

A group's year splits every person into three outcomes: still employed and
uninfected (counts towards y'), infected but undetected (counts towards u'),
or gone (left, or infected and detected). Ongoing employees and new hires use
different outcome probabilities, so the law of (y', u') is the sum of two
independent trinomial pairs, clamped at the bounds. New arrivals x' are
independent of everything else and never enter these kernels.

Action index layout matches ``model.ACTIONS``:
``a = 2 * ongoing + new`` with ongoing in (none, skin, blood) and new in
(skin, blood).

Clamping is done by padding: a value grid W[y', u'] is extended to
``(x + y + 1)``-sized axes with edge replication, so a successor (s, a) reads
``Wp[s, a]`` with no bounds logic in the hot loop.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

FLOOR = 1e-14

# params vector layout
P_LEAVE, P_XI, P_BASE, P_FN_SKIN, P_FN_BLOOD, P_MX, P_MY, P_MU = range(8)


def pack_params(gp, beta: float, contact: float = 1.0) -> np.ndarray:
    return np.array([
        gp.leave_prob,
        contact * gp.transmission_prob,
        beta * gp.patient_contact_prob * gp.transmission_prob,
        gp.skin_fn,
        gp.blood_fn,
        gp.max_new,
        gp.max_ongoing,
        gp.max_undetected,
    ])


class Workspace:
    """Scratch buffers sized for one group's bounds."""

    def __init__(self, mx: int, my: int):
        n = mx + my + 2
        self.pad = n
        self.bufs = np.zeros((2, n))
        cap = (max(mx, my) + 2) ** 2 + 4
        self.idx_s = np.zeros((5, cap), dtype=np.int64)
        self.idx_a = np.zeros((5, cap), dtype=np.int64)
        self.w = np.zeros((5, cap))
        self.counts = np.zeros(5, dtype=np.int64)

    @property
    def args(self):
        return self.bufs, self.idx_s, self.idx_a, self.w, self.counts


@njit(cache=True)
def infection_prob(x, y, u, xi, base):
    n = x + y
    a = base
    if n > 0:
        a += xi * u / n
    if a < 0.0:
        return 0.0
    if a > 1.0:
        return 1.0
    return a


@njit(cache=True)
def binom_range(n, p, out):
    """Fill out[lo..hi] with the Binomial(n, p) pmf above FLOOR; return (lo, hi)."""
    if n == 0 or p <= 0.0:
        out[0] = 1.0
        return 0, 0
    if p >= 1.0:
        out[n] = 1.0
        return n, n
    lp = math.log(p)
    lq = math.log1p(-p)
    mode = int((n + 1) * p)
    if mode > n:
        mode = n
    c = math.lgamma(n + 1.0)
    out[mode] = math.exp(c - math.lgamma(mode + 1.0) - math.lgamma(n - mode + 1.0)
                         + mode * lp + (n - mode) * lq)
    ratio = p / (1.0 - p)
    hi = mode
    while hi < n:
        nxt = out[hi] * (n - hi) / (hi + 1.0) * ratio
        if nxt < FLOOR:
            break
        hi += 1
        out[hi] = nxt
    lo = mode
    while lo > 0:
        prv = out[lo] * lo / ((n - lo + 1.0) * ratio)
        if prv < FLOOR:
            break
        lo -= 1
        out[lo] = prv
    return lo, hi


@njit(cache=True)
def person_entries(n, p_stay, p_und, buf_s, buf_a, es, ea, ew):
    """Sparse joint law of (stayers, undetected) among n independent persons."""
    if n == 0:
        es[0] = 0
        ea[0] = 0
        ew[0] = 1.0
        return 1
    rest = 1.0 - p_stay
    q = p_und / rest if rest > 0.0 else 0.0
    if q > 1.0:
        q = 1.0
    lo, hi = binom_range(n, p_stay, buf_s)
    cnt = 0
    for s in range(lo, hi + 1):
        ws = buf_s[s]
        alo, ahi = binom_range(n - s, q, buf_a)
        for a in range(alo, ahi + 1):
            w = ws * buf_a[a]
            if w < FLOOR:
                continue
            es[cnt] = s
            ea[cnt] = a
            ew[cnt] = w
            cnt += 1
    return cnt


@njit(cache=True)
def fill_tables(x, y, alpha, params, bufs, idx_s, idx_a, w, counts):
    pl = params[P_LEAVE]
    fs = params[P_FN_SKIN]
    fb = params[P_FN_BLOOD]
    for k in range(3):  # ongoing: none, skin, blood
        f = 1.0 if k == 0 else (fs if k == 1 else fb)
        counts[k] = person_entries(y, (1.0 - pl) * (1.0 - alpha), (1.0 - pl) * alpha * f,
                                   bufs[0], bufs[1], idx_s[k], idx_a[k], w[k])
    for k in range(2):  # new: skin (both steps must miss), blood
        f = fs * fs if k == 0 else fb
        counts[3 + k] = person_entries(x, 1.0 - alpha, alpha * f,
                                       bufs[0], bufs[1], idx_s[3 + k], idx_a[3 + k], w[3 + k])


@njit(cache=True)
def pad_values(W, n):
    """Edge-replicated copy of W on an n x n grid, flattened."""
    my = W.shape[0] - 1
    mu = W.shape[1] - 1
    out = np.empty(n * n)
    for s in range(n):
        ss = s if s < my else my
        for a in range(n):
            aa = a if a < mu else mu
            out[s * n + a] = W[ss, aa]
    return out


@njit(cache=True)
def _expect(Wp, n, idx_s, idx_a, w, counts, ko, kn, off):
    no = counts[ko]
    nn = counts[3 + kn]
    for j in range(nn):
        off[j] = idx_s[3 + kn, j] * n + idx_a[3 + kn, j]
    acc = 0.0
    for i in range(no):
        base = idx_s[ko, i] * n + idx_a[ko, i]
        part = 0.0
        for j in range(nn):
            part += w[3 + kn, j] * Wp[base + off[j]]
        acc += w[ko, i] * part
    return acc


@njit(cache=True)
def q_values(W, cost, discount, params, pad, bufs, idx_s, idx_a, w, counts):
    """cost + discount * E[W(y', u')] for every state and action."""
    mx = int(params[P_MX])
    ny = int(params[P_MY]) + 1
    nu = int(params[P_MU]) + 1
    Wp = pad_values(W, pad)
    off = np.empty(idx_s.shape[1], dtype=np.int64)
    out = np.empty_like(cost)
    for x in range(mx + 1):
        for y in range(ny):
            for u in range(nu):
                s = (x * ny + y) * nu + u
                alpha = infection_prob(x, y, u, params[P_XI], params[P_BASE])
                fill_tables(x, y, alpha, params, bufs, idx_s, idx_a, w, counts)
                for ko in range(3):
                    for kn in range(2):
                        a = 2 * ko + kn
                        out[s, a] = cost[s, a] + discount * _expect(
                            Wp, pad, idx_s, idx_a, w, counts, ko, kn, off)
    return out


@njit(cache=True)
def policy_expect(W, policy, params, pad, bufs, idx_s, idx_a, w, counts):
    """E[W(y', u')] under ``policy`` (action index per state) for every state."""
    mx = int(params[P_MX])
    ny = int(params[P_MY]) + 1
    nu = int(params[P_MU]) + 1
    Wp = pad_values(W, pad)
    off = np.empty(idx_s.shape[1], dtype=np.int64)
    out = np.empty(policy.size)
    for x in range(mx + 1):
        for y in range(ny):
            for u in range(nu):
                s = (x * ny + y) * nu + u
                alpha = infection_prob(x, y, u, params[P_XI], params[P_BASE])
                fill_tables(x, y, alpha, params, bufs, idx_s, idx_a, w, counts)
                a = policy[s]
                out[s] = _expect(Wp, pad, idx_s, idx_a, w, counts, a // 2, a % 2, off)
    return out


@njit(cache=True)
def _accumulate(T, scale, ko, kn, idx_s, idx_a, w, counts, my, mu):
    for i in range(counts[ko]):
        s1 = idx_s[ko, i]
        a1 = idx_a[ko, i]
        w1 = scale * w[ko, i]
        for j in range(counts[3 + kn]):
            ys = s1 + idx_s[3 + kn, j]
            us = a1 + idx_a[3 + kn, j]
            if ys > my:
                ys = my
            if us > mu:
                us = mu
            T[ys, us] += w1 * w[3 + kn, j]


@njit(cache=True)
def policy_kernel(policy, weights, params, bufs, idx_s, idx_a, w, counts):
    """Transition matrix on (y, u) averaged over x with ``weights[x]``.

    Entry [k, k'] with k = y * (Mu + 1) + u is
    sum_x weights[x] * P((y', u') = k' | x, y, u, policy).
    """
    mx = int(params[P_MX])
    my = int(params[P_MY])
    mu = int(params[P_MU])
    ny, nu = my + 1, mu + 1
    Q = np.zeros((ny * nu, ny, nu))
    for x in range(mx + 1):
        wx = weights[x]
        if wx == 0.0:
            continue
        for y in range(ny):
            for u in range(nu):
                s = (x * ny + y) * nu + u
                alpha = infection_prob(x, y, u, params[P_XI], params[P_BASE])
                fill_tables(x, y, alpha, params, bufs, idx_s, idx_a, w, counts)
                a = policy[s]
                _accumulate(Q[y * nu + u], wx, a // 2, a % 2, idx_s, idx_a, w, counts, my, mu)
    return Q.reshape(ny * nu, ny * nu)


@njit(cache=True)
def yu_table(x, y, u, a, params, bufs, idx_s, idx_a, w, counts):
    """Dense law of (y', u') for one state and action index."""
    my = int(params[P_MY])
    mu = int(params[P_MU])
    T = np.zeros((my + 1, mu + 1))
    alpha = infection_prob(x, y, u, params[P_XI], params[P_BASE])
    fill_tables(x, y, alpha, params, bufs, idx_s, idx_a, w, counts)
    _accumulate(T, 1.0, a // 2, a % 2, idx_s, idx_a, w, counts, my, mu)
    return T
