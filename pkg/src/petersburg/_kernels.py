"""Compiled inner loops.  Every kernel draws from a numpy Generator passed in
by the caller and touches no other state."""

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def duration_from_uniform(u, log_q):
    # inversion: T = 1 + floor(log U / log q), U in (0, 1]
    return 1 + int(math.floor(math.log(u) / log_q))


@nb.njit(cache=True)
def draw_duration(gen, log_q):
    return duration_from_uniform(1.0 - gen.random(), log_q)


@nb.njit(cache=True)
def sum_max(gen, n, log_q, levels):
    """Sum, maximum and saturation count of n payoffs."""
    k_sat = levels.shape[0]
    total = 0.0
    biggest = 0.0
    saturated = 0
    for _ in range(n):
        t = draw_duration(gen, log_q)
        if t > k_sat:
            x = np.inf
            saturated += 1
        else:
            x = levels[t - 1]
        total += x
        if x > biggest:
            biggest = x
    return total, biggest, saturated


@nb.njit(cache=True)
def game_over_direct(gen, n, log_q, win, loss):
    """Play truncated games until the first duration above n."""
    total = 0.0
    games = 0
    while True:
        games += 1
        t = draw_duration(gen, log_q)
        if t > n:
            return total + loss, games
        total += win[t - 1]


@nb.njit(cache=True)
def geometric_count(gen, log_fail):
    # number of trials up to and including the first success, by inversion
    return 1 + int(math.floor(math.log(1.0 - gen.random()) / log_fail))


@nb.njit(cache=True)
def discounted(gen, log_q, levels, log_gamma, stop_weight):
    """Discounted payoff series over a renewal process of game durations.

    Returns (V, D, games, saturated) with V = sum gamma^{T_k} X_k and
    D = sum gamma^{T_{k-1}}; stops once gamma^{T_k} < stop_weight.
    The weight is carried multiplicatively with a table of gamma^tau.
    """
    k_sat = levels.shape[0]
    step = np.exp(np.arange(k_sat + 1) * log_gamma)
    v = 0.0
    d = 0.0
    weight = 1.0  # gamma^{T_{k-1}}
    t_total = 0
    games = 0
    saturated = 0
    while True:
        tau = draw_duration(gen, log_q)
        games += 1
        d += weight
        t_total += tau
        if tau > k_sat:
            saturated += 1
            weight = math.exp(t_total * log_gamma)
            v = np.inf
        else:
            weight *= step[tau]
            v += weight * levels[tau - 1]
        if weight < stop_weight:
            return v, d, games, saturated


@nb.njit(cache=True)
def running_ratio_records(gen, n_max, log_q, levels, log_r):
    """Records of S_n / (n log_r n) along one trajectory, n = 2..n_max."""
    k_sat = levels.shape[0]
    cap = 4096
    rec_n = np.empty(cap, dtype=np.int64)
    rec_v = np.empty(cap)
    count = 0
    best = -np.inf
    total = 0.0
    ratio = 0.0
    for i in range(1, n_max + 1):
        t = draw_duration(gen, log_q)
        total += np.inf if t > k_sat else levels[t - 1]
        if i < 2:
            continue
        ratio = total / (i * math.log(i) / log_r)
        if ratio > best:
            best = ratio
            if count < cap:
                rec_n[count] = i
                rec_v[count] = ratio
                count += 1
    return rec_n[:count], rec_v[:count], ratio


@nb.njit(cache=True)
def lattice_exponent(t, s, r, p, q, k_lo, k_hi, compensated):
    """Scalar lattice exponent sum over k_lo..k_hi (same formulas as the
    vectorised evaluator); ``compensated`` centres the terms with k < 0."""
    re = 0.0
    im = 0.0
    for k in range(k_lo, k_hi + 1):
        y = t * s * r**k
        w = p * q**k
        h = math.sin(0.5 * y)
        re -= 2.0 * h * h * w
        if compensated and k < 0:
            if abs(y) < 0.1:
                y2 = y * y
                im -= y * y2 / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0))) * w
            else:
                im += (math.sin(y) - y) * w
        else:
            im += math.sin(y) * w
    return complex(re, im)
