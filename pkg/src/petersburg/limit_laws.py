"""Lévy exponents of the subsequence limit laws, the discounted law U, and
the closed-form quantities built on them (Lévy tail, ruin approximation,
deviation exponents).

Exponents are bilateral series over the lattice k in Z.  The truncation
range is derived from explicit tail bounds for the largest |t| requested,
so the omitted terms contribute less than ``tol`` in absolute value.
"""

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from . import _kernels as kern
from .errors import DomainError
from .game_model import GameParams, Regime, lattice_index

DEFAULT_TOL = 1e-12
_SERIES_TERMS = 22  # power series for |t| x <= 1: 1/(22 * 22!) ~ 4e-23


class ExponentVariant(enum.Enum):
    COMPENSATED_FELLER = "compensated"  # rq = 1, jumps below s centred
    UNCOMPENSATED = "uncompensated"  # rq > 1
    DISCOUNTED_U = "discounted"  # law of the discounted integral, rq = 1


@dataclass(frozen=True)
class LevyExponentSpec:
    variant: ExponentVariant
    params: GameParams
    a: float = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        variant = ExponentVariant(self.variant)
        object.__setattr__(self, "variant", variant)
        if not self.tol > 0.0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if variant is ExponentVariant.UNCOMPENSATED:
            self.params.require(Regime.HEAVY, what="the uncompensated exponent")
        else:
            self.params.require(Regime.FELLER, what=f"the {variant.value} exponent")
        if variant is ExponentVariant.DISCOUNTED_U:
            if self.a is None or not self.a > 0.0:
                raise DomainError(f"the discounted exponent needs a > 0, got {self.a}")
            object.__setattr__(self, "a", float(self.a))

    def exponent(self, t):
        return levy_exponent(self, t)

    def cf(self, t, u=1.0):
        return cf_limit(self, u, t)


def compensation(k):
    """c_k: 1 below the scale s (k < 0), 0 from s upwards."""
    return (np.asarray(k) < 0).astype(float)


@dataclass(frozen=True)
class CenteringSchedule:
    """Scalings along the subsequence n: N = r^n, M = q^-n."""

    params: GameParams
    n: int
    u: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n}")
        if not self.u > 0.0:
            raise DomainError(f"u must be positive, got {self.u}")

    @property
    def N(self):
        return self.params.r**self.n

    @property
    def M(self):
        return self.params.q ** (-self.n)

    @property
    def center(self):
        """sp u n, subtracted from S/N in the compensated case."""
        return self.params.s * self.params.p * self.u * self.n

    def sample_size(self, variant):
        """Floor of uN (compensated) or uM (uncompensated)."""
        scale = self.N if variant is ExponentVariant.COMPENSATED_FELLER else self.M
        return max(1, math.floor(self.u * scale * (1.0 + 1e-15)))


# -- truncation ----------------------------------------------------------


def truncation_range(spec, t_abs):
    """Inclusive (k_lo, k_hi) so that both omitted tails are below tol/2."""
    p, q, s, r = spec.params.p, spec.params.q, spec.params.s, spec.params.r
    half = spec.tol / 2.0
    if spec.variant is ExponentVariant.DISCOUNTED_U:
        hi = math.log(half * p / (2.0 * math.log(r))) / math.log(q)
    else:
        hi = math.log(half / 2.0) / math.log(q)
    k_hi = max(0, math.ceil(hi))
    if t_abs == 0.0:
        return -1, k_hi
    if spec.variant is ExponentVariant.COMPENSATED_FELLER:
        # sum_{j>K} p t^2 s^2 r^-j / 2
        c = p * t_abs**2 * s**2 / (2.0 * (1.0 - 1.0 / r))
        base = r
    elif spec.variant is ExponentVariant.UNCOMPENSATED:
        # sum_{j>K} |t| s p (rq)^-j
        rq = r * q
        c = t_abs * s * p / (1.0 - 1.0 / rq)
        base = rq
    else:
        c = t_abs**2 * s**2 * (1.0 - r**-2) / (4.0 * (1.0 - 1.0 / r))
        base = r
    # c may underflow for tiny |t|; then a single negative index suffices
    lo = math.log(c / half) / math.log(base) if c > half else 0.0
    return -max(1, math.ceil(lo)), k_hi


# -- stable pieces of e^{iy} - 1 -----------------------------------------


def _cos_m1(y):
    return -2.0 * np.sin(0.5 * y) ** 2


def _sin_m_id(y):
    # sin y - y without cancellation for small |y|
    out = np.sin(y) - y
    small = np.abs(y) < 0.1
    ys = y[small]
    y2 = ys * ys
    out[small] = -ys * y2 / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0)))
    return out


def _lattice_series(spec, t, k):
    # t: (m,), k: (K,) -> (m,) complex
    p, q, s, r = spec.params.p, spec.params.q, spec.params.s, spec.params.r
    weight = p * q ** k.astype(float)
    y = np.outer(t, s * r ** k.astype(float))
    re = _cos_m1(y)
    im = np.sin(y)
    if spec.variant is ExponentVariant.COMPENSATED_FELLER:
        neg = k < 0
        im[:, neg] = _sin_m_id(y[:, neg].ravel()).reshape(len(t), -1)
    # add the smallest terms first
    order = np.argsort(np.abs(weight * s * r ** k.astype(float)))
    return (re[:, order] @ weight[order]) + 1j * (im[:, order] @ weight[order])


def _interval_integrals(spec, t, k):
    """J_k(t) = integral over (s r^(k-1), s r^k] of (e^{itx} - 1 - itx c_k)/x dx."""
    s, r = spec.params.s, spec.params.r
    kf = k.astype(float)
    b = s * r**kf
    c = compensation(k)
    tb = np.outer(t, b)
    out = np.zeros(tb.shape, dtype=complex)

    small = np.abs(tb) <= 1.0
    if np.any(small):
        z = 1j * tb[small]
        cc = np.broadcast_to(c, tb.shape)[small]
        w = np.ones_like(z)
        acc = np.zeros_like(z)
        for n in range(1, _SERIES_TERMS + 1):
            w = w * z / n
            term = w * (1.0 - r ** (-n)) / n
            acc += term * (1.0 - cc) if n == 1 else term
        out[small] = acc

    big = ~small
    if np.any(big):
        tt = np.broadcast_to(t[:, None], tb.shape)[big]
        bb = np.broadcast_to(b, tb.shape)[big]
        cc = np.broadcast_to(c, tb.shape)[big]
        ta = np.abs(tt)
        si_b, ci_b = sici(ta * bb)
        si_a, ci_a = sici(ta * bb / r)
        re = ci_b - ci_a - math.log(r)
        im = np.sign(tt) * (si_b - si_a) - cc * tt * (bb - bb / r)
        out[big] = re + 1j * im
    return out


def levy_exponent(spec, t, k_range=None):
    """g(t) for scalar or array t; ``k_range`` overrides the truncation."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("t must be finite")
    t_abs = float(np.max(np.abs(t_arr))) if t_arr.size else 0.0
    k_lo, k_hi = truncation_range(spec, t_abs) if k_range is None else k_range
    k = np.arange(k_lo, k_hi + 1)
    if k.size == 0:
        return np.zeros(t_arr.shape, complex) if np.ndim(t) else 0j
    if spec.variant is ExponentVariant.DISCOUNTED_U:
        q = spec.params.q
        J = _interval_integrals(spec, t_arr, k)
        weight = q ** k.astype(float)
        order = np.argsort(np.abs(weight * spec.params.s * spec.params.r ** k.astype(float)))
        g = J[:, order] @ weight[order] + 1j * t_arr * spec.params.s * q
    else:
        g = _lattice_series(spec, t_arr, k)
    g[t_arr == 0.0] = 0.0
    return g if np.ndim(t) else complex(g[0])


def _exp_parts(z):
    z = np.asarray(z)
    return np.exp(z.real) * (np.cos(z.imag) + 1j * np.sin(z.imag))


def cf_limit(spec, u, t):
    """exp(u g(t)), or exp(u g(t)/a) for the discounted law (u = 1 gives U)."""
    if not u > 0.0:
        raise DomainError(f"u must be positive, got {u}")
    g = np.asarray(levy_exponent(spec, t))
    scale = u / spec.a if spec.variant is ExponentVariant.DISCOUNTED_U else u
    out = _exp_parts(scale * g)
    return out if np.ndim(t) else complex(out)


def semistability_residual(spec, t, m, form=None):
    """Residual of the geometric scaling identity at (t, m).

    ``form="outer"``: |g(t) - q^m (g(t q^m) + i t s p m)|.
    ``form="inner"``: |g(t q^m) - q^m (g(t) + i t s p m)|.
    Default is outer for the compensated exponent and inner for the
    discounted one.
    """
    if spec.variant is ExponentVariant.UNCOMPENSATED:
        raise DomainError("the uncompensated exponent has no drift term; no residual defined")
    if int(m) != m:
        raise DomainError(f"m must be an integer, got {m}")
    if form is None:
        form = "outer" if spec.variant is ExponentVariant.COMPENSATED_FELLER else "inner"
    if m == 0:
        return 0.0
    p, q, s = spec.params.p, spec.params.q, spec.params.s
    t = float(t)
    qm = q**m
    g_t, g_tq = levy_exponent(spec, np.array([t, t * qm]))
    drift = 1j * t * s * p * m
    if form == "outer":
        return abs(g_t - qm * (g_tq + drift))
    if form == "inner":
        return abs(g_tq - qm * (g_t + drift))
    raise DomainError(f"form must be 'outer' or 'inner', got {form!r}")


# -- closed forms ----------------------------------------------------------


def weak_law_limit(params):
    """Limit in probability of S_n / (n log_r n) when rq = 1."""
    params.require(Regime.FELLER, what="the weak law")
    return params.s * params.p


def levy_tail(params, a, x):
    """Upper tail of the Lévy measure with density q^k/(a y) on (s r^(k-1), s r^k]."""
    params.require(Regime.FELLER, what="the Lévy tail")
    if not a > 0.0:
        raise DomainError(f"a must be positive, got {a}")
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"x must be positive, got {x}")
    if math.isinf(x):
        return 0.0
    p, q, s, r = params.p, params.q, params.s, params.r
    k = lattice_index(params, x) + 1  # x in [s r^(k-1), s r^k)
    # remaining piece of interval k plus the whole intervals beyond
    return q**k / a * (math.log(s * r**k / x) + q / p * math.log(r))


def admissible_a_interval(params):
    """Open interval of a with 1 < 1/(q a^2) < r."""
    q, r = params.q, params.r
    return 1.0 / math.sqrt(q * r), 1.0 / math.sqrt(q)


def _require_ruin_params(params):
    params.require(Regime.FELLER, what="the ruin approximation")
    if not math.isclose(params.s, params.r, rel_tol=1e-12):
        raise DomainError(f"the ruin approximation needs s = r, got s={params.s}, r={params.r}")


def check_ruin_rate(params, a):
    _require_ruin_params(params)
    lo, hi = admissible_a_interval(params)
    x = 1.0 / (params.q * a * a) if a > 0.0 else math.inf
    if not 1.0 < x < params.r:
        raise DomainError(
            f"a = {a} gives x = 1/(q a^2) = {x:.6g} outside (1, {params.r:g}); "
            f"admissible a lie in ({lo:.6g}, {hi:.6g})"
        )
    return x


def ruin_probability_approx(params, a, n):
    """(1/(a r^n)) ((1/p) log r - log x) with x = 1/(q a^2)."""
    x = check_ruin_rate(params, a)
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    r = params.r
    return (math.log(r) / params.p - math.log(x)) / (a * r**n)


def discount_for_rate(params, a, n):
    """gamma = exp(-a p / r^n)."""
    if not a > 0.0:
        raise DomainError(f"a must be positive, got {a}")
    return math.exp(-a * params.p / params.r**n)


def discounted_value_mean(params, gamma):
    """E gamma^T X = s p gamma / (1 - gamma) when rq = 1."""
    params.require(Regime.FELLER, what="the discounted mean")
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    return params.s * params.p * gamma / (1.0 - gamma)


def deviation_limit_polynomial(b):
    """Limit of log_r P(S_n > n^b) / log_r n, for b > 1."""
    if not b > 1.0:
        raise DomainError(f"the polynomial deviation limit needs b > 1, got {b}")
    return 1.0 - b


def deviation_limit_geometric(params, b):
    """Limit exponent -log_r b for thresholds growing like b^n."""
    if params.r <= 1.0:
        raise DomainError("the geometric deviation limit needs r > 1")
    bound = 1.0 / (math.log(1.0 / params.q) / math.log(params.r))
    if not b > bound:
        raise DomainError(f"the geometric deviation limit needs b > {bound:.6g}, got {b}")
    return -math.log(b) / math.log(params.r)


# -- pre-limit characteristic functions ----------------------------------


def payoff_cf(params, theta, tol=1e-17):
    """E exp(i theta X) for array theta, summed until the mass left is below tol."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p, q, s, r = params.p, params.q, params.s, params.r
    depth = max(1, math.ceil(math.log(tol) / math.log(q)))
    j = np.arange(depth, dtype=float)
    with np.errstate(over="ignore"):
        y = np.outer(theta, s * r**j)
    w = p * q**j
    return (np.cos(y) @ w) + 1j * (np.sin(y) @ w)


def prelimit_cf(params, size, scale, center, t):
    """CF of S_size / scale - center, exactly, for array t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    phi = payoff_cf(params, t / scale)
    log_phi = np.log(phi)  # |phi| > 0 on the grids used
    return _exp_parts(size * log_phi - 1j * t * center)


# -- splitting off the large lattice jumps -------------------------------


@dataclass(frozen=True)
class JumpSplit:
    """Z(u) = Z_K + J with J compound Poisson over jumps s r^k, k >= K.

    ``smooth_cf`` is the CF of Z_K; ``sizes`` and ``rates`` describe J.
    The truncated rate beyond the last listed jump is ``rate_dropped``.
    """

    k_split: int
    smooth_cf: object
    sizes: np.ndarray
    rates: np.ndarray
    rate_dropped: float


def default_split_index(params, max_jump=20.0):
    """Smallest K with s r^K above ``max_jump``, so Z_K only has jumps below it."""
    s, r = params.s, params.r
    return max(0, math.floor(math.log(max_jump / s) / math.log(r)) + 1)


def split_large_jumps(spec, u=1.0, k_split=None, rate_tol=1e-15):
    if spec.variant is ExponentVariant.DISCOUNTED_U:
        raise DomainError("the discounted law has a jump density, not lattice atoms")
    if not u > 0.0:
        raise DomainError(f"u must be positive, got {u}")
    p, q, s, r = spec.params.p, spec.params.q, spec.params.s, spec.params.r
    K = default_split_index(spec.params) if k_split is None else int(k_split)
    # rate of jumps k >= k_cap is u q^k_cap
    k_cap = max(K + 1, math.ceil(math.log(rate_tol / u) / math.log(q)))
    k = np.arange(K, k_cap)
    rates = u * p * q ** k.astype(float)
    sizes = s * r ** k.astype(float)

    compensated = spec.variant is ExponentVariant.COMPENSATED_FELLER

    t_ref = 1e3
    k_ref = truncation_range(spec, t_ref)[0]

    def smooth_cf(t):
        if np.ndim(t) == 0:
            t = float(t)
            if t == 0.0:
                return 1.0 + 0j
            k_lo = k_ref if abs(t) <= t_ref else truncation_range(spec, abs(t))[0]
            g = kern.lattice_exponent(t, s, r, p, q, min(k_lo, K - 1), K - 1, compensated)
            return cmath.exp(u * g)
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        t_abs = float(np.max(np.abs(t_arr)))
        k_lo = truncation_range(spec, t_abs)[0]
        g = levy_exponent(spec, t_arr, k_range=(min(k_lo, K - 1), K - 1))
        out = _exp_parts(u * g)
        return out if np.ndim(t) else complex(out[0])

    return JumpSplit(K, smooth_cf, sizes, rates, u * q**k_cap)
