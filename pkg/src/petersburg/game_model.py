"""Exact formulas for the payoff law P(X = s r^(k-1)) = p q^(k-1), k >= 1.

Everything here is a pure function of its arguments.  Lattice lookups
(which payoff level a threshold falls into) are done by comparing against
the very same floating powers ``s * r**j`` that :func:`pmf` returns, so the
step functions are consistent at the support points themselves.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResourceError

FELLER_RTOL = 1e-12
K_CAP = 64
MAX_ENUM_N = 6
MAX_ENUM_K = 20
_MERGE_RTOL = 1e-12


class Regime(enum.Enum):
    FINITE_MEAN = "finite-mean"  # rq < 1
    FELLER = "feller"  # rq = 1
    HEAVY = "heavy"  # rq > 1


@dataclass(frozen=True)
class GameParams:
    """Success probability ``p``, payoff scale ``s`` and growth ratio ``r``."""

    p: float
    s: float
    r: float

    def __post_init__(self):
        for name in ("p", "s", "r"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        if self.s <= 0.0:
            raise DomainError(f"s must be positive, got {self.s}")
        if self.r <= 0.0:
            raise DomainError(f"r must be positive, got {self.r}")

    @classmethod
    def classical(cls):
        """The fair-coin game paying 2, 4, 8, ..."""
        return cls(0.5, 2.0, 2.0)

    @classmethod
    def feller(cls, p, s=1.0):
        """Parameters on the boundary r = 1/q."""
        return cls(p, s, 1.0 / (1.0 - p))

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def rq(self):
        return self.r * self.q

    def regime(self):
        rq = self.rq
        if math.isclose(rq, 1.0, rel_tol=FELLER_RTOL, abs_tol=0.0):
            return Regime.FELLER
        return Regime.FINITE_MEAN if rq < 1.0 else Regime.HEAVY

    def require(self, *regimes, what="this operation"):
        regime = self.regime()
        if regime not in regimes:
            wanted = " or ".join(_REGIME_TEXT[r] for r in regimes)
            raise DomainError(
                f"{what} requires {wanted}; got r*q = {self.rq!r} ({regime.value})"
            )

    def as_dict(self):
        return {"p": self.p, "q": self.q, "s": self.s, "r": self.r}


_REGIME_TEXT = {
    Regime.FINITE_MEAN: "r*q < 1",
    Regime.FELLER: "the Feller condition r*q = 1",
    Regime.HEAVY: "r*q > 1",
}


@dataclass(frozen=True)
class ExactDistribution:
    """Finite list of atoms plus the probability mass cut off beyond the cap."""

    values: np.ndarray
    probs: np.ndarray
    truncation_mass: float

    def mean(self):
        return math.fsum(self.values * self.probs)

    def cdf(self, x):
        """Sub-probability P(S <= x, no atom truncated)."""
        idx = np.searchsorted(self.values, x, side="right")
        cum = np.concatenate(([0.0], np.cumsum(self.probs)))
        return cum[idx]

    def conditional(self):
        """Atoms renormalised to the event that nothing was truncated."""
        return ExactDistribution(self.values, self.probs / self.probs.sum(), 0.0)


def _level(params, j):
    # support point with zero-based index j, same expression as pmf
    return params.s * params.r**j


def pmf(params, k):
    """Return ``(s r^(k-1), p q^(k-1))`` for the k-th atom."""
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    k = int(k)
    return _level(params, k - 1), params.p * params.q ** (k - 1)


def payoff_table(params, size):
    """Payoffs ``s r^j`` for j = 0..size-1; overflow shows up as inf."""
    with np.errstate(over="ignore"):
        return params.s * params.r ** np.arange(size, dtype=float)


def lattice_index(params, x):
    """floor(log_r(x/s)) for x > 0 and r > 1.

    A float estimate from logarithms is corrected by direct comparison with
    the support points, so exact powers land on the right side.
    """
    if params.r <= 1.0:
        raise DomainError("lattice_index needs r > 1")
    if not x > 0.0:
        raise DomainError(f"x must be positive, got {x}")
    if math.isinf(x):
        raise DomainError("x must be finite")
    j = math.floor(math.log(x / params.s) / math.log(params.r))
    while _level(params, j + 1) <= x:
        j += 1
    while _level(params, j) > x:
        j -= 1
    return j


def tail_exponent(params, x):
    """Integer m with P(X > x) = q^m, for r > 1."""
    if params.r <= 1.0:
        raise DomainError("tail_exponent needs r > 1")
    if x < params.s:
        return 0
    return lattice_index(params, x) + 1


def _count_above(params, x):
    # number of support points strictly above x when r < 1 (levels decrease)
    s, r = params.s, params.r
    if x >= s:
        return 0
    if x <= 0.0:
        raise DomainError("infinitely many support points above x <= 0")
    c = max(0, math.ceil(math.log(x / s) / math.log(r)))
    while c > 0 and _level(params, c - 1) <= x:
        c -= 1
    while _level(params, c) > x:
        c += 1
    return c


def tail(params, x):
    """P(X > x)."""
    x = float(x)
    if params.r > 1.0:
        return params.q ** tail_exponent(params, x)
    if params.r == 1.0:
        return 1.0 if x < params.s else 0.0
    if x <= 0.0:
        return 1.0
    return -math.expm1(_count_above(params, x) * math.log(params.q))


def moment(params, beta):
    """E X^beta, or ``math.inf`` when the series diverges."""
    beta = float(beta)
    if not beta > 0.0:
        raise DomainError(f"moment order must be positive, got {beta}")
    ratio = params.r**beta * params.q
    if ratio >= 1.0:
        return math.inf
    return params.s**beta * params.p / (1.0 - ratio)


def truncated_mean(params, x):
    """E[X; X <= x], summed exactly over the support points not above x."""
    x = float(x)
    p, q, s, r = params.p, params.q, params.s, params.r
    if r > 1.0:
        count = tail_exponent(params, x)
        j = np.arange(count, dtype=float)
        return math.fsum((s * r**j) * (p * q**j))
    if r == 1.0:
        return s if x >= s else 0.0
    if x <= 0.0:
        return 0.0
    c = _count_above(params, x)
    rq = r * q
    return s * p * rq**c / (1.0 - rq)


def truncated_mean_asymptote(params, x):
    """Leading behaviour s p log_r(x/s) of the truncated mean when rq = 1."""
    if params.r <= 1.0 or not x > 0.0:
        raise DomainError("asymptote defined for r > 1 and x > 0")
    return params.s * params.p * math.log(x / params.s) / math.log(params.r)


def mu(params, x):
    """Integral of P(X > y) over [0, x], i.e. E min(X, x)."""
    x = float(x)
    if x < 0.0:
        raise DomainError(f"mu needs x >= 0, got {x}")
    s, r, q = params.s, params.r, params.q
    if r <= 1.0:
        return truncated_mean(params, x) + x * tail(params, x)
    if x <= s:
        return x
    # tail equals q^j on [s r^(j-1), s r^j)
    m = tail_exponent(params, x)
    pieces = [s]
    pieces.extend(q**j * (_level(params, j) - _level(params, j - 1)) for j in range(1, m))
    pieces.append(q**m * (x - _level(params, m - 1)))
    return math.fsum(pieces)


def _merge_atoms(values, probs):
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    gaps = np.diff(values) > _MERGE_RTOL * np.abs(values[1:])
    starts = np.concatenate(([0], np.nonzero(gaps)[0] + 1))
    return values[starts], np.add.reduceat(probs, starts)


def exact_sum_distribution(params, n, k_cap=MAX_ENUM_K):
    """Exact law of S_n with every summand restricted to its first ``k_cap`` atoms."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n}")
    if int(k_cap) != k_cap or k_cap < 1:
        raise DomainError(f"k_cap must be an integer >= 1, got {k_cap}")
    if n > MAX_ENUM_N or k_cap > MAX_ENUM_K:
        raise ResourceError(
            f"enumeration limited to n <= {MAX_ENUM_N} and k_cap <= {MAX_ENUM_K}"
        )
    n, k_cap = int(n), int(k_cap)
    levels = payoff_table(params, k_cap)
    weights = params.p * params.q ** np.arange(k_cap, dtype=float)
    values, probs = _merge_atoms(levels, weights)
    for _ in range(n - 1):
        values, probs = _merge_atoms(
            np.add.outer(values, levels).ravel(), np.outer(probs, weights).ravel()
        )
    lost = -math.expm1(n * math.log1p(-params.q**k_cap))
    return ExactDistribution(values, probs, lost)


def exact_max_cdf(params, n, x):
    """P(M_n <= x) = (1 - P(X > x))^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n}")
    t = tail(params, x)
    if t >= 1.0:
        return 0.0
    return math.exp(n * math.log1p(-t))


def max_exceedance(params, n, x):
    """P(M_n > x), evaluated without cancellation for tiny tails."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n}")
    t = tail(params, x)
    if t >= 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-t))


def log_max_exceedance(params, n, exponent):
    """log P(M_n > x) given the integer exponent m with P(X > x) = q^m.

    Works for thresholds far beyond the float range, where q^m underflows.
    """
    log_tail = exponent * math.log(params.q)
    t = math.exp(log_tail)
    if t == 0.0:
        return math.log(n) + log_tail
    if t >= 1.0:
        return 0.0
    return math.log(-math.expm1(n * math.log1p(-t)))


def scaled_tail_exponent(params, eps, b, n):
    """Exponent m with P(X > eps * b**n) = q^m, without forming b**n.

    For b == r the lattice offset is an exact integer shift.  Otherwise the
    base-r logarithm is snapped to an integer when within 1e-9 of one.
    """
    if params.r <= 1.0:
        raise DomainError("scaled_tail_exponent needs r > 1")
    if not eps > 0.0 or not b > 0.0:
        raise DomainError("eps and b must be positive")
    if b == params.r:
        return max(0, n + lattice_index(params, eps) + 1)
    y = (math.log(eps) + n * math.log(b) - math.log(params.s)) / math.log(params.r)
    nearest = round(y)
    j = nearest if abs(y - nearest) <= 1e-9 * max(1.0, abs(y)) else math.floor(y)
    return max(0, j + 1)
