"""Seeded Monte Carlo for game durations, payoffs, sums, maxima, truncated
games and discounted renewal values.

Single-draw functions take an :class:`~petersburg.rng.RngStream`.  Batch
functions give replicate ``i`` its own stream ``(seed, offset + i)``, which
makes a batch independent of how it is split across worker processes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _ddouble as ddm
from . import _kernels as kern
from .errors import DomainError
from .game_model import GameParams, Regime, payoff_table
from .rng import DEFAULT_SEED, RngStream

K_SAT = 1024
DISCOUNT_TOL = 1e-12


@dataclass
class SampleBatch:
    """Replicate values of one statistic together with their provenance."""

    values: np.ndarray
    statistic: str
    params: GameParams
    seed: int
    streams: tuple
    n: int = None
    u: float = None
    saturated_count: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    @property
    def meta(self):
        return {
            **self.params.as_dict(),
            "statistic": self.statistic,
            "n": self.n,
            "u": self.u,
            "seed": self.seed,
            "streams": self.streams,
            "saturated_count": self.saturated_count,
            **self.extra,
        }


@dataclass(frozen=True)
class TruncatedGameOutcome:
    duration: int
    net_gain: float
    game_over: bool


def duration_from_uniform(u, q):
    """Map U in (0, 1] to a geometric duration: 1 + floor(log U / log q)."""
    if not 0.0 < u <= 1.0:
        raise DomainError(f"u must lie in (0, 1], got {u}")
    return kern.duration_from_uniform(float(u), math.log(q))


def sample_duration(params, rng):
    return kern.draw_duration(rng.generator, math.log(params.q))


def sample_durations(params, rng, size):
    """``size`` consecutive durations from one stream (same mapping as above)."""
    u = rng.uniforms(size)
    return 1 + np.floor(np.log(u) / math.log(params.q)).astype(np.int64)


def sample_payoff(params, rng, k_sat=K_SAT):
    """One payoff; ``inf`` marks a duration beyond the saturation cap."""
    t = sample_duration(params, rng)
    if t > k_sat:
        return math.inf
    return params.s * params.r ** (t - 1)


def sample_sum_max(params, n, rng, k_sat=K_SAT):
    """(S_n, M_n, saturated) from n consecutive payoffs of one stream."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return kern.sum_max(rng.generator, int(n), math.log(params.q), payoff_table(params, k_sat))


def sample_sum(params, n, rng, k_sat=K_SAT):
    return sample_sum_max(params, n, rng, k_sat)[0]


def sample_max(params, n, rng, k_sat=K_SAT):
    return sample_sum_max(params, n, rng, k_sat)[1]


def _require_fair_fee_schedule(params, n):
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    params.require(Regime.FELLER, Regime.HEAVY, what="the truncated game")


def net_gain_values(params, n):
    """Net gain of a truncated game: (gain for T = 1..n as an array, game-over loss)."""
    _require_fair_fee_schedule(params, n)
    p, q, s, r = params.p, params.q, params.s, params.r
    if params.regime() is Regime.FELLER:
        return np.full(n, q * s), q * s * (1.0 - q ** (-n))
    k = np.arange(n, dtype=float)
    win = s * r**k * (q * r - 1.0) / (r - 1.0) + p * s / (r - 1.0)
    loss = -p * s * (r**n - 1.0) / (r - 1.0)
    return win, loss


def sample_truncated_game(params, n, rng):
    win, loss = net_gain_values(params, n)
    t = sample_duration(params, rng)
    if t > n:
        return TruncatedGameOutcome(t, float(loss), True)
    return TruncatedGameOutcome(t, float(win[t - 1]), False)


def expected_net_gain(params, n):
    """Exact E V_n from the case formula, in double-double arithmetic.

    The win and loss terms reach (rq)^n in size and cancel, so plain
    doubles lose about 1e-8 at n = 30; the paired-float evaluation keeps
    the result at rounding level.
    """
    _require_fair_fee_schedule(params, n)
    one = ddm.dd(1.0)
    p = ddm.dd(params.p)
    q = ddm.sub(one, p)  # exactly 1 - p
    s, r = ddm.dd(params.s), ddm.dd(params.r)
    r1 = ddm.sub(r, one)
    base = ddm.div(ddm.mul(p, s), r1)  # ps/(r-1)
    slope = ddm.div(ddm.mul(s, ddm.sub(ddm.mul(q, r), one)), r1)  # s(qr-1)/(r-1)
    total = ddm.dd(0.0)
    for k in range(1, n + 1):
        prob = ddm.mul(p, ddm.power(q, k - 1))
        gain = ddm.add(ddm.mul(slope, ddm.power(r, k - 1)), base)
        total = ddm.add(total, ddm.mul(prob, gain))
    loss = ddm.neg(ddm.mul(base, ddm.sub(ddm.power(r, n), one)))
    total = ddm.add(total, ddm.mul(ddm.power(q, n), loss))
    return ddm.to_float(total)


def sample_game_over_total(params, n, rng, method="direct"):
    """Total net gain G_n up to and including the first game longer than n.

    ``method="closed"`` (rq = 1 only) draws the number of games N_n directly
    and returns qs (N_n - q^-n).
    """
    _require_fair_fee_schedule(params, n)
    if method == "closed":
        params.require(Regime.FELLER, what="the closed-form game-over path")
        q, s = params.q, params.s
        count = kern.geometric_count(rng.generator, math.log1p(-(q**n)))
        return q * s * (count - q ** (-n))
    if method != "direct":
        raise DomainError(f"unknown method {method!r}")
    win, loss = net_gain_values(params, n)
    return kern.game_over_direct(rng.generator, n, math.log(params.q), win, loss)[0]


def _check_discount(params, gamma):
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    params.require(Regime.FELLER, what="the discounted game")


def discount_stop_weight(params, gamma, tol=DISCOUNT_TOL):
    """Stop once gamma^T_k * sp*gamma/(1-gamma) < tol*(1-gamma)."""
    return tol * (1.0 - gamma) ** 2 / (params.s * params.p * gamma)


def fee_constants(params, gamma):
    """(A, B) with per-game present value A - B (gamma r)^tau when s = r."""
    p, r = params.p, params.r
    if abs(gamma * r - 1.0) < 1e-12:
        raise DomainError(f"fee constants are singular at gamma r = 1 (gamma = {gamma})")
    return gamma * p * r / (gamma * r - 1.0), (1.0 - gamma) / (gamma * r - 1.0)


def _tilde(params, gamma, v, d):
    if not math.isclose(params.s, params.r, rel_tol=1e-12):
        return math.nan
    a, b = fee_constants(params, gamma)
    return a * d - b * v


def sample_discounted_value(params, gamma, rng, tol=DISCOUNT_TOL, k_sat=K_SAT):
    """(V(gamma), V-tilde) along one renewal path.

    V-tilde, the present value of all net gains under the discounted fee
    schedule, is only defined for s = r and is NaN otherwise.
    """
    _check_discount(params, gamma)
    v, d, _, _ = kern.discounted(
        rng.generator,
        math.log(params.q),
        payoff_table(params, k_sat),
        math.log(gamma),
        discount_stop_weight(params, gamma, tol),
    )
    return v, _tilde(params, gamma, v, d)


# -- batches -------------------------------------------------------------


@dataclass(frozen=True)
class _SumMaxTask:
    params: GameParams
    n: int
    k_sat: int = K_SAT

    def setup(self):
        return math.log(self.params.q), payoff_table(self.params, self.k_sat)

    def __call__(self, gen, state):
        return kern.sum_max(gen, self.n, state[0], state[1])


@dataclass(frozen=True)
class _GameOverTask:
    params: GameParams
    n: int
    method: str

    def setup(self):
        q = self.params.q
        if self.method == "closed":
            return (math.log1p(-(q**self.n)),)
        win, loss = net_gain_values(self.params, self.n)
        return math.log(q), win, loss

    def __call__(self, gen, state):
        if self.method == "closed":
            count = kern.geometric_count(gen, state[0])
            q, s = self.params.q, self.params.s
            return q * s * (count - q ** (-self.n)), count
        return kern.game_over_direct(gen, self.n, *state)


@dataclass(frozen=True)
class _DiscountedTask:
    params: GameParams
    gamma: float
    tol: float
    k_sat: int = K_SAT

    def setup(self):
        return (
            math.log(self.params.q),
            payoff_table(self.params, self.k_sat),
            math.log(self.gamma),
            discount_stop_weight(self.params, self.gamma, self.tol),
        )

    def __call__(self, gen, state):
        return kern.discounted(gen, *state)


def _run_chunk(task, seed, start, stop):
    state = task.setup()
    rows = [task(RngStream(seed, i).generator, state) for i in range(start, stop)]
    return np.array(rows, dtype=float).reshape(stop - start, -1)


def run_replicates(task, replicates, seed=DEFAULT_SEED, offset=0, jobs=1):
    """Evaluate ``task`` on streams offset..offset+replicates-1, in order.

    With ``jobs > 1`` contiguous chunks go to worker processes; the result
    does not depend on the number of workers.
    """
    if replicates < 1:
        raise DomainError(f"replicate count must be >= 1, got {replicates}")
    start, stop = offset, offset + replicates
    if jobs <= 1 or replicates < 2:
        return _run_chunk(task, seed, start, stop)
    pieces = min(replicates, 4 * jobs)
    edges = np.linspace(start, stop, pieces + 1).astype(np.int64)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_run_chunk, task, seed, int(a), int(b))
            for a, b in zip(edges[:-1], edges[1:])
            if b > a
        ]
        return np.concatenate([f.result() for f in futures], axis=0)


def sum_max_batch(params, n, replicates, seed=DEFAULT_SEED, offset=0, jobs=1, k_sat=K_SAT):
    """Batches of S_n and M_n; both come from the same payoffs."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    out = run_replicates(_SumMaxTask(params, int(n), k_sat), replicates, seed, offset, jobs)
    sat = int(out[:, 2].sum())
    streams = (offset, offset + replicates)
    make = lambda vals, name: SampleBatch(vals, name, params, seed, streams, n=int(n), saturated_count=sat)
    return make(out[:, 0], "sum"), make(out[:, 1], "max")


def sum_batch(params, n, replicates, seed=DEFAULT_SEED, offset=0, jobs=1):
    return sum_max_batch(params, n, replicates, seed, offset, jobs)[0]


def max_batch(params, n, replicates, seed=DEFAULT_SEED, offset=0, jobs=1):
    return sum_max_batch(params, n, replicates, seed, offset, jobs)[1]


def game_over_batch(params, n, replicates, seed=DEFAULT_SEED, offset=0, jobs=1, method="auto"):
    """Batch of G_n; ``method="auto"`` uses the closed form whenever rq = 1."""
    _require_fair_fee_schedule(params, n)
    if method == "auto":
        method = "closed" if params.regime() is Regime.FELLER else "direct"
    if method == "closed":
        params.require(Regime.FELLER, what="the closed-form game-over path")
    elif method != "direct":
        raise DomainError(f"unknown method {method!r}")
    out = run_replicates(_GameOverTask(params, int(n), method), replicates, seed, offset, jobs)
    return SampleBatch(
        out[:, 0], "game_over_total", params, seed, (offset, offset + replicates),
        n=int(n), extra={"method": method, "mean_games": float(out[:, 1].mean())},
    )


def discounted_batch(params, gamma, replicates, seed=DEFAULT_SEED, offset=0, jobs=1, tol=DISCOUNT_TOL):
    """Batches of V(gamma) and V-tilde (NaN unless s = r)."""
    _check_discount(params, gamma)
    out = run_replicates(_DiscountedTask(params, float(gamma), float(tol)), replicates, seed, offset, jobs)
    a, b = fee_constants(params, gamma)
    tilde = a * out[:, 1] - b * out[:, 0]
    if not math.isclose(params.s, params.r, rel_tol=1e-12):
        tilde = np.full(replicates, np.nan)
    streams = (offset, offset + replicates)
    extra = {"gamma": gamma, "tol": tol, "mean_games": float(out[:, 2].mean())}
    sat = int(out[:, 3].sum())
    return (
        SampleBatch(out[:, 0], "discounted_value", params, seed, streams, saturated_count=sat, extra=extra),
        SampleBatch(tilde, "discounted_net_value", params, seed, streams, saturated_count=sat, extra=extra),
    )
