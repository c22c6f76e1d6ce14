"""Experiment runners: each draws its samples, computes the theoretical
target through :mod:`limit_laws` / :mod:`game_model`, and returns report rows.

Replicates of the k-th entry of a schedule use streams
``k * R .. (k + 1) * R - 1`` of the configured seed, so runs with different
worker counts produce identical rows.
"""

import contextlib
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as kern
from . import game_model as gm
from . import inversion as inv
from . import limit_laws as ll
from . import sampler as smp
from .errors import DomainError
from .game_model import GameParams, Regime
from .rng import DEFAULT_SEED, RngStream

KINDS = ("wlln", "subseq", "gameover", "ruin", "deviations", "limsup-demo")
COLUMNS = (
    "experiment", "p", "q", "s", "r", "n", "u", "b", "eps", "a", "gamma",
    "R", "seed", "statistic", "target", "distance", "ci_lo", "ci_hi", "walltime_ms",
)
RUIN_TOL = 1.0


@contextlib.contextmanager
def _blame(name):
    try:
        yield
    except DomainError as err:
        if getattr(err, "field", None) is None:
            err.field = name
        raise


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: GameParams
    n: tuple
    R: int = 1000
    u: float = 1.0
    b: float = None
    eps: tuple = None
    a: float = None
    seed: int = None
    t_grid: tuple = (0.5, 1.0, 2.0)
    tol: float = None
    method: str = "auto"
    ks: bool = True
    sandwich_n_max: int = 2**16
    mc_n: tuple = None
    name: str = None

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in np.atleast_1d(self.n)))
        if self.eps is not None:
            object.__setattr__(self, "eps", tuple(float(v) for v in np.atleast_1d(self.eps)))
        object.__setattr__(self, "t_grid", tuple(float(v) for v in np.atleast_1d(self.t_grid)))
        if self.mc_n is not None:
            object.__setattr__(self, "mc_n", tuple(int(v) for v in np.atleast_1d(self.mc_n)))

    @property
    def label(self):
        return self.name or self.kind

    def validate(self):
        """Check the hypotheses of the targeted result.

        Raises DomainError whose ``field`` attribute names the offending entry.
        """
        with _blame("kind"):
            if self.kind not in KINDS:
                raise DomainError(f"unknown experiment kind {self.kind!r}")
        with _blame("R"):
            if int(self.R) != self.R or self.R < 1:
                raise DomainError(f"R must be an integer >= 1, got {self.R}")
        with _blame("n"):
            if not self.n:
                raise DomainError("n list is empty")
            if any(v < 1 for v in self.n):
                raise DomainError("every n must be >= 1")
        P = self.params
        if self.kind == "wlln":
            with _blame("params"):
                P.require(Regime.FELLER, what="the weak law")
            with _blame("n"):
                if any(v < 2 for v in self.n):
                    raise DomainError("the weak law needs n >= 2 (log_r n > 0)")
                if any(b <= a for a, b in zip(self.n, self.n[1:])):
                    raise DomainError("n list must be strictly increasing")
            with _blame("eps"):
                if not self.eps or any(not e > 0.0 for e in self.eps):
                    raise DomainError("the weak law needs eps > 0")
        elif self.kind == "subseq":
            with _blame("params"):
                P.require(Regime.FELLER, Regime.HEAVY, what="the subsequence limit")
            with _blame("u"):
                if not self.u > 0.0:
                    raise DomainError(f"u must be positive, got {self.u}")
        elif self.kind == "gameover":
            with _blame("params"):
                P.require(Regime.FELLER, Regime.HEAVY, what="the game-over limit")
            with _blame("method"):
                if self.method not in ("auto", "direct", "closed"):
                    raise DomainError(f"unknown method {self.method!r}")
                if self.method == "closed":
                    P.require(Regime.FELLER, what="the closed-form game-over path")
        elif self.kind == "ruin":
            with _blame("a"):
                if self.a is None:
                    raise DomainError("the ruin experiment needs a")
            with _blame("params"):
                P.require(Regime.FELLER, what="the ruin experiment")
                if not math.isclose(P.s, P.r, rel_tol=1e-12):
                    raise DomainError(f"the ruin experiment needs s = r, got s={P.s}, r={P.r}")
            with _blame("a"):
                ll.check_ruin_rate(P, self.a)
        elif self.kind == "deviations":
            with _blame("b"):
                if self.b is None:
                    raise DomainError("the deviation experiment needs b")
                ll.deviation_limit_polynomial(self.b)
            with _blame("params"):
                P.require(Regime.FELLER, Regime.HEAVY, what="the deviation experiment")
            with _blame("eps"):
                if any(not e > 0.0 for e in self.deviation_eps):
                    raise DomainError("eps must be positive")
        elif self.kind == "limsup-demo":
            with _blame("params"):
                P.require(Regime.FELLER, what="the limsup demonstration")
        return self

    @property
    def deviation_eps(self):
        return self.eps if self.eps else (0.5, 1.0, 2.0)

    def as_dict(self):
        out = asdict(self)
        out["params"] = self.params.as_dict()
        out["n"] = list(self.n)
        out["t_grid"] = list(self.t_grid)
        out["eps"] = None if self.eps is None else list(self.eps)
        out["mc_n"] = None if self.mc_n is None else list(self.mc_n)
        return out


@dataclass
class ReportRow:
    experiment: str
    p: float
    q: float
    s: float
    r: float
    statistic: str
    n: int = None
    u: float = None
    b: float = None
    eps: float = None
    a: float = None
    gamma: float = None
    R: int = None
    seed: int = None
    target: float = None
    distance: float = None
    ci_lo: float = None
    ci_hi: float = None
    walltime_ms: float = None

    def as_dict(self):
        return {c: getattr(self, c) for c in COLUMNS}


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)

    @property
    def experiment(self):
        return self.config.label


class _Rows:
    """Collects rows sharing the parameter snapshot of one config."""

    def __init__(self, cfg, seed, timing):
        self.cfg, self.seed, self.timing = cfg, seed, timing
        self.rows = []
        self._t0 = time.perf_counter()

    def add(self, statistic, **fields):
        P = self.cfg.params
        row = ReportRow(self.cfg.label, P.p, P.q, P.s, P.r, statistic, seed=self.seed, **fields)
        if self.timing:
            now = time.perf_counter()
            row.walltime_ms = round((now - self._t0) * 1e3, 3)
            self._t0 = now
        self.rows.append(row)
        return row


def effective_seed(cfg, seed=None):
    if seed is not None:
        return int(seed)
    return DEFAULT_SEED if cfg.seed is None else int(cfg.seed)


def wilson_interval(hits, trials, level=0.95):
    res = stats.binomtest(int(hits), int(trials)).proportion_ci(level, method="wilson")
    return float(res.low), float(res.high)


def _median_interval(values, level=0.95):
    v = np.sort(values)
    R = v.size
    lo = int(stats.binom.ppf((1 - level) / 2, R, 0.5))
    hi = int(stats.binom.isf((1 - level) / 2, R, 0.5))
    return float(v[max(lo - 1, 0)]), float(v[min(hi, R - 1)])


def run_wlln(cfg, seed=None, jobs=1, timing=False):
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P, R = cfg.params, cfg.R
    target = ll.weak_law_limit(P)
    for i, n in enumerate(cfg.n):
        sums = smp.sum_batch(P, n, R, seed, offset=i * R, jobs=jobs).values
        ratio = sums / (n * math.log(n) / math.log(P.r))
        for eps in cfg.eps:
            hits = int(np.count_nonzero(np.abs(ratio - target) > eps))
            lo, hi = wilson_interval(hits, R)
            out.add("exceedance_fraction", n=n, eps=eps, R=R, distance=hits / R, ci_lo=lo, ci_hi=hi)
        lo, hi = _median_interval(ratio)
        out.add("median_ratio", n=n, R=R, target=target, distance=float(np.median(ratio)), ci_lo=lo, ci_hi=hi)
    return ExperimentReport(cfg, out.rows)


def subsequence_variant(params):
    regime = params.regime()
    if regime is Regime.FELLER:
        return ll.ExponentVariant.COMPENSATED_FELLER
    if regime is Regime.HEAVY:
        return ll.ExponentVariant.UNCOMPENSATED
    raise DomainError(f"the subsequence limit needs r*q >= 1, got {params.rq!r}")


def subsequence_samples(params, n, u, R, seed, offset=0, jobs=1):
    """Normalised statistic (S_floor(uN) - sp u N n)/N, or S_floor(uM)/N."""
    variant = subsequence_variant(params)
    sched = ll.CenteringSchedule(params, n, u)
    size = sched.sample_size(variant)
    sums = smp.sum_batch(params, size, R, seed, offset, jobs).values
    y = sums / sched.N
    if variant is ll.ExponentVariant.COMPENSATED_FELLER:
        y = y - sched.center
    return y, size


def _cf_rows(out, emp, target, t_grid, band, **fields):
    for t, e, g in zip(t_grid, emp, target):
        for part, ev, gv in (("re", e.real, g.real), ("im", e.imag, g.imag)):
            out.add(f"ecf_{part}[t={t:g}]", target=float(gv), distance=float(ev),
                    ci_lo=float(ev - band), ci_hi=float(ev + band), **fields)


def run_subsequence(cfg, seed=None, jobs=1, timing=False):
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P, R, u = cfg.params, cfg.R, cfg.u
    spec = ll.LevyExponentSpec(subsequence_variant(P), P)
    t_grid = np.array(cfg.t_grid)
    target = ll.cf_limit(spec, u, t_grid)
    limit = inv.limit_cdf(spec, u) if cfg.ks else None
    for i, n in enumerate(cfg.n):
        y, _ = subsequence_samples(P, n, u, R, seed, i * R, jobs)
        emp = inv.empirical_cf(y, t_grid)
        _cf_rows(out, emp, target, cfg.t_grid, 3.0 / math.sqrt(R), n=n, u=u, R=R)
        if limit is not None:
            out.add("ks", n=n, u=u, R=R, distance=inv.ks_distance(inv.EmpiricalCdf(y), limit))
    return ExperimentReport(cfg, out.rows)


def game_over_limit(params, n):
    """(scaling factor applied to G_n, scale c of the limit c (E - 1))."""
    regime = params.regime()
    if regime is Regime.FELLER:
        return params.q**n, params.q * params.s
    if regime is Regime.HEAVY:
        return params.r ** (-n), params.p * params.s / (params.r - 1.0)
    raise DomainError(f"the game-over limit needs r*q >= 1, got {params.rq!r}")


def run_game_over(cfg, seed=None, jobs=1, timing=False):
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P, R = cfg.params, cfg.R
    for i, n in enumerate(cfg.n):
        factor, scale = game_over_limit(P, n)
        batch = smp.game_over_batch(P, n, R, seed, i * R, jobs, cfg.method)
        y = factor * batch.values
        law = inv.shifted_exponential_cdf(scale)
        out.add("ks", n=n, R=R, distance=inv.ks_distance(inv.EmpiricalCdf(y), law))
        mean, sd = float(y.mean()), float(y.std(ddof=1))
        band = 3.0 * sd / math.sqrt(R)
        out.add("mean", n=n, R=R, target=inv.shifted_exponential_mean(scale), distance=mean, ci_lo=mean - band, ci_hi=mean + band)
    return ExperimentReport(cfg, out.rows)


def run_ruin(cfg, seed=None, jobs=1, timing=False):
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P, R, a = cfg.params, cfg.R, cfg.a
    tol = RUIN_TOL if cfg.tol is None else cfg.tol
    spec = ll.LevyExponentSpec(ll.ExponentVariant.DISCOUNTED_U, P, a=a)
    t_grid = np.array(cfg.t_grid)
    cf_target = ll.cf_limit(spec, 1.0, t_grid)
    for i, n in enumerate(cfg.n):
        gamma = ll.discount_for_rate(P, a, n)
        v, vt = smp.discounted_batch(P, gamma, R, seed, i * R, jobs, tol)
        approx = ll.ruin_probability_approx(P, a, n)
        hits = int(np.count_nonzero(vt.values < 0.0))
        lo, hi = wilson_interval(hits, R)
        common = dict(n=n, a=a, gamma=gamma, R=R)
        out.add("ruin_probability", target=approx, distance=hits / R, ci_lo=lo, ci_hi=hi, **common)
        out.add("ruin_ratio", distance=hits / R / approx, ci_lo=lo / approx, ci_hi=hi / approx, **common)
        N = P.r**n
        y = v.values / N - P.s * P.p * n / a
        emp = inv.empirical_cf(y, t_grid)
        _cf_rows(out, emp, cf_target, cfg.t_grid, 5.0 / math.sqrt(R), **common)
    return ExperimentReport(cfg, out.rows)


def _log_r(params, x):
    return math.log(x) / math.log(params.r)


def max_deviation_exact(params, n, b):
    """log_r P(M_n > n^b) / log_r n from the exact max law."""
    x = float(n) ** b
    m = gm.tail_exponent(params, x)
    return gm.log_max_exceedance(params, n, m) / math.log(params.r) / _log_r(params, n)


def max_geometric_exact(params, n, eps, b):
    """log_r P(M_n > eps b^n) / n without forming b^n."""
    m = gm.scaled_tail_exponent(params, eps, b, n)
    return gm.log_max_exceedance(params, n, m) / math.log(params.r) / n


def sandwich_violations(params, eps, b, n_max, slack=1e-12):
    """Count n <= n_max where n t <= 1 and the max bounds fail (log scale).

    Lower: log(n t / 2) <= log P(M_n > x); upper: log P(M_n > x) <= log(n t),
    with t = P(X > eps b^n).  Returns (violations, points checked, min margin).
    """
    log_q = math.log(params.q)
    bad = checked = 0
    margin = math.inf
    for n in range(1, n_max + 1):
        m = gm.scaled_tail_exponent(params, eps, b, n)
        log_nt = math.log(n) + m * log_q
        if log_nt > 0.0:
            continue
        checked += 1
        lp = gm.log_max_exceedance(params, n, m)
        lower = lp - (log_nt - math.log(2.0))
        upper = log_nt - lp
        margin = min(margin, lower, upper)
        if lower < -slack or upper < -slack:
            bad += 1
    return bad, checked, margin


def run_deviations(cfg, seed=None, jobs=1, timing=False):
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P, R, b = cfg.params, cfg.R, cfg.b
    target = ll.deviation_limit_polynomial(b)
    log_r = math.log(P.r)
    for n in cfg.n:
        if n >= 2:
            out.add("max_exact", n=n, b=b, target=target, distance=max_deviation_exact(P, n, b))
    mc_n = cfg.n if cfg.mc_n is None else cfg.mc_n
    for i, n in enumerate(mc_n):
        if n < 2:
            continue
        sums = smp.sum_batch(P, n, R, seed, i * R, jobs).values
        hits = int(np.count_nonzero(sums > float(n) ** b))
        lo, hi = wilson_interval(hits, R)
        scale = log_r * _log_r(P, n)
        est = math.log(hits / R) / scale if hits else -math.inf
        ci = [math.log(v) / scale if v > 0 else -math.inf for v in (lo, hi)]
        out.add("sum_mc", n=n, b=b, R=R, target=target, distance=est, ci_lo=ci[0], ci_hi=ci[1])
    if P.r > 1.0 and P.q * P.r >= 1.0 - 1e-12:
        b_geo = P.r
        geo_target = ll.deviation_limit_geometric(P, b_geo)
        for eps in cfg.deviation_eps:
            for n in cfg.n:
                out.add("max_geometric_exact", n=n, b=b_geo, eps=eps, target=geo_target,
                        distance=max_geometric_exact(P, n, eps, b_geo))
            bad, checked, margin = sandwich_violations(P, eps, b_geo, cfg.sandwich_n_max)
            out.add("sandwich_violations", n=cfg.sandwich_n_max, b=b_geo, eps=eps,
                    target=0.0, distance=float(bad), ci_lo=margin, ci_hi=float(checked))
    return ExperimentReport(cfg, out.rows)


def limsup_trajectory(params, n_max, seed, stream):
    gen = RngStream(seed, stream).generator
    levels = gm.payoff_table(params, smp.K_SAT)
    return kern.running_ratio_records(gen, int(n_max), math.log(params.q), levels, math.log(params.r))


def run_limsup_demo(cfg, seed=None, jobs=1, timing=False):
    """Records of S_n/(n log_r n) on R independent trajectories; display only."""
    cfg.validate()
    seed = effective_seed(cfg, seed)
    out = _Rows(cfg, seed, timing)
    P = cfg.params
    n_max = max(cfg.n)
    liminf = ll.weak_law_limit(P)
    for stream in range(cfg.R):
        rec_n, rec_v, final = limsup_trajectory(P, n_max, seed, stream)
        for n, v in zip(rec_n, rec_v):
            out.add(f"record[stream={stream}]", n=int(n), distance=float(v))
        out.add(f"final_ratio[stream={stream}]", n=n_max, target=liminf, distance=float(final))
    return ExperimentReport(cfg, out.rows)


RUNNERS = {
    "wlln": run_wlln,
    "subseq": run_subsequence,
    "gameover": run_game_over,
    "ruin": run_ruin,
    "deviations": run_deviations,
    "limsup-demo": run_limsup_demo,
}


def run_experiment(cfg, seed=None, jobs=1, timing=False):
    return RUNNERS[cfg.kind](cfg, seed=seed, jobs=jobs, timing=timing)
