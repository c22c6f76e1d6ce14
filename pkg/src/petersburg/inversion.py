"""Characteristic-function inversion and goodness-of-fit tools.

:func:`gil_pelaez` computes F(x) = 1/2 - (1/pi) int_0^inf Im(e^{-itx} phi(t))/t dt
with QUADPACK: a plain adaptive rule near t = 0, the Fourier-weighted rule
(QAWO) on the bulk, and the Fourier-integral rule (QAWF) for a slowly
decaying tail beyond ``t_max``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NumericalError

INVERSION_SLACK = 1e-6
T_MAX = 1e3
_QUAD_LIMIT = 2000
_PANEL = 4.0


@dataclass
class GilPelaezResult:
    value: float
    raw: float
    diagnostics: dict = field(default_factory=dict)


def _scalar_cf(cf):
    def phi(t):
        return complex(np.asarray(cf(t)).reshape(-1)[0])

    return phi


def _envelope_cut(cf, t_max, tol):
    """Scan |phi| on a log grid: return (T, |phi| beyond T, centre).

    T is the grid point beyond which |phi| stays below tol (or t_max).  The
    centre c is the slope of arg phi at the end of that range; integrating
    e^{-it(x-c)} (e^{-itc} phi) keeps a pure location shift out of the
    weighted rules, where it would otherwise split a convergent integrand
    into two divergent halves.
    """
    grid = np.geomspace(1e-3, t_max, 400)
    try:
        vals = np.asarray(cf(grid), dtype=complex)
        if vals.shape != grid.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([complex(np.asarray(cf(t)).reshape(-1)[0]) for t in grid])
    env = np.abs(vals)
    above = np.nonzero(env >= tol)[0]
    if above.size == 0:
        return grid[0], 0.0, 0.0
    last = above[-1]
    # local phase slope where the signal ends
    t_end, h = grid[last], 1e-4
    ratio = complex(np.asarray(cf(t_end + h)).reshape(-1)[0]) / vals[last]
    center = math.atan2(ratio.imag, ratio.real) / h
    center = 0.0 if abs(center) < 1e-3 else center
    if last == grid.size - 1:
        return t_max, float(env[-1]), center
    return float(grid[last + 1]), float(env[last + 1 :].max()), center


def _quad(func, a, b, tol, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(func, a, b, epsabs=tol, epsrel=0.0, limit=_QUAD_LIMIT, full_output=1, **kw)
    # a fourth element (message) is present only when QUADPACK flags a problem
    return out[0], out[1], int(len(out) > 3)


def gil_pelaez(cf, x, t_max=T_MAX, tol=1e-8, cut=None, cache=None):
    """F(x) from the characteristic function ``cf`` with diagnostics.

    ``cut`` may pass a precomputed (T, envelope, centre) triple to skip the
    scan; ``cache`` may pass a dict shared between calls with the same
    ``cf``.  Panel edges beyond the first do not depend on x, so repeated
    inversions on a grid reuse most CF evaluations.
    """
    if not tol > 0.0:
        raise DomainError(f"tol must be positive, got {tol}")
    x = float(x)
    T, env_at_T, center = _envelope_cut(cf, t_max, tol) if cut is None else cut
    raw_phi = _scalar_cf(cf)
    if cache is None:
        cache = {}

    def phi(t):
        val = cache.get(t)
        if val is None:
            val = cache[t] = raw_phi(t) * complex(math.cos(t * center), -math.sin(t * center))
        return val

    w = x - center

    def full(t):
        return (complex(math.cos(t * w), -math.sin(t * w)) * phi(t)).imag / t

    def f_c(t):
        return phi(t).imag / t

    def f_s(t):
        return -phi(t).real / t

    pieces = []
    aw = abs(w)
    first = min(T, _PANEL)
    delta = first if aw == 0.0 else min(first, math.pi / aw)
    pieces.append(("head", *_quad(full, 0.0, delta, tol / 4)))
    # short panels keep the CF's own phase variation resolvable in each
    interior = np.arange(first, T, _PANEL)
    edges = np.concatenate(([delta], interior[interior > delta], [T] if T > delta else []))
    if edges.size > 1:
        scale = 4 * (edges.size - 1)
        for name, func, kind in (("cos", f_c, "cos"), ("sin", f_s, "sin")):
            parts = [_quad(func, a, b, tol / scale, weight=kind, wvar=w)
                     for a, b in zip(edges[:-1], edges[1:])]
            pieces.append((name, math.fsum(v for v, _, _ in parts), math.fsum(e for _, e, _ in parts),
                           max(f for _, _, f in parts)))
    tail_used = T >= t_max and env_at_T >= tol
    if tail_used:
        if aw * T < 1.0:
            pieces.append(("tail", *_quad(full, T, np.inf, tol / 4)))
        else:
            # QAWF needs a positive frequency; sin is odd in it
            pieces.append(("tail-cos", *_quad(f_c, T, np.inf, tol / 4, weight="cos", wvar=aw)))
            s_val, s_err, s_ier = _quad(f_s, T, np.inf, tol / 4, weight="sin", wvar=aw)
            pieces.append(("tail-sin", math.copysign(1.0, w) * s_val, s_err, s_ier))

    integral = math.fsum(p[1] for p in pieces)
    abserr = math.fsum(p[2] for p in pieces)
    raw = 0.5 - integral / math.pi
    diagnostics = {
        "x": x,
        "T": T,
        "envelope_at_T": env_at_T,
        "center": center,
        "tail_used": tail_used,
        "abserr": abserr / math.pi,
        "pieces": [(name, val, err, ier) for name, val, err, ier in pieces],
        "in_range": -INVERSION_SLACK <= raw <= 1.0 + INVERSION_SLACK,
    }
    # QUADPACK flags are advisory; fail when the error estimate itself is too large
    failed = [p for p in pieces if p[3] != 0 and p[2] > max(10 * tol, INVERSION_SLACK / 4)]
    if failed or not math.isfinite(raw):
        raise NumericalError(f"Gil-Pelaez quadrature did not converge at x={x}", diagnostics)
    return GilPelaezResult(min(1.0, max(0.0, raw)), raw, diagnostics)


def gil_pelaez_cdf(cf, x, t_max=T_MAX, tol=1e-8):
    """Clamped F(x); see :func:`gil_pelaez`."""
    return gil_pelaez(cf, x, t_max, tol).value


@dataclass
class CdfFunction:
    """A CDF evaluator with optional support hint and atom list (for KS)."""

    evaluate: object
    lower: float = None
    atoms: np.ndarray = None
    left_limit: object = None
    name: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x):
        vals = np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float)
        return np.clip(vals, 0.0, 1.0)

    def left(self, x):
        if self.left_limit is None:
            return self(x)
        return np.clip(np.asarray(self.left_limit(np.asarray(x, dtype=float)), dtype=float), 0.0, 1.0)


def inverted_cdf(cf, lo, hi, points=401, t_max=T_MAX, tol=1e-8, name="inverted"):
    """Monotone PCHIP interpolant of Gil-Pelaez values on an asinh-spaced grid.

    Values outside [lo, hi] are inverted pointwise.
    """
    if not hi > lo:
        raise DomainError("need hi > lo")
    grid = np.sinh(np.linspace(math.asinh(lo), math.asinh(hi), points))
    cut = _envelope_cut(cf, t_max, tol)
    cache = {}
    results = [gil_pelaez(cf, x, t_max, tol, cut=cut, cache=cache) for x in grid]
    raw = np.array([res.raw for res in results])
    drop = float(np.max(np.maximum.accumulate(raw) - raw))
    vals = np.maximum.accumulate(np.clip(raw, 0.0, 1.0))
    spline = PchipInterpolator(grid, vals, extrapolate=False)

    def evaluate(x):
        x = np.atleast_1d(x)
        out = spline(x)
        outside = (x < lo) | (x > hi)
        for i in np.nonzero(outside)[0]:
            out[i] = gil_pelaez(cf, x[i], t_max, tol, cut=cut).value
        return out

    diag = {
        "grid": (lo, hi, points),
        "max_monotonicity_drop": drop,
        "min_raw": float(raw.min()),
        "max_raw": float(raw.max()),
        "max_abserr": max(res.diagnostics["abserr"] for res in results),
    }
    return CdfFunction(evaluate, name=name, diagnostics=diag)


def shifted_exponential_cdf(scale, shift=None):
    """CDF of scale * E + shift with E ~ Exp(1); shift defaults to -scale (mean zero)."""
    if not scale > 0.0:
        raise DomainError(f"scale must be positive, got {scale}")
    shift = -scale if shift is None else float(shift)

    def evaluate(x):
        z = (np.asarray(x, dtype=float) - shift) / scale
        return np.where(z > 0.0, -np.expm1(-np.maximum(z, 0.0)), 0.0)

    return CdfFunction(evaluate, lower=shift, name=f"{scale:g}*(E-1)")


def shifted_exponential_mean(scale, shift=None):
    return scale + (-scale if shift is None else float(shift))


def shifted_exponential_cf(scale, shift=None):
    shift = -scale if shift is None else float(shift)

    def cf(t):
        t = np.asarray(t, dtype=float)
        return np.exp(1j * t * shift) / (1.0 - 1j * t * scale)

    return cf


def exponential_cf(t):
    return 1.0 / (1.0 - 1j * np.asarray(t, dtype=float))


def point_mass_cf(t):
    return np.ones_like(np.asarray(t, dtype=float), dtype=complex)


@dataclass
class EmpiricalCdf:
    values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float).ravel())
        if vals.size == 0:
            raise DomainError("empirical CDF needs at least one sample")
        if np.isnan(vals).any():
            raise DomainError("samples contain NaN")
        self.values = vals

    @property
    def size(self):
        return self.values.size

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.size

    def left(self, x):
        return np.searchsorted(self.values, x, side="left") / self.size


def ks_distance(emp, cdf):
    """sup_x |F_R(x) - F(x)|, checking both one-sided limits at every sample
    value and at every atom of the reference."""
    if not isinstance(emp, EmpiricalCdf):
        emp = EmpiricalCdf(emp)
    if not callable(getattr(cdf, "left", None)):
        cdf = CdfFunction(cdf)
    points = np.unique(emp.values)
    atoms = getattr(cdf, "atoms", None)
    if atoms is not None:
        points = np.union1d(points, np.asarray(atoms, dtype=float))
    finite = points[np.isfinite(points)]
    d = 0.0
    if finite.size:
        above = np.abs(emp(finite) - cdf(finite))
        below = np.abs(emp.left(finite) - cdf.left(finite))
        d = float(max(above.max(), below.max()))
    # mass of infinite samples (saturation markers) counts at +inf
    n_inf = np.count_nonzero(np.isposinf(emp.values))
    if n_inf:
        d = max(d, n_inf / emp.size)
    return d


def empirical_cf(samples, t):
    """Sample mean of exp(i t Y) for each t."""
    y = np.asarray(samples, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    arg = np.outer(t, y)
    return np.cos(arg).mean(axis=1) + 1j * np.sin(arg).mean(axis=1)


# -- limit-law CDFs ------------------------------------------------------


def _support_window(cf, tol, t_max, start=1.0, edge=1e-11):
    """Points lo < 0 < hi with F(lo) and 1 - F(hi) below ``edge``."""
    cut = _envelope_cut(cf, t_max, tol)
    lo = -start
    while gil_pelaez(cf, lo, t_max, tol, cut=cut).raw > edge:
        lo *= 2.0
        if lo < -1e6:
            raise NumericalError("left tail of the smooth part does not vanish")
    hi = start
    while 1.0 - gil_pelaez(cf, hi, t_max, tol, cut=cut).raw > edge:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalError("right tail of the smooth part does not vanish")
    return lo, hi


def _compound_poisson_atoms(sizes, rates, weight_tol=1e-16):
    """Atoms (values, weights) of a compound Poisson sum over the given jumps."""
    from .game_model import _merge_atoms

    lam = float(np.sum(rates))
    jump_p = rates / lam
    base = math.exp(-lam)
    values, weights = [np.zeros(1)], [np.array([base])]
    cur_v, cur_w = np.zeros(1), np.ones(1)
    n, poisson = 0, base
    while True:
        n += 1
        poisson *= lam / n
        if poisson < weight_tol:
            break
        cur_v = np.add.outer(cur_v, sizes).ravel()
        cur_w = np.outer(cur_w, jump_p).ravel()
        keep = cur_w * poisson >= weight_tol
        if not np.any(keep):
            break
        cur_v, cur_w = _merge_atoms(cur_v[keep], cur_w[keep])
        values.append(cur_v)
        weights.append(cur_w * poisson)
    v, w = _merge_atoms(np.concatenate(values), np.concatenate(weights))
    return v, w


def lattice_limit_cdf(spec, u=1.0, tol=1e-9, t_max=T_MAX, points=801):
    """CDF of Z(u) for the lattice exponents.

    Z(u) = Z_K + J: the small-jump part Z_K has a smooth CF and is inverted
    on a grid; the rare large jumps J are convolved exactly over their atoms.
    """
    from .limit_laws import split_large_jumps

    split = split_large_jumps(spec, u)
    lo, hi = _support_window(split.smooth_cf, tol, t_max)
    base = inverted_cdf(split.smooth_cf, lo, hi, points, t_max, tol, name="small-jump part")
    spline = base.evaluate
    atom_v, atom_w = _compound_poisson_atoms(split.sizes, split.rates)
    cum_w = np.concatenate(([0.0], np.cumsum(atom_w)))

    def evaluate(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        # atoms with c <= x - hi contribute their full weight
        out = cum_w[np.searchsorted(atom_v, x - hi, side="right")]
        first = np.searchsorted(atom_v, x.min() - hi, side="right")
        last = np.searchsorted(atom_v, x.max() - lo, side="left")
        for j in range(first, last):
            y = x - atom_v[j]
            inside = (y > lo) & (y < hi)
            if np.any(inside):
                out[inside] += atom_w[j] * spline(y[inside])
        return out

    mass_lost = 1.0 - cum_w[-1]
    diag = dict(base.diagnostics)
    diag.update(
        k_split=split.k_split,
        window=(lo, hi),
        atoms=int(atom_v.size),
        atom_mass_lost=float(mass_lost),
        rate_dropped=split.rate_dropped,
    )
    return CdfFunction(evaluate, name=f"{spec.variant.value} limit, u={u:g}", diagnostics=diag)


def limit_cdf(spec, u=1.0, tol=1e-9, t_max=T_MAX):
    """CDF of the limit law described by ``spec`` (U for the discounted variant)."""
    from .limit_laws import ExponentVariant, cf_limit

    if spec.variant is ExponentVariant.DISCOUNTED_U:
        cf = lambda t: cf_limit(spec, u, t)
        lo, hi = _support_window(cf, tol, t_max)
        return inverted_cdf(cf, lo, hi, 801, t_max, tol, name="discounted limit")
    return lattice_limit_cdf(spec, u, tol, t_max)
