"""Exit criteria, each at its stated tolerance and runtime budget.

A per-criterion PASS/FAIL line is printed in the terminal summary.
"""

import math
import os
import time

import numpy as np
import pytest

from petersburg import GameParams, cli, report
from petersburg import experiments as ex
from petersburg import game_model as gm
from petersburg import inversion as inv
from petersburg import limit_laws as ll
from petersburg import sampler as smp

pytestmark = pytest.mark.acceptance

CLASSICAL = GameParams.classical()
P04_FELLER = GameParams.feller(0.4, 1.0)
P04_HEAVY = GameParams(0.4, 1.0, 2.0)
JOBS = os.cpu_count() or 1


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def cf_pairs(rows):
    """{t-label: complex estimate, complex target} from ecf_re / ecf_im rows."""
    out = {}
    for row in rows:
        if row.statistic.startswith("ecf_"):
            part = row.statistic[4:6]
            label = row.statistic.split("[t=")[1].rstrip("]")
            est, tgt = out.setdefault(label, [0j, 0j])
            unit = 1.0 if part == "re" else 1j
            out[label] = [est + unit * row.distance, tgt + unit * row.target]
    return {k: tuple(v) for k, v in out.items()}


# -- 1 ---------------------------------------------------------------------

EXACT_GRID = [GameParams(p, s, r) for p in (0.3, 0.5, 0.7) for s in (1.0, 2.0)
              for r in (0.6, 1.0, 1.3, 1.0 / (1.0 - p), 2.0, 3.0)]


def _atoms(params, depth=4000):
    k = np.arange(depth, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        levels, probs = params.s * params.r**k, params.p * params.q**k
    keep = (probs > 0.0) & np.isfinite(levels)
    return levels[keep], probs[keep]


def _brute_moment(params, beta, depth=20000):
    # terms in log space: s^beta r^(k beta) p q^k stays finite where r^k overflows
    k = np.arange(depth, dtype=float)
    log_terms = beta * (math.log(params.s) + k * math.log(params.r)) + math.log(params.p) + k * math.log(params.q)
    return math.fsum(np.exp(log_terms))


@pytest.mark.criterion(1, "exact formulas agree with brute-force series within 1e-10 (< 5 s)")
def test_exact_formula_suite():
    worst = 0.0
    with Clock() as clock:
        for P in EXACT_GRID:
            levels, probs = _atoms(P)
            xs = [0.25, 0.9 * P.s, P.s, 2.5 * P.s, 17.0, 640.0, 1e5]
            for x in xs:
                worst = max(worst, abs(gm.tail(P, x) - math.fsum(probs[levels > x])))
                keep = levels <= x
                worst = max(worst, abs(gm.truncated_mean(P, x) - math.fsum(levels[keep] * probs[keep])))
                worst = max(worst, abs(gm.mu(P, x) - math.fsum(np.minimum(levels, x) * probs)))
            for beta in (0.5, 1.0, 2.0):
                closed = gm.moment(P, beta)
                if math.isinf(closed):
                    assert P.r**beta * P.q >= 1.0
                else:
                    brute = _brute_moment(P, beta)
                    worst = max(worst, abs(closed - brute) / max(1.0, abs(brute)))
    print(f"criterion 1: worst deviation {worst:.3g}, {clock.seconds:.2f} s")
    assert worst < 1e-10
    assert clock.seconds < 5.0


# -- 2 ---------------------------------------------------------------------

FAIR_GRID = [GameParams(p, s, f / (1.0 - p)) for p in (0.2, 0.4, 0.5, 0.8) for s in (0.5, 1.0, 2.0)
             for f in (1.0, 1.25, 2.0)]


@pytest.mark.criterion(2, "fairness of the truncated game within 1e-10 for n <= 30 (< 1 s)")
def test_fairness():
    with Clock() as clock:
        worst = max(abs(smp.expected_net_gain(P, n)) for P in FAIR_GRID for n in range(1, 31))
    print(f"criterion 2: max |E V_n| = {worst:.3g}, {clock.seconds:.3f} s")
    assert worst < 1e-10
    assert clock.seconds < 1.0


# -- 3 ---------------------------------------------------------------------

SEMI_T = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
SEMI_M = range(-5, 6)


def _max_residual(spec, form):
    return max(ll.semistability_residual(spec, t, m, form=form) for t in SEMI_T for m in SEMI_M)


@pytest.mark.criterion(3, "semistability residuals < 1e-8 for both identities (< 10 s)")
@pytest.mark.parametrize("params", [CLASSICAL, P04_FELLER], ids=["classical", "p=0.4"])
def test_scaling_identity_compensated_as_stated(params):
    spec = ll.LevyExponentSpec(ll.ExponentVariant.COMPENSATED_FELLER, params)
    with Clock() as clock:
        stated = _max_residual(spec, "outer")
        swapped = _max_residual(spec, "inner")
    print(f"criterion 3: g(t) = q^m(g(tq^m) + itspm) residual {stated:.3g}; "
          f"g(tq^m) = q^m(g(t) + itspm) residual {swapped:.3g}; {clock.seconds:.2f} s")
    assert clock.seconds < 10.0
    assert stated < 1e-8


@pytest.mark.criterion(3, "semistability residuals < 1e-8 for both identities (< 10 s)")
@pytest.mark.parametrize("params", [CLASSICAL, P04_FELLER], ids=["classical", "p=0.4"])
def test_scaling_identity_discounted(params):
    spec = ll.LevyExponentSpec(ll.ExponentVariant.DISCOUNTED_U, params, a=1.2)
    with Clock() as clock:
        residual = _max_residual(spec, "inner")
    print(f"criterion 3: discounted residual {residual:.3g}; {clock.seconds:.2f} s")
    assert residual < 1e-8
    assert clock.seconds < 10.0


# -- 4, 5 --------------------------------------------------------------------

R_SUBSEQ = 10**4


@pytest.mark.criterion(4, "compensated subsequence: CF within 3/sqrt(R), KS < 0.05 (< 2 min)")
def test_subsequence_compensated():
    cfg = ex.ExperimentConfig("subseq", CLASSICAL, n=(10,), u=1.0, R=R_SUBSEQ, t_grid=(0.5, 1.0, 2.0))
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    band = 3.0 / math.sqrt(R_SUBSEQ)
    gaps = {t: abs(est - tgt) for t, (est, tgt) in cf_pairs(rep.rows).items()}
    ks = next(r.distance for r in rep.rows if r.statistic == "ks")
    print(f"criterion 4: |ecf - cf| {gaps} (band {band:.3g}); KS {ks:.4f}; {clock.seconds:.1f} s")
    assert set(gaps) == {"0.5", "1", "2"}
    assert all(g <= band for g in gaps.values())
    assert ks < 0.05
    assert clock.seconds < 120.0


@pytest.mark.criterion(5, "uncompensated subsequence: CF of S_floor(uM)/N within 3/sqrt(R) (< 2 min)")
def test_subsequence_uncompensated():
    cfg = ex.ExperimentConfig("subseq", P04_HEAVY, n=(10,), u=1.0, R=R_SUBSEQ, t_grid=(0.5, 1.0), ks=False)
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    band = 3.0 / math.sqrt(R_SUBSEQ)
    pairs = cf_pairs(rep.rows)
    gaps = {t: abs(est - tgt) for t, (est, tgt) in pairs.items()}
    # exact pre-limit CF at this n, to separate sampling noise from finite-n bias
    sched = ll.CenteringSchedule(P04_HEAVY, 10)
    size = sched.sample_size(ll.ExponentVariant.UNCOMPENSATED)
    exact = ll.prelimit_cf(P04_HEAVY, size, sched.N, 0.0, [0.5, 1.0])
    bias = {t: abs(e - pairs[t][1]) for t, e in zip(("0.5", "1"), exact)}
    print(f"criterion 5: |ecf - cf| {gaps} (band {band:.3g}); exact finite-n gap {bias}; {clock.seconds:.1f} s")
    assert clock.seconds < 120.0
    assert all(g <= band for g in gaps.values())


# -- 6 ---------------------------------------------------------------------


@pytest.mark.criterion(6, "game-over totals: KS < 0.02 (rq = 1, n = 25) and < 0.05 (rq > 1, n = 20) (< 1 min each)")
@pytest.mark.parametrize("params, n, bound", [(CLASSICAL, 25, 0.02), (P04_HEAVY, 20, 0.05)], ids=["feller", "heavy"])
def test_game_over(params, n, bound):
    cfg = ex.ExperimentConfig("gameover", params, n=(n,), R=10**4)
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    ks = next(r.distance for r in rep.rows if r.statistic == "ks")
    mean = next(r for r in rep.rows if r.statistic == "mean")
    print(f"criterion 6: KS {ks:.4f} (bound {bound}); mean {mean.distance:.4g} in "
          f"[{mean.ci_lo:.4g}, {mean.ci_hi:.4g}]; {clock.seconds:.1f} s")
    assert ks < bound
    assert clock.seconds < 60.0


# -- 7 ---------------------------------------------------------------------


@pytest.mark.criterion(7, "weak law: exceedance decreases 2^8 -> 2^16, median within 0.25 of sp (< 2 min)")
def test_weak_law():
    cfg = ex.ExperimentConfig("wlln", CLASSICAL, n=(2**8, 2**16), eps=(0.5,), R=500)
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    frac = [r.distance for r in rep.rows if r.statistic == "exceedance_fraction"]
    median = [r for r in rep.rows if r.statistic == "median_ratio"][-1]
    print(f"criterion 7: exceedance {frac}; median at 2^16 {median.distance:.4f} (sp {median.target}); "
          f"{clock.seconds:.1f} s")
    assert frac[1] < frac[0]
    assert abs(median.distance - median.target) <= 0.25
    assert clock.seconds < 120.0


# -- 8 ---------------------------------------------------------------------


@pytest.mark.criterion(8, "ruin probability within factor [0.5, 2] of the formula, Wilson CI overlapping (< 10 min)")
def test_ruin_probability():
    cfg = ex.ExperimentConfig("ruin", CLASSICAL, n=(10,), a=1.2, R=10**6, t_grid=(1.0,))
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    row = next(r for r in rep.rows if r.statistic == "ruin_probability")
    lo, hi = 0.5 * row.target, 2.0 * row.target
    print(f"criterion 8: MC {row.distance:.4g} CI [{row.ci_lo:.4g}, {row.ci_hi:.4g}] vs formula "
          f"{row.target:.4g} band [{lo:.4g}, {hi:.4g}]; {clock.seconds:.1f} s")
    assert row.target == pytest.approx(8.608e-4, rel=1e-3)
    assert lo <= row.distance <= hi
    assert row.ci_lo <= hi and row.ci_hi >= lo
    assert clock.seconds < 600.0


# -- 9 ---------------------------------------------------------------------


@pytest.mark.criterion(9, "deviations: exact max curve, sum Monte Carlo, sandwich bounds (< 10 min)")
def test_deviations():
    cfg = ex.ExperimentConfig("deviations", CLASSICAL, n=(2**12,), b=2.0, R=10**6, mc_n=(512,),
                              eps=(0.5, 1.0, 2.0), sandwich_n_max=2**16)
    with Clock() as clock:
        rep = ex.run_experiment(cfg, jobs=JOBS)
    exact = next(r for r in rep.rows if r.statistic == "max_exact")
    mc = next(r for r in rep.rows if r.statistic == "sum_mc")
    sandwich = [r for r in rep.rows if r.statistic == "sandwich_violations"]
    print(f"criterion 9: max exact {exact.distance:.4f}; sum MC {mc.distance:.4f} "
          f"[{mc.ci_lo:.4f}, {mc.ci_hi:.4f}]; sandwich violations {[r.distance for r in sandwich]} "
          f"over {[int(r.ci_hi) for r in sandwich]} points; {clock.seconds:.1f} s")
    assert abs(exact.distance - (-1.0)) <= 0.15
    assert abs(mc.distance - (-1.0)) <= 0.25
    assert len(sandwich) == 3 and all(r.distance == 0.0 for r in sandwich)
    assert clock.seconds < 600.0


# -- 10 --------------------------------------------------------------------


@pytest.mark.criterion(10, "Gil-Pelaez on the exponential CF within 1e-6 on [0.25, 10] (< 5 s)")
def test_inversion_round_trip():
    xs = np.linspace(0.25, 10.0, 40)
    with Clock() as clock:
        err = max(abs(inv.gil_pelaez_cdf(inv.exponential_cf, x) + math.expm1(-x)) for x in xs)
    print(f"criterion 10: max error {err:.3g}; {clock.seconds:.2f} s")
    assert err < 1e-6
    assert clock.seconds < 5.0


# -- 11 --------------------------------------------------------------------

MANIFEST = """\
seed: 2024
defaults:
  params: {p: 0.5, s: 2, r: 2}
experiments:
  - kind: wlln
    n: [64, 256]
    eps: [0.5]
    R: 400
  - kind: gameover
    n: [12]
    R: 400
  - kind: subseq
    n: [6]
    R: 400
    ks: false
  - kind: ruin
    n: [6]
    a: 1.2
    R: 400
  - kind: deviations
    n: [64]
    b: 2
    R: 400
    sandwich_n_max: 256
  - kind: limsup-demo
    n: [5000]
    R: 3
"""


@pytest.mark.criterion(11, "same manifest at parallelism 1 and 8 gives byte-identical reports")
@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_determinism(tmp_path, fmt):
    manifest = tmp_path / "manifest.yaml"
    manifest.write_text(MANIFEST)
    written = {}
    for tag, jobs in (("first", 1), ("again", 1), ("parallel", 8)):
        out = tmp_path / tag
        code = cli.main(["run", "--config", str(manifest), "--out", str(out), "--jobs", str(jobs),
                         "--format", fmt, "--quiet"])
        assert code == 0
        written[tag] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    print(f"criterion 11: {len(written['first'])} {fmt} reports compared")
    assert len(written["first"]) == 6
    assert written["first"] == written["again"] == written["parallel"]
