import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from petersburg import DomainError, GameParams, RngStream
from petersburg import game_model as gm
from petersburg import limit_laws as ll
from petersburg import sampler as smp
from petersburg.rng import DEFAULT_SEED, resolve_seed

CLASSICAL = GameParams.classical()
HEAVY = GameParams(0.4, 1.0, 2.0)


class TestRng:
    def test_philox_known_answer(self):
        # Random123 reference vector: counter 0, key 0; numpy increments before use
        rng = RngStream(0, 0)
        bitgen = rng.generator.bit_generator
        state = bitgen.state
        state["state"]["counter"][:] = np.uint64(2**64 - 1)
        state["buffer_pos"] = 4
        bitgen.state = state
        words = [int(w) for w in rng.raw(4)]
        assert words == [0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]

    def test_streams_are_reproducible_and_distinct(self):
        a = RngStream(7, 3).uniforms(5)
        assert np.array_equal(a, RngStream(7, 3).uniforms(5))
        assert not np.array_equal(a, RngStream(7, 4).uniforms(5))
        assert not np.array_equal(a, RngStream(8, 3).uniforms(5))

    def test_uniforms_exclude_zero(self):
        u = RngStream(1, 1).uniforms(10**5)
        assert u.min() > 0.0 and u.max() <= 1.0

    def test_seed_precedence(self):
        assert resolve_seed(5, {"PETERSBURG_SEED": "9"}) == 5
        assert resolve_seed(None, {"PETERSBURG_SEED": "0x10"}) == 16
        assert resolve_seed(None, {}) == DEFAULT_SEED == 0xC0FFEE


class TestDurations:
    def test_boundaries(self):
        assert smp.duration_from_uniform(1.0, 0.5) == 1
        assert smp.duration_from_uniform(0.5, 0.5) == 2
        assert smp.duration_from_uniform(0.2500001, 0.5) == 2
        assert smp.duration_from_uniform(0.25, 0.5) == 3

    @pytest.mark.parametrize("u", [0.0, -0.1, 1.5])
    def test_rejects_outside_unit_interval(self, u):
        with pytest.raises(DomainError):
            smp.duration_from_uniform(u, 0.5)

    @given(st.floats(1e-300, 1.0), st.floats(0.05, 0.95))
    def test_inversion_is_the_geometric_quantile(self, u, q):
        t = smp.duration_from_uniform(u, q)
        # P(T > t) = q^t < u <= q^(t-1)
        assert t >= 1
        assert math.log(u) <= (t - 1) * math.log(q) * (1 - 1e-12) + 1e-300

    def test_vector_and_scalar_paths_agree(self):
        a = smp.sample_durations(CLASSICAL, RngStream(3, 0), 1000)
        rng = RngStream(3, 0)
        b = [smp.sample_duration(CLASSICAL, rng) for _ in range(1000)]
        assert list(a) == b

    def test_duration_law_chi_square(self):
        P = GameParams(0.3, 1.0, 2.0)
        t = smp.sample_durations(P, RngStream(11, 0), 200_000)
        k = np.arange(1, 25)
        observed = np.array([np.count_nonzero(t == j) for j in k] + [np.count_nonzero(t >= 25)])
        probs = np.append(P.p * P.q ** (k - 1.0), P.q**24)
        _, pvalue = stats.chisquare(observed, probs * t.size)
        assert pvalue > 1e-4


class TestSums:
    def test_sum_and_max_share_payoffs(self):
        total, biggest, sat = smp.sample_sum_max(CLASSICAL, 50, RngStream(5, 2))
        rng = RngStream(5, 2)
        payoffs = [smp.sample_payoff(CLASSICAL, rng) for _ in range(50)]
        assert total == sum(payoffs) and biggest == max(payoffs) and sat == 0

    def test_batch_uses_one_stream_per_replicate(self):
        batch = smp.sum_batch(CLASSICAL, 20, 6, seed=9, offset=4)
        direct = [smp.sample_sum(CLASSICAL, 20, RngStream(9, i)) for i in range(4, 10)]
        assert list(batch.values) == direct
        assert batch.meta["streams"] == (4, 10)

    def test_worker_count_does_not_change_results(self):
        one = smp.sum_max_batch(HEAVY, 30, 40, seed=2, jobs=1)
        two = smp.sum_max_batch(HEAVY, 30, 40, seed=2, jobs=2)
        assert np.array_equal(one[0].values, two[0].values)
        assert np.array_equal(one[1].values, two[1].values)

    def test_single_game_mean_in_finite_mean_regime(self):
        P = GameParams(0.6, 1.0, 1.25)
        vals = smp.sum_batch(P, 1, 20_000, seed=4).values
        sd = math.sqrt(gm.moment(P, 2.0) - gm.moment(P, 1.0) ** 2)
        assert abs(vals.mean() - gm.moment(P, 1.0)) < 5 * sd / math.sqrt(vals.size)

    def test_max_law_matches_exact_cdf(self):
        n = 16
        vals = smp.max_batch(CLASSICAL, n, 5000, seed=3).values
        for x in (8.0, 32.0, 256.0):
            emp = np.mean(vals <= x)
            exact = gm.exact_max_cdf(CLASSICAL, n, x)
            assert abs(emp - exact) < 5 * math.sqrt(exact * (1 - exact) / vals.size)

    def test_saturation_marks_infinity(self):
        vals = smp.sum_max_batch(CLASSICAL, 3, 50, seed=0, k_sat=1)
        assert np.isinf(vals[0].values).any()
        assert vals[0].saturated_count == np.count_nonzero(vals[0].values == np.inf) or vals[0].saturated_count > 0


class TestTruncatedGame:
    @pytest.mark.parametrize("params", [CLASSICAL, GameParams.feller(0.4, 1.0), HEAVY, GameParams(0.3, 1.0, 3.0)], ids=repr)
    @pytest.mark.parametrize("n", [1, 2, 7, 15, 30])
    def test_fair_to_rounding(self, params, n):
        assert abs(smp.expected_net_gain(params, n)) < 1e-10

    def test_expectation_from_outcome_table(self):
        P, n = HEAVY, 6
        win, loss = smp.net_gain_values(P, n)
        k = np.arange(n)
        assert math.fsum(list(P.p * P.q**k * win) + [P.q**n * loss]) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_finite_mean(self):
        with pytest.raises(DomainError):
            smp.net_gain_values(GameParams(0.3, 1.5, 1.2), 5)

    def test_outcome_flags_game_over(self):
        rng = RngStream(0, 0)
        outcomes = [smp.sample_truncated_game(CLASSICAL, 2, rng) for _ in range(200)]
        assert all(o.game_over == (o.duration > 2) for o in outcomes)
        assert {o.net_gain for o in outcomes if o.game_over} == {CLASSICAL.q * CLASSICAL.s * (1 - CLASSICAL.q**-2)}


class TestGameOver:
    def test_closed_form_is_what_the_loop_computes(self):
        # in the Feller case every win pays qs, so G_n = qs (count - q^-n)
        P, n = CLASSICAL, 4
        win, loss = smp.net_gain_values(P, n)
        assert np.allclose(win, P.q * P.s)
        assert loss == pytest.approx(P.q * P.s * (1 - P.q**-n))

    def test_direct_and_closed_paths_same_law(self):
        direct = smp.game_over_batch(CLASSICAL, 6, 4000, seed=1, method="direct").values
        closed = smp.game_over_batch(CLASSICAL, 6, 4000, seed=2, method="closed").values
        assert abs(direct.mean() - closed.mean()) < 5 * direct.std() * math.sqrt(2 / 4000)
        assert stats.ks_2samp(direct, closed).pvalue > 1e-3

    def test_mean_is_zero(self):
        batch = smp.game_over_batch(HEAVY, 8, 5000, seed=3)
        v = batch.values
        assert abs(v.mean()) < 4 * v.std() / math.sqrt(v.size)
        assert batch.extra["method"] == "direct"

    def test_closed_needs_feller(self):
        with pytest.raises(DomainError):
            smp.game_over_batch(HEAVY, 5, 10, method="closed")


class TestDiscounted:
    def test_mean_value(self):
        gamma = 0.9
        v, vt = smp.discounted_batch(CLASSICAL, gamma, 20_000, seed=5)
        # renewal identity: E V = E[gamma^T X] / (1 - E gamma^T)
        p, q = CLASSICAL.p, CLASSICAL.q
        target = ll.discounted_value_mean(CLASSICAL, gamma) / (1.0 - p * gamma / (1.0 - q * gamma))
        assert abs(v.values.mean() - target) < 5 * v.values.std() / math.sqrt(20_000)
        assert abs(vt.values.mean()) < 5 * vt.values.std() / math.sqrt(20_000)

    def test_tilde_needs_s_equal_r(self):
        P = GameParams.feller(0.4, 1.0)
        v, vt = smp.sample_discounted_value(P, 0.8, RngStream(0, 0))
        assert math.isfinite(v) and math.isnan(vt)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, 1.2])
    def test_gamma_range(self, gamma):
        with pytest.raises(DomainError):
            smp.sample_discounted_value(CLASSICAL, gamma, RngStream(0, 0))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95).filter(lambda g: abs(2.0 * g - 1.0) > 1e-6))
    def test_fee_constants_make_each_game_fair(self, gamma):
        P = CLASSICAL
        a, b = smp.fee_constants(P, gamma)
        k = np.arange(1, 400, dtype=float)
        w = P.p * P.q ** (k - 1)
        assert math.fsum(w * (a - b * (gamma * P.r) ** k)) == pytest.approx(0.0, abs=1e-9 * abs(a))

    @pytest.mark.parametrize("tau", [1, 2, 5, 12])
    def test_fee_constants_match_direct_present_value(self, tau):
        # payoff (gamma r)^tau minus the fees gamma p r^j paid before rounds j = 1..tau
        P, gamma = CLASSICAL, 0.97
        a, b = smp.fee_constants(P, gamma)
        fees = math.fsum(gamma**j * P.p * P.r**j for j in range(1, tau + 1))
        assert a - b * (gamma * P.r) ** tau == pytest.approx((gamma * P.r) ** tau - fees, rel=1e-12)

    def test_fee_constants_singular_point(self):
        with pytest.raises(DomainError):
            smp.fee_constants(CLASSICAL, 0.5)
