import math

import numpy as np
import pytest

from steinmac.channels import (
    BudgetLaw,
    ChannelClass,
    CostBudget,
    CostModel,
    Dmmac,
    GgMac,
    MarkerSet,
    ToggleWitness,
    admissible,
    cost_budget,
    find_markers,
)
from steinmac.errors import (
    BlocklengthTooSmall,
    CostBudgetExceeded,
    LengthMismatch,
    MarkerMismatch,
)
from steinmac.prob import Pmf, kl_divergence, marginal
from steinmac.schemes import (
    RandomizedDecider,
    Scheme,
    build_full_sparse_scheme,
    build_local_scheme,
    build_scheme_for_class,
    build_sparse_full_scheme,
    build_sparse_scheme,
    class_exponent,
    derandomize,
    gamma_schedule,
)


def noisy_sparse_kernel():
    k = np.zeros((2, 2, 3))
    k[0, 0] = [0.6, 0.4, 0.0]
    k[0, 1] = [0.0, 0.7, 0.3]
    k[1, 0] = [0.0, 0.5, 0.5]
    k[1, 1] = [0.0, 0.1, 0.9]
    return Dmmac(k)


def full_kernel():
    return Dmmac(np.full((2, 2, 2), 0.5))


def hand_scheme(cls, k=2, n=10):
    """Witness symbols chosen pairwise distinct so slicing mistakes show."""
    w1 = ToggleWitness(off_input=2, on_input=1, partner_pilot=3, marker_output=7)
    w2 = ToggleWitness(off_input=5, on_input=4, partner_pilot=6, marker_output=8)
    markers = {
        ChannelClass.SPARSE: MarkerSet(w1, w2),
        ChannelClass.SPARSE_FULL: MarkerSet(w1, None),
        ChannelClass.FULL_SPARSE: MarkerSet(None, w2),
    }[cls]
    half = Pmf([0.5, 0.5])
    return Scheme(
        cls=cls,
        n=n,
        k=k,
        mu=0.2,
        ref_v=half,
        ref_u1=half,
        ref_u2=half,
        markers=markers,
        p_marker1=0.6,
        p_marker2=0.3,
    )


TYPICAL = np.array([0, 1] * 5)
ATYPICAL = np.zeros(10, dtype=int)


class TestEncoders:
    def test_sparse_layout(self):
        s = hand_scheme(ChannelClass.SPARSE)
        x1 = s.encode1(TYPICAL)
        assert list(x1[:2]) == [1, 1]      # own on-symbol
        assert list(x1[2:4]) == [6, 6]     # partner pilot for sensor 2
        assert not x1[4:].any()
        assert list(s.encode1(ATYPICAL)[:2]) == [2, 2]
        x2 = s.encode2(TYPICAL)
        assert list(x2[:2]) == [3, 3]      # pilot while sensor 1 signals
        assert list(x2[2:4]) == [4, 4]
        assert not x2[4:].any()
        assert list(s.encode2(ATYPICAL)[2:4]) == [5, 5]

    def test_sparse_full_layout(self):
        s = hand_scheme(ChannelClass.SPARSE_FULL)
        x1 = s.encode1(TYPICAL)
        assert list(x1[:2]) == [1, 1]
        assert not x1[2:].any()
        x2 = s.encode2(ATYPICAL)
        # sensor 2 never checks typicality here, it only holds the pilot
        assert list(x2[:2]) == [3, 3]
        assert not x2[2:].any()

    def test_full_sparse_layout(self):
        s = hand_scheme(ChannelClass.FULL_SPARSE)
        x2 = s.encode2(TYPICAL)
        assert list(x2[:2]) == [4, 4]
        assert not x2[2:].any()
        x1 = s.encode1(ATYPICAL)
        assert list(x1[:2]) == [6, 6]
        assert not x1[2:].any()

    def test_length_checked(self):
        s = hand_scheme(ChannelClass.SPARSE)
        with pytest.raises(LengthMismatch):
            s.encode1(np.zeros(9, dtype=int))


class TestDecision:
    def test_accepts_when_both_markers_land(self):
        s = hand_scheme(ChannelClass.SPARSE)
        y = np.zeros(10, dtype=int)
        y[1] = 7
        y[2] = 8
        assert s.decide(y, TYPICAL) == 0

    def test_rejects_on_missing_marker_either_block(self):
        s = hand_scheme(ChannelClass.SPARSE)
        y = np.zeros(10, dtype=int)
        y[1] = 7
        assert s.decide(y, TYPICAL) == 1
        y = np.zeros(10, dtype=int)
        y[3] = 8
        assert s.decide(y, TYPICAL) == 1

    def test_marker_outside_block_does_not_count(self):
        s = hand_scheme(ChannelClass.SPARSE)
        y = np.zeros(10, dtype=int)
        y[5] = 7
        y[6] = 8
        assert s.decide(y, TYPICAL) == 1

    def test_rejects_atypical_side_information(self):
        s = hand_scheme(ChannelClass.SPARSE)
        y = np.zeros(10, dtype=int)
        y[0] = 7
        y[2] = 8
        assert s.decide(y, ATYPICAL) == 1

    def test_single_signal_classes_use_first_block(self):
        s = hand_scheme(ChannelClass.FULL_SPARSE)
        y = np.zeros(10, dtype=int)
        y[0] = 8
        assert s.decide(y, TYPICAL) == 0
        y = np.zeros(10, dtype=int)
        y[2] = 8
        assert s.decide(y, TYPICAL) == 1

    def test_local_scheme_ignores_channel_output(self):
        s = build_local_scheme(Pmf([0.5, 0.5]), 0.2, 10)
        y = np.arange(10)
        assert s.decide(y, TYPICAL) == 0
        assert s.decide(y, ATYPICAL) == 1

    def test_length_checked(self):
        s = hand_scheme(ChannelClass.SPARSE)
        with pytest.raises(LengthMismatch):
            s.decide(np.zeros(9, dtype=int), TYPICAL)


class TestAcceptProbGivenFlags:
    def test_sparse_products(self):
        s = hand_scheme(ChannelClass.SPARSE, k=1)
        assert s.accept_prob_given_flags(True, True, True) == pytest.approx(
            0.6 * 0.3, abs=1e-15
        )
        assert s.accept_prob_given_flags(False, True, True) == 0.0
        assert s.accept_prob_given_flags(True, False, True) == 0.0
        assert s.accept_prob_given_flags(True, True, False) == 0.0

    def test_block_length_compounds(self):
        s = hand_scheme(ChannelClass.SPARSE_FULL, k=2)
        assert s.accept_prob_given_flags(True, False, True) == pytest.approx(
            1 - 0.4**2, abs=1e-15
        )

    def test_local_is_indicator_of_t3(self):
        s = build_local_scheme(Pmf([0.5, 0.5]), 0.2, 10)
        assert s.accept_prob_given_flags(False, False, True) == 1.0
        assert s.accept_prob_given_flags(True, True, False) == 0.0


class TestBuilders:
    def setup_method(self):
        self.cm = CostModel.unit(2, 2, BudgetLaw.power(1.0, 0.5))
        self.ch = noisy_sparse_kernel()
        self.markers = find_markers(self.ch, ChannelClass.SPARSE)
        self.budget = cost_budget(self.cm, 100)
        self.half = Pmf([0.5, 0.5])

    def test_sparse_happy_path(self):
        s = build_sparse_scheme(
            self.ch, self.markers, self.budget, 0.2, self.half, self.half, self.half
        )
        assert s.n == 100 and s.k == 5
        assert s.p_marker1 == pytest.approx(0.6)
        assert s.p_marker2 == pytest.approx(0.6)

    def test_class_mismatch_rejected(self):
        with pytest.raises(ValueError, match="classifies as"):
            build_sparse_scheme(
                full_kernel(),
                self.markers,
                self.budget,
                0.2,
                self.half,
                self.half,
                self.half,
            )
        with pytest.raises(ValueError, match="classifies as"):
            build_sparse_full_scheme(
                self.ch, self.markers, self.budget, 0.2, self.half, self.half
            )

    def test_missing_witness_rejected(self):
        lone = MarkerSet(self.markers.sensor1, None)
        with pytest.raises(MarkerMismatch):
            build_sparse_scheme(
                self.ch, lone, self.budget, 0.2, self.half, self.half, self.half
            )

    def test_stale_witness_rejected(self):
        bad = MarkerSet(
            ToggleWitness(0, 1, 0, 0),
            self.markers.sensor2,
        )
        with pytest.raises(MarkerMismatch):
            build_sparse_scheme(
                self.ch, bad, self.budget, 0.2, self.half, self.half, self.half
            )

    def test_degenerate_budget_rejected(self):
        bad = CostBudget(n=100, k_max1=1, k_max2=1, tau_max=4, k=0)
        with pytest.raises(BlocklengthTooSmall):
            build_sparse_scheme(
                self.ch, self.markers, bad, 0.2, self.half, self.half, self.half
            )
        cramped = CostBudget(n=10, k_max1=10, k_max2=10, tau_max=40, k=5)
        with pytest.raises(BlocklengthTooSmall):
            build_sparse_scheme(
                self.ch, self.markers, cramped, 0.2, self.half, self.half, self.half
            )

    def test_mu_bounds(self):
        for mu in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError, match="mu"):
                build_local_scheme(self.half, mu, 10)
            with pytest.raises(ValueError, match="mu"):
                build_sparse_scheme(
                    self.ch,
                    self.markers,
                    self.budget,
                    mu,
                    self.half,
                    self.half,
                    self.half,
                )

    def test_mirror_builders(self):
        det = (1,)
        rand = (-1, 1)
        sf = _fading(det, rand)
        fs = _fading(rand, det)
        m_sf = find_markers(sf, ChannelClass.SPARSE_FULL)
        m_fs = find_markers(fs, ChannelClass.FULL_SPARSE)
        s1 = build_sparse_full_scheme(
            sf, m_sf, self.budget, 0.2, self.half, self.half
        )
        assert s1.signals1 and not s1.signals2
        assert s1.p_marker2 is None
        s2 = build_full_sparse_scheme(
            fs, m_fs, self.budget, 0.2, self.half, self.half
        )
        assert s2.signals2 and not s2.signals1
        assert s2.p_marker1 is None


def _fading(s1_states, s2_states):
    k = np.zeros((2, 2, 6))
    for i, x1 in enumerate((-1, 1)):
        for j, x2 in enumerate((-1, 1)):
            for s1 in s1_states:
                for s2 in s2_states:
                    for z in (0, 1):
                        y = s1 * x1 + s2 * x2 + z
                        k[i, j, y + 2] += 1.0 / (
                            len(s1_states) * len(s2_states) * 2
                        )
    return Dmmac(k)


class TestBuildForClass:
    def setup_method(self):
        rng = np.random.default_rng(8)
        p = rng.random((2, 2, 2))
        self.p = p / p.sum()
        self.cm = CostModel.unit(2, 2, BudgetLaw.power(1.0, 0.5))

    def test_full_needs_no_channel(self):
        s = build_scheme_for_class(ChannelClass.FULL, None, self.p, None, 50, 0.2)
        assert s.k == 0 and s.cls is ChannelClass.FULL

    def test_marker_class_needs_channel_and_costs(self):
        with pytest.raises(ValueError, match="cost model"):
            build_scheme_for_class(
                ChannelClass.SPARSE, None, self.p, None, 100, 0.2
            )

    def test_continuous_channel_rejected(self):
        mac = GgMac(2.0, 1.0, 1.0, 1.0)
        with pytest.raises(TypeError, match="discrete"):
            build_scheme_for_class(
                ChannelClass.SPARSE, mac, self.p, self.cm, 100, 0.2
            )

    def test_cost_table_size_checked(self):
        cm = CostModel.unit(3, 2, BudgetLaw.power(1.0, 0.5))
        with pytest.raises(ValueError, match="alphabet"):
            build_scheme_for_class(
                ChannelClass.SPARSE, noisy_sparse_kernel(), self.p, cm, 100, 0.2
            )

    def test_expensive_marker_symbols_rejected(self):
        # witnesses force symbol 2 whose cost dwarfs the budget arithmetic,
        # which only ever counted the cheapest nonzero symbol
        k = np.zeros((3, 2, 2))
        k[0, 0] = [0.5, 0.5]
        k[1, 0] = [0.6, 0.4]
        k[2, 0] = [0.0, 1.0]
        k[0, 1] = [0.5, 0.5]
        k[1, 1] = [0.5, 0.5]
        k[2, 1] = [0.3, 0.7]
        ch = Dmmac(k)
        law = BudgetLaw.power(1.0, 0.5)
        cm = CostModel([0.0, 1.0, 100.0], [0.0, 1.0], law, law)
        with pytest.raises(CostBudgetExceeded):
            build_scheme_for_class(ChannelClass.SPARSE, ch, self.p, cm, 100, 0.2)

    def test_sparse_end_to_end(self):
        s = build_scheme_for_class(
            ChannelClass.SPARSE, noisy_sparse_kernel(), self.p, self.cm, 100, 0.2
        )
        assert s.k == 5
        assert np.allclose(s.ref_v.probs, marginal(self.p, 2).probs)


class TestEncoderAdmissibility:
    def test_outputs_fit_budget(self):
        cm = CostModel.unit(2, 2, BudgetLaw.power(1.0, 0.5))
        p = np.full((2, 2, 2), 0.125)
        s = build_scheme_for_class(
            ChannelClass.SPARSE, noisy_sparse_kernel(), p, cm, 100, 0.2
        )
        rng = np.random.default_rng(3)
        for _ in range(20):
            u1 = rng.integers(0, 2, size=100)
            u2 = rng.integers(0, 2, size=100)
            x1, x2 = s.encode1(u1), s.encode2(u2)
            assert admissible(x1, 1, cm, 100)
            assert admissible(x2, 2, cm, 100)
            assert np.count_nonzero(x1) <= 2 * s.k
            assert np.count_nonzero(x2) <= 2 * s.k


class TestDecisionStructure:
    def test_within_block_permutation_invariance(self):
        cm = CostModel.unit(2, 2, BudgetLaw.power(1.0, 0.5))
        p = np.full((2, 2, 2), 0.125)
        s = build_scheme_for_class(
            ChannelClass.SPARSE, noisy_sparse_kernel(), p, cm, 20, 0.2
        )
        assert s.k == 2
        rng = np.random.default_rng(11)
        for _ in range(200):
            y = rng.integers(0, 3, size=20)
            v = rng.integers(0, 2, size=20)
            base = s.decide(y, v)
            shuffled = y.copy()
            shuffled[[0, 1]] = shuffled[[1, 0]]
            shuffled[[2, 3]] = shuffled[[3, 2]]
            assert s.decide(shuffled, v) == base
            tail = y.copy()
            tail[4:] = rng.integers(0, 3, size=16)
            assert s.decide(tail, v) == base

    def test_marker_hit_rate_matches_closed_form(self):
        cm = CostModel.unit(2, 2, BudgetLaw.power(1.0, 0.5))
        p = np.full((2, 2, 2), 0.125)
        ch = noisy_sparse_kernel()
        s = build_scheme_for_class(ChannelClass.SPARSE, ch, p, cm, 20, 0.2)
        w = s.markers.sensor1
        row = ch.kernel[w.on_input, w.partner_pilot]
        rng = np.random.default_rng(21)
        trials = 20_000
        draws = rng.choice(row.size, size=(trials, s.k), p=row)
        est = float(np.mean(np.any(draws == w.marker_output, axis=1)))
        target = 1 - (1 - s.p_marker1) ** s.k
        se = math.sqrt(target * (1 - target) / trials)
        assert abs(est - target) <= 3 * se


class TestClassExponent:
    def test_product_instance_splits_into_marginal_divergences(self):
        p1, p2, pv = [0.3, 0.7], [0.6, 0.4], [0.2, 0.8]
        q1, q2, qv = [0.5, 0.5], [0.4, 0.6], [0.5, 0.5]
        p = np.einsum("i,j,k->ijk", p1, p2, pv)
        q = np.einsum("i,j,k->ijk", q1, q2, qv)
        d1 = kl_divergence(Pmf(p1), Pmf(q1))
        d2 = kl_divergence(Pmf(p2), Pmf(q2))
        dv = kl_divergence(Pmf(pv), Pmf(qv))
        assert class_exponent(ChannelClass.FULL, p, q) == pytest.approx(
            dv, abs=1e-9
        )
        assert class_exponent(ChannelClass.SPARSE, p, q) == pytest.approx(
            d1 + d2 + dv, abs=1e-8
        )
        assert class_exponent(ChannelClass.SPARSE_FULL, p, q) == pytest.approx(
            d1 + dv, abs=1e-8
        )
        assert class_exponent(ChannelClass.FULL_SPARSE, p, q) == pytest.approx(
            d2 + dv, abs=1e-8
        )

    def test_more_constraints_never_lower_the_exponent(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            p = rng.random((2, 3, 2)) + 0.02
            p /= p.sum()
            q = rng.random((2, 3, 2)) + 0.02
            q /= q.sum()
            full = class_exponent(ChannelClass.FULL, p, q)
            sf = class_exponent(ChannelClass.SPARSE_FULL, p, q)
            fs = class_exponent(ChannelClass.FULL_SPARSE, p, q)
            sp = class_exponent(ChannelClass.SPARSE, p, q)
            assert full <= sf + 1e-9
            assert full <= fs + 1e-9
            assert sf <= sp + 1e-9
            assert fs <= sp + 1e-9

    def test_identical_hypotheses_give_zero(self):
        p = np.full((2, 2, 2), 0.125)
        for cls in ChannelClass:
            assert class_exponent(cls, p, p) == pytest.approx(0.0, abs=1e-12)


class TestDerandomization:
    def test_gamma_schedule_values(self):
        assert gamma_schedule(1) == pytest.approx(1 / math.log(3), abs=1e-15)
        vals = [gamma_schedule(n) for n in range(1, 1000)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        n = 10**6
        assert abs(math.log(gamma_schedule(n))) / n < 2e-5
        with pytest.raises(ValueError):
            gamma_schedule(0)

    def test_threshold_semantics(self):
        accept = derandomize(RandomizedDecider(lambda v, y: 0.6), 0.5)
        tie = derandomize(RandomizedDecider(lambda v, y: 0.5), 0.5)
        never = derandomize(RandomizedDecider(lambda v, y: 0.0), 0.5)
        v = np.zeros(4)
        y = np.zeros(4)
        assert accept(v, y) == 0
        assert tie(v, y) == 1
        assert never(v, y) == 1

    def test_probability_range_enforced(self):
        bad = RandomizedDecider(lambda v, y: 1.2)
        with pytest.raises(ValueError):
            bad(np.zeros(2), np.zeros(2))

    def test_gamma_range_enforced(self):
        d = RandomizedDecider(lambda v, y: 0.5)
        for gamma in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError):
                derandomize(d, gamma)

    def test_error_accounting_against_exhaustive_law(self):
        # on a toy two-point space the derandomized rule must obey
        # alpha' <= alpha + gamma and beta' <= beta / gamma
        rng = np.random.default_rng(41)
        vs = [np.array([0]), np.array([1])]
        ys = [np.array([0]), np.array([1])]
        for _ in range(50):
            table = rng.random((2, 2))
            dec = RandomizedDecider(lambda v, y, t=table: t[int(v[0]), int(y[0])])
            pvy = rng.random((2, 2))
            pvy /= pvy.sum()
            qvy = rng.random((2, 2))
            qvy /= qvy.sum()
            alpha = sum(
                pvy[i, j] * (1 - table[i, j]) for i in range(2) for j in range(2)
            )
            beta = sum(
                qvy[i, j] * table[i, j] for i in range(2) for j in range(2)
            )
            for gamma in (0.1, 0.5, 0.9):
                rule = derandomize(dec, gamma)
                accept = np.array(
                    [[rule(vs[i], ys[j]) == 0 for j in range(2)] for i in range(2)]
                )
                alpha_d = float((pvy * ~accept).sum())
                beta_d = float((qvy * accept).sum())
                assert alpha_d <= alpha + gamma + 1e-12
                assert beta_d <= beta / gamma + 1e-12
