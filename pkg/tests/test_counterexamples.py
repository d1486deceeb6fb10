"""Unit tests for the counterexample constructions, pinned to hand-derived
expected values so the builders cannot drift."""

from fractions import Fraction

import pytest

from tfm_lab import (
    AdditiveValuation,
    AlreadyTrivialError,
    Allocation,
    Block,
    ConstructionReplayError,
    Eligibility,
    FixedOffset,
    KnapsackBlockset,
    Mechanism,
    PassiveValuation,
    Scenario,
    SingleMindedValuation,
    Transaction,
    Truthful,
    UnsupportedInstanceError,
    bps_argmax,
    construct_welfare_gap,
    construct_zero_bid,
    construct_zero_bid_single_minded,
    eip1559_underbid_demo,
    welfare,
)


def one_tx_scenario(bid=5):
    txs = (Transaction(0, 1, 5, bid),)
    return Scenario(txs, PassiveValuation(0), KnapsackBlockset(1))


class TestZeroBid:
    def test_fpa_frozen_values(self):
        sc = one_tx_scenario()
        w = construct_zero_bid(Mechanism.fpa(), sc, sc.submitted_bids())
        assert w.charged_tx == 0
        assert w.original_payment == 5
        assert w.total_bids == 5
        assert w.burn_at_zero == 0
        # singleton value 0 plus all bids 5 plus burn 0 plus 1
        assert w.modified_scenario.bp_valuation == AdditiveValuation({0: 6})
        assert w.zero_bid_block == Block((0,))
        assert w.utility_gain == 5

    def test_eip1559_frozen_values(self):
        sc = one_tx_scenario()
        mech = Mechanism.eip1559(2)
        w = construct_zero_bid(mech, sc, sc.submitted_bids())
        assert w.original_payment == 5
        assert w.total_bids == 5
        assert w.burn_at_zero == 2
        assert w.modified_scenario.bp_valuation == AdditiveValuation({0: 8})
        assert w.utility_gain == 5

    def test_tipless_gain_is_the_reserve_payment(self):
        sc = one_tx_scenario()
        w = construct_zero_bid(Mechanism.tipless(2), sc, sc.submitted_bids())
        assert w.original_payment == 2
        assert w.utility_gain == 2

    def test_trivial_has_nothing_to_break(self):
        sc = one_tx_scenario()
        with pytest.raises(AlreadyTrivialError):
            construct_zero_bid(Mechanism.trivial(), sc, sc.submitted_bids())

    def test_all_zero_bids_have_nothing_to_break(self):
        sc = one_tx_scenario(bid=0)
        with pytest.raises(AlreadyTrivialError):
            construct_zero_bid(Mechanism.fpa(), sc, sc.submitted_bids())

    def test_lowest_charged_tx_is_targeted(self):
        txs = (Transaction(0, 1, 4, 4), Transaction(1, 1, 7, 7))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(2))
        w = construct_zero_bid(Mechanism.fpa(), sc, sc.submitted_bids())
        assert w.charged_tx == 0
        assert w.total_bids == 11
        assert w.utility_gain == 4

    def test_fixed_point_holds_under_original_bids(self):
        txs = (Transaction(0, 1, 4, 4), Transaction(1, 2, 7, 7))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(3))
        bids = sc.submitted_bids()
        mech = Mechanism.eip1559(2)
        w = construct_zero_bid(mech, sc, bids)
        assert bps_argmax(bids, w.modified_scenario, mech) == w.original_block

    def test_zero_bids_differ_only_at_target(self):
        txs = (Transaction(0, 1, 4, 4), Transaction(1, 1, 7, 7))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(2))
        w = construct_zero_bid(Mechanism.fpa(), sc, sc.submitted_bids())
        assert dict(w.zero_bids) == {0: 0, 1: 7}

    def test_gated_eligibility_blocks_the_construction(self):
        # with inclusion gated on the reserve, a zero bid makes the target
        # ineligible, so no producer valuation can force it back in
        sc = one_tx_scenario()
        mech = Mechanism.eip1559(2, Eligibility.BASE_FEE_GATED, Allocation.CONSONANT)
        with pytest.raises(ConstructionReplayError):
            construct_zero_bid(mech, sc, sc.submitted_bids())

    def test_preserves_original_scenario(self):
        sc = one_tx_scenario()
        construct_zero_bid(Mechanism.fpa(), sc, sc.submitted_bids())
        assert sc.bp_valuation == PassiveValuation(0)
        assert sc.tx(0).bid == 5


class TestZeroBidSingleMinded:
    def test_fpa_frozen_values(self):
        sc = one_tx_scenario()
        w = construct_zero_bid_single_minded(Mechanism.fpa(), sc, sc.submitted_bids())
        assert w.variant == "single_minded"
        # spread 0 plus bids 5 plus burn 0 plus 1
        assert w.modified_scenario.bp_valuation == SingleMindedValuation(
            frozenset({Block((0,))}), 6
        )
        assert w.utility_gain == 5

    def test_unique_argmax_means_no_tie_reliance(self):
        txs = (Transaction(0, 1, 4, 4), Transaction(1, 1, 7, 7))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(2))
        mech = Mechanism.tipless(3)
        w = construct_zero_bid_single_minded(mech, sc, sc.submitted_bids())
        assert w.zero_bid_block == w.original_block

    def test_spread_covers_rich_table_valuations(self):
        from tfm_lab import TableValuation

        txs = (Transaction(0, 1, 4, 4), Transaction(1, 1, 7, 7))
        table = TableValuation({Block((1,)): 9, Block((0, 1)): 2})
        sc = Scenario(txs, table, KnapsackBlockset(2))
        w = construct_zero_bid_single_minded(Mechanism.fpa(), sc, sc.submitted_bids())
        # spread 9 plus bids 11 plus burn 0 plus 1
        assert w.modified_scenario.bp_valuation.value == 21


class TestWelfareGap:
    def test_half_frozen_values(self):
        gap = construct_welfare_gap(Mechanism.trivial(), Fraction(1, 2))
        assert gap.scenario.tx(0).valuation == 4
        assert gap.scenario.tx(1).valuation == 1
        assert gap.recommended == gap.bp_favored_block == Block((1,))
        assert gap.optimal == gap.user_favored_block == Block((0,))
        assert welfare(gap.recommended, gap.scenario) == 2
        assert welfare(gap.optimal, gap.scenario) == 4
        assert gap.ratio == Fraction(1, 2)

    def test_hundredth_frozen_values(self):
        gap = construct_welfare_gap(Mechanism.trivial(), Fraction(1, 100))
        assert gap.scenario.tx(0).valuation == 200
        assert gap.ratio == Fraction(1, 100)

    def test_rho_one_allowed(self):
        gap = construct_welfare_gap(Mechanism.trivial(), 1)
        assert gap.ratio <= 1

    def test_probe_values_double(self):
        gap = construct_welfare_gap(Mechanism.trivial(), Fraction(1, 2), probe_rounds=3)
        values = [v for v, _ in gap.probes]
        assert values == [4, 8, 16, 32]
        assert all(block == (1,) for _, block in gap.probes)

    def test_rho_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            construct_welfare_gap(Mechanism.trivial(), 0)
        with pytest.raises(ValueError):
            construct_welfare_gap(Mechanism.trivial(), Fraction(3, 2))

    def test_charging_mechanism_rejected(self):
        with pytest.raises(UnsupportedInstanceError):
            construct_welfare_gap(Mechanism.fpa(), Fraction(1, 2))

    def test_tipless_with_zero_bids_qualifies(self):
        mech = Mechanism.tipless(2, Eligibility.FREE, Allocation.CONSONANT)
        gap = construct_welfare_gap(
            mech, Fraction(1, 3), strategy=FixedOffset(-10**9)
        )
        assert gap.ratio <= Fraction(1, 3)
        assert gap.burn_on_favored == 2


class TestUnderbidDemo:
    def test_frozen_world_numbers(self):
        demo = eip1559_underbid_demo()
        passive, staked, knife = demo.worlds
        assert passive.surplus_included == -1 and not passive.included
        assert staked.surplus_included == 1 and staked.included
        assert staked.user_utility == 1
        assert knife.surplus_included == 0 and not knife.included
        assert knife.knife_edge
        assert demo.baseline.included and demo.baseline.user_utility == 0
        assert demo.baseline.bid == 2

    def test_narrative_mentions_the_tie(self):
        text = eip1559_underbid_demo().narrative()
        assert "knife edge" in text
        assert "cannot observe" in text
