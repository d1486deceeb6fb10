"""Unit tests for the mechanism presets: payments, burn, allocation rules,
eligibility, and bidding strategies."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfm_lab import (
    EMPTY_BLOCK,
    AdditiveValuation,
    Allocation,
    Block,
    CappedAtReserve,
    Eligibility,
    ExcessivelyLowBaseFeeError,
    ExplicitBlockset,
    FixedOffset,
    KnapsackBlockset,
    Mechanism,
    PassiveValuation,
    Scenario,
    Transaction,
    Truthful,
    UnknownTransactionError,
    UnsupportedInstanceError,
    apply_strategy,
    bps,
    bps_argmax,
    burn,
    eligible,
    is_base_fee_excessively_low,
    payment,
    recommended_block,
    strategy_bid,
)


def scenario_with(txs, bp=None, cap=None):
    total = sum(t.size for t in txs)
    return Scenario(
        tuple(txs), bp or PassiveValuation(0), KnapsackBlockset(cap or total)
    )


TWO_TXS = (Transaction(0, 1, 5, 4), Transaction(1, 2, 7, 7))


class TestPayments:
    def test_fpa_charges_the_bid(self):
        sc = scenario_with(TWO_TXS)
        assert payment(Mechanism.fpa(), Block((0, 1)), {0: 4, 1: 7}, sc) == {0: 4, 1: 7}

    def test_eip1559_charges_the_bid(self):
        sc = scenario_with(TWO_TXS)
        mech = Mechanism.eip1559(2)
        assert payment(mech, Block((0, 1)), {0: 4, 1: 7}, sc) == {0: 4, 1: 7}

    def test_tipless_charges_bid_capped_at_reserve(self):
        sc = scenario_with(TWO_TXS)
        mech = Mechanism.tipless(2)
        # reserves: tx0 size 1 -> 2, tx1 size 2 -> 4
        assert payment(mech, Block((0, 1)), {0: 4, 1: 3}, sc) == {0: 2, 1: 3}

    def test_trivial_charges_nothing(self):
        sc = scenario_with(TWO_TXS)
        assert payment(Mechanism.trivial(), Block((0, 1)), {0: 4, 1: 7}, sc) == {0: 0, 1: 0}

    def test_only_members_are_charged(self):
        sc = scenario_with(TWO_TXS)
        assert payment(Mechanism.fpa(), Block((1,)), {0: 4, 1: 7}, sc) == {1: 7}

    def test_missing_bid_is_an_error(self):
        sc = scenario_with(TWO_TXS)
        with pytest.raises(UnknownTransactionError):
            payment(Mechanism.fpa(), Block((0,)), {}, sc)

    def test_negative_bid_is_an_error(self):
        sc = scenario_with(TWO_TXS)
        with pytest.raises(ValueError):
            payment(Mechanism.fpa(), Block((0,)), {0: -1}, sc)


class TestBurn:
    def test_fpa_and_trivial_burn_nothing(self):
        sc = scenario_with(TWO_TXS)
        assert burn(Mechanism.fpa(), Block((0, 1)), {0: 4, 1: 7}, sc) == 0
        assert burn(Mechanism.trivial(), Block((0, 1)), {0: 4, 1: 7}, sc) == 0

    def test_reserve_burn_scales_with_size(self):
        sc = scenario_with(TWO_TXS)
        assert burn(Mechanism.eip1559(3), Block((0, 1)), {0: 4, 1: 7}, sc) == 9
        assert burn(Mechanism.tipless(3), Block((1,)), {0: 4, 1: 7}, sc) == 6
        assert burn(Mechanism.eip1559(3), EMPTY_BLOCK, {}, sc) == 0


class TestBps:
    def test_bps_is_value_plus_fees_minus_burn(self):
        sc = scenario_with(TWO_TXS, bp=AdditiveValuation({0: 10}))
        mech = Mechanism.eip1559(2)
        # value 10, fees 4 + 7, burn 2 + 4
        assert bps(Block((0, 1)), {0: 4, 1: 7}, sc, mech) == 10 + 11 - 6

    def test_empty_block_bps_is_producer_value(self):
        sc = scenario_with(TWO_TXS, bp=PassiveValuation(3))
        assert bps(EMPTY_BLOCK, {}, sc, Mechanism.fpa()) == 3


class TestEligibility:
    def test_free_admits_everything(self):
        mech = Mechanism.eip1559(5)
        assert eligible(mech, Transaction(0, 2, 1), 0)

    def test_gated_requires_the_reserve(self):
        mech = Mechanism.eip1559(5, Eligibility.BASE_FEE_GATED)
        tx = Transaction(0, 2, 20)
        assert not eligible(mech, tx, 9)
        assert eligible(mech, tx, 10)

    def test_gated_consonant_excludes_under_reserve_txs(self):
        sc = scenario_with(
            (Transaction(0, 1, 9, 9), Transaction(1, 1, 1, 1)),
            bp=AdditiveValuation({0: 5, 1: 5}),
        )
        mech = Mechanism.eip1559(2, Eligibility.BASE_FEE_GATED, Allocation.CONSONANT)
        # tx1 bids 1 < reserve 2, so no block may contain it
        assert recommended_block(mech, sc.submitted_bids(), sc) == Block((0,))


class TestExcessivelyLowBaseFee:
    def test_detects_oversubscribed_clearing_set(self):
        txs = (Transaction(0, 2, 9, 9), Transaction(1, 2, 9, 9))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(3))
        assert is_base_fee_excessively_low(1, sc, sc.submitted_bids())
        assert not is_base_fee_excessively_low(5, sc, sc.submitted_bids())

    def test_needs_a_knapsack_blockset(self):
        txs = (Transaction(0, 1, 5, 5),)
        sc = Scenario(txs, PassiveValuation(0), ExplicitBlockset((EMPTY_BLOCK, Block((0,)))))
        with pytest.raises(UnsupportedInstanceError):
            is_base_fee_excessively_low(1, sc, sc.submitted_bids())

    def test_standard_allocation_refuses_to_run(self):
        txs = (Transaction(0, 2, 9, 9), Transaction(1, 2, 9, 9))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(3))
        with pytest.raises(ExcessivelyLowBaseFeeError):
            recommended_block(Mechanism.eip1559(1), sc.submitted_bids(), sc)


class TestRecommendedBlock:
    def test_fpa_revenue_max_takes_highest_bid_total(self):
        txs = (Transaction(0, 2, 5, 5), Transaction(1, 1, 4, 4), Transaction(2, 1, 3, 3))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(2))
        # [1, 2] collects 7, beating [0] at 5
        assert recommended_block(Mechanism.fpa(), sc.submitted_bids(), sc) == Block((1, 2))

    def test_eip1559_standard_is_the_clearing_set(self):
        txs = (Transaction(0, 1, 5, 5), Transaction(1, 1, 1, 1), Transaction(2, 1, 2, 2))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(3))
        assert recommended_block(Mechanism.eip1559(2), sc.submitted_bids(), sc) == Block((0, 2))

    def test_eip1559_standard_needs_knapsack(self):
        txs = (Transaction(0, 1, 5, 5),)
        sc = Scenario(txs, PassiveValuation(0), ExplicitBlockset((EMPTY_BLOCK, Block((0,)))))
        with pytest.raises(UnsupportedInstanceError):
            recommended_block(Mechanism.eip1559(2), sc.submitted_bids(), sc)

    def test_tipless_standard_takes_largest_clearing_block(self):
        txs = (Transaction(0, 2, 9, 9), Transaction(1, 1, 2, 2), Transaction(2, 1, 1, 1))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(3))
        # tx2 bids under its reserve, so the largest all-clearing block is [0, 1]
        assert recommended_block(Mechanism.tipless(2), sc.submitted_bids(), sc) == Block((0, 1))

    def test_tipless_standard_prefers_larger_total_size_over_canonical(self):
        txs = (Transaction(0, 1, 9, 9), Transaction(1, 2, 4, 4))
        sc = Scenario(txs, PassiveValuation(0), KnapsackBlockset(2))
        # [1] has total size 2 > 1, despite [0] coming first canonically
        assert recommended_block(Mechanism.tipless(2), sc.submitted_bids(), sc) == Block((1,))

    def test_trivial_picks_the_producer_favorite(self):
        txs = (Transaction(0, 1, 9, 9), Transaction(1, 1, 1, 1))
        sc = scenario_with(txs, bp=AdditiveValuation({1: 3}))
        assert recommended_block(Mechanism.trivial(), sc.submitted_bids(), sc) == Block((1,))

    def test_consonant_matches_surplus_argmax(self):
        txs = (Transaction(0, 1, 5, 5), Transaction(1, 2, 7, 6))
        sc = scenario_with(txs, bp=AdditiveValuation({0: 1}))
        for mech in (
            Mechanism.fpa(Allocation.CONSONANT),
            Mechanism.eip1559(2, Eligibility.FREE, Allocation.CONSONANT),
            Mechanism.tipless(2, Eligibility.FREE, Allocation.CONSONANT),
        ):
            bids = sc.submitted_bids()
            assert recommended_block(mech, bids, sc) == bps_argmax(bids, sc, mech)


@st.composite
def clear_of_boundary(draw):
    """Scenarios where nobody bids exactly its reserve under a passive producer."""
    n = draw(st.integers(1, 4))
    base_fee = draw(st.integers(1, 4))
    txs = []
    for i in range(n):
        size = draw(st.integers(1, 2))
        bid = draw(st.integers(0, 12).filter(lambda b, s=size: b != base_fee * s))
        txs.append(Transaction(i, size, bid, bid))
    sc = Scenario(tuple(txs), PassiveValuation(0), KnapsackBlockset(sum(t.size for t in txs)))
    return sc, base_fee


@given(clear_of_boundary())
@settings(max_examples=120, deadline=None)
def test_eip1559_standard_coincides_with_consonant_off_boundary(case):
    # With a passive producer and all capacity available, the clearing set is
    # the unique surplus maximizer whenever no bid sits exactly at its reserve.
    sc, base_fee = case
    bids = sc.submitted_bids()
    standard = recommended_block(Mechanism.eip1559(base_fee), bids, sc)
    consonant = recommended_block(
        Mechanism.eip1559(base_fee, Eligibility.FREE, Allocation.CONSONANT), bids, sc
    )
    assert set(standard.txs) == set(consonant.txs)


class TestStrategies:
    def test_truthful(self):
        assert strategy_bid(Truthful(), 7, Transaction(0, 2, 7)) == 7

    def test_capped_at_reserve(self):
        tx = Transaction(0, 2, 9)
        assert strategy_bid(CappedAtReserve(3), 9, tx) == 6
        assert strategy_bid(CappedAtReserve(3), 5, tx) == 5

    def test_fixed_offset_clamps_at_zero(self):
        tx = Transaction(0, 1, 2)
        assert strategy_bid(FixedOffset(-3), 2, tx) == 0
        assert strategy_bid(FixedOffset(2), 2, tx) == 4

    def test_apply_strategy_defaults_to_scenario_valuations(self):
        sc = scenario_with(TWO_TXS)
        assert apply_strategy(CappedAtReserve(2), sc) == {0: 2, 1: 4}

    def test_apply_strategy_with_overrides(self):
        sc = scenario_with(TWO_TXS)
        assert apply_strategy(Truthful(), sc, {0: 1, 1: 0}) == {0: 1, 1: 0}

    def test_apply_strategy_rejects_negative_values(self):
        sc = scenario_with(TWO_TXS)
        with pytest.raises(ValueError):
            apply_strategy(Truthful(), sc, {0: -1, 1: 0})


class TestMechanismValidation:
    def test_base_fee_presets_require_base_fee(self):
        with pytest.raises(ValueError):
            Mechanism("eip1559", None, Eligibility.FREE, Allocation.STANDARD)

    def test_fpa_rejects_base_fee(self):
        with pytest.raises(ValueError):
            Mechanism("fpa", 2, Eligibility.FREE, Allocation.REVENUE_MAX)

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError):
            Mechanism("vcg", None, Eligibility.FREE, Allocation.CONSONANT)

    def test_reserve_scales_with_size(self):
        mech = Mechanism.tipless(3)
        assert mech.reserve(Transaction(0, 2, 5)) == 6
        assert Mechanism.fpa().reserve(Transaction(0, 2, 5)) == 0
