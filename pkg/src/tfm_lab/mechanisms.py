"""Fee mechanism presets and bidding strategies.

A mechanism is a triple of allocation, payment, and burning rules.  Four
presets are shipped: first-price auctions, EIP-1559, the tipless variant of
EIP-1559, and the no-fee mechanism that just lets the producer pick its
favourite block.  Payment and burning always see the full bid vector, so
rules that depend on losing bids stay expressible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .core import (
    Block,
    KnapsackBlockset,
    Money,
    Scenario,
    Transaction,
    UnknownTransactionError,
    bp_value,
)

FPA = "fpa"
EIP1559 = "eip1559"
TIPLESS = "tipless"
TRIVIAL = "trivial"

_PRESETS = (FPA, EIP1559, TIPLESS, TRIVIAL)


class Eligibility(Enum):
    """Which transactions the producer may place in a block at all."""

    FREE = "free"
    BASE_FEE_GATED = "base_fee_gated"


class Allocation(Enum):
    REVENUE_MAX = "revenue_max"
    STANDARD = "standard"
    CONSONANT = "consonant"


class ExcessivelyLowBaseFeeError(ValueError):
    """The reserve is so low that every clearing transaction cannot fit in
    one feasible block; the standard allocation is undefined there."""

    def __init__(self, base_fee, total_size, max_total_size):
        super().__init__(
            f"base fee {base_fee} is excessively low: clearing transactions "
            f"total size {total_size} > capacity {max_total_size}; use the "
            f"consonant allocation for this instance"
        )


class UnsupportedInstanceError(ValueError):
    """The operation is only defined for a narrower class of inputs."""


@dataclass(frozen=True, slots=True)
class Mechanism:
    """One of the shipped fee mechanism presets.

    preset       one of "fpa", "eip1559", "tipless", "trivial"
    base_fee     per-size-unit reserve, required by eip1559/tipless
    eligibility  whether below-reserve transactions may be included at all
    allocation   which block the mechanism tells the producer to build
    """

    preset: str
    base_fee: Money | None = None
    eligibility: Eligibility = Eligibility.FREE
    allocation: Allocation = Allocation.CONSONANT

    def __post_init__(self):
        if self.preset not in _PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.preset in (EIP1559, TIPLESS):
            if not isinstance(self.base_fee, int) or isinstance(self.base_fee, bool):
                raise ValueError(f"{self.preset} needs an integer base fee")
            if self.base_fee < 0:
                raise ValueError("base fee must be >= 0")
            if self.allocation is Allocation.REVENUE_MAX:
                raise ValueError(f"{self.preset} supports standard or consonant allocation")
        else:
            if self.base_fee is not None:
                raise ValueError(f"{self.preset} takes no base fee")
            if self.eligibility is not Eligibility.FREE:
                raise ValueError(f"{self.preset} has no reserve to gate on")
            if self.preset == FPA and self.allocation is Allocation.STANDARD:
                raise ValueError("fpa supports revenue_max or consonant allocation")
            if self.preset == TRIVIAL and self.allocation is not Allocation.CONSONANT:
                raise ValueError("trivial always lets the producer pick its argmax")

    @staticmethod
    def fpa(allocation: Allocation = Allocation.REVENUE_MAX) -> "Mechanism":
        return Mechanism(FPA, None, Eligibility.FREE, allocation)

    @staticmethod
    def eip1559(
        base_fee: Money,
        eligibility: Eligibility = Eligibility.FREE,
        allocation: Allocation = Allocation.STANDARD,
    ) -> "Mechanism":
        return Mechanism(EIP1559, base_fee, eligibility, allocation)

    @staticmethod
    def tipless(
        base_fee: Money,
        eligibility: Eligibility = Eligibility.FREE,
        allocation: Allocation = Allocation.STANDARD,
    ) -> "Mechanism":
        return Mechanism(TIPLESS, base_fee, eligibility, allocation)

    @staticmethod
    def trivial() -> "Mechanism":
        return Mechanism(TRIVIAL, None, Eligibility.FREE, Allocation.CONSONANT)

    def reserve(self, tx: Transaction) -> Money:
        """Reserve price for one transaction: base fee times its size."""
        if self.base_fee is None:
            return 0
        return self.base_fee * tx.size


def _require_bid(bids: Mapping[int, Money], tx_id) -> Money:
    try:
        bid = bids[tx_id]
    except KeyError:
        raise UnknownTransactionError(tx_id) from None
    if not isinstance(bid, int) or isinstance(bid, bool) or bid < 0:
        raise ValueError(f"bid for tx {tx_id} must be a non-negative integer")
    return bid


def payment(mech: Mechanism, block: Block, bids: Mapping[int, Money], scenario: Scenario) -> dict[int, Money]:
    """Per-transaction charges for the block's members.

    Never exceeds the member's own bid, so a user is charged only what it
    offered (individual rationality against the bid).
    """
    out = {}
    for t in block.txs:
        bid = _require_bid(bids, t)
        if mech.preset in (FPA, EIP1559):
            out[t] = bid
        elif mech.preset == TIPLESS:
            out[t] = min(bid, mech.reserve(scenario.tx(t)))
        else:
            out[t] = 0
    return out


def burn(mech: Mechanism, block: Block, bids: Mapping[int, Money], scenario: Scenario) -> Money:
    """Money destroyed when this block is produced under these bids."""
    if mech.preset in (EIP1559, TIPLESS):
        return sum(mech.reserve(scenario.tx(t)) for t in block.txs)
    return 0


def bps(block: Block, bids: Mapping[int, Money], scenario: Scenario, mech: Mechanism) -> Money:
    """Block producer surplus: private value plus fee income minus burn."""
    pays = payment(mech, block, bids, scenario)
    return (
        bp_value(block, scenario.bp_valuation)
        + sum(pays.values())
        - burn(mech, block, bids, scenario)
    )


def eligible(mech: Mechanism, tx: Transaction, bid: Money) -> bool:
    """Whether the producer is allowed to include the transaction at all."""
    if mech.eligibility is Eligibility.FREE:
        return True
    return bid >= mech.reserve(tx)


def is_base_fee_excessively_low(
    base_fee: Money, scenario: Scenario, bids: Mapping[int, Money]
) -> bool:
    """True when the clearing transactions cannot all fit in one block.

    Defined for knapsack blocksets: compares the total size of transactions
    bidding at least their reserve against the capacity.
    """
    blockset = scenario.blockset
    if not isinstance(blockset, KnapsackBlockset):
        raise UnsupportedInstanceError(
            "excessively-low test needs a knapsack blockset with a size cap"
        )
    candidates = blockset.candidate_ids
    ids = candidates if candidates is not None else scenario.ids()
    total = 0
    for t in ids:
        tx = scenario.tx(t)
        if _require_bid(bids, t) >= base_fee * tx.size:
            total += tx.size
    return total > blockset.max_total_size


def recommended_block(
    mech: Mechanism,
    bids: Mapping[int, Money],
    scenario: Scenario,
    *,
    budget: int | None = None,
) -> Block:
    """The block the mechanism's allocation rule tells the producer to build."""
    from . import solver

    if mech.preset == TRIVIAL or mech.allocation is Allocation.CONSONANT:
        return solver.bps_argmax(bids, scenario, mech, budget=budget)

    if mech.preset == FPA:
        # revenue_max: the block with the largest total of its own bids.
        blocks = solver.enumerate_blocks(scenario, budget=budget)
        best = None
        best_rev = None
        for b in blocks:
            rev = sum(_require_bid(bids, t) for t in b.txs)
            key = solver.canonical_key(b)
            if best is None or rev > best_rev or (rev == best_rev and key < solver.canonical_key(best)):
                best, best_rev = b, rev
        return best

    if mech.preset == EIP1559:
        blockset = scenario.blockset
        if not isinstance(blockset, KnapsackBlockset):
            raise UnsupportedInstanceError(
                "standard eip1559 allocation needs a knapsack blockset; "
                "use the consonant allocation for explicit blocksets"
            )
        candidates = blockset.candidate_ids
        ids = candidates if candidates is not None else scenario.ids()
        clearing = [
            t for t in ids if _require_bid(bids, t) >= mech.reserve(scenario.tx(t))
        ]
        total = sum(scenario.tx(t).size for t in clearing)
        if total > blockset.max_total_size:
            raise ExcessivelyLowBaseFeeError(
                mech.base_fee, total, blockset.max_total_size
            )
        return Block(tuple(sorted(clearing)))

    # tipless standard: among feasible blocks whose members all clear the
    # reserve, take the one with the largest total size.
    elig = _eligible_ids(mech, bids, scenario)
    blocks = solver.enumerate_blocks(scenario, eligible=elig, budget=budget)
    best = None
    best_sz = None
    for b in blocks:
        if any(
            _require_bid(bids, t) < mech.reserve(scenario.tx(t)) for t in b.txs
        ):
            continue
        sz = sum(scenario.tx(t).size for t in b.txs)
        key = solver.canonical_key(b)
        if best is None or sz > best_sz or (sz == best_sz and key < solver.canonical_key(best)):
            best, best_sz = b, sz
    return best


def _eligible_ids(mech, bids, scenario):
    """Eligibility filter for enumeration, or None when everything goes."""
    if mech.eligibility is Eligibility.FREE:
        return None
    return frozenset(
        tx.tx_id
        for tx in scenario.transactions
        if eligible(mech, tx, _require_bid(bids, tx.tx_id))
    )


@dataclass(frozen=True, slots=True)
class Truthful:
    """Bid the private value."""


@dataclass(frozen=True, slots=True)
class CappedAtReserve:
    """Bid the private value, capped at the transaction's reserve price."""

    base_fee: Money


@dataclass(frozen=True, slots=True)
class FixedOffset:
    """Bid the private value shifted by a constant, clamped at zero."""

    delta: Money


BiddingStrategy = Truthful | CappedAtReserve | FixedOffset


def strategy_bid(strategy: BiddingStrategy, valuation: Money, tx: Transaction) -> Money:
    """The bid the strategy recommends for one transaction at one value."""
    match strategy:
        case Truthful():
            return valuation
        case CappedAtReserve(base_fee=r):
            return min(valuation, r * tx.size)
        case FixedOffset(delta=d):
            return max(valuation + d, 0)
    raise TypeError(f"unsupported strategy {strategy!r}")


def apply_strategy(
    strategy: BiddingStrategy,
    scenario: Scenario,
    valuations: Mapping[int, Money] | None = None,
) -> dict[int, Money]:
    """Bid vector obtained by applying the strategy to every transaction.

    The valuations default to the ones recorded in the scenario; pass an
    override mapping to probe counterfactual values.
    """
    out = {}
    for tx in scenario.transactions:
        v = tx.valuation if valuations is None else valuations[tx.tx_id]
        if v < 0:
            raise ValueError(f"valuation for tx {tx.tx_id} must be >= 0")
        out[tx.tx_id] = strategy_bid(strategy, v, tx)
    return out
