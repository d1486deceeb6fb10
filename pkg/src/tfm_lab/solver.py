"""Producer-side block selection by exhaustive search.

Every feasible block is enumerated (against a configurable budget) and the
surplus-maximizing one is returned under a fixed canonical order: shorter
blocks first, then lexicographic on the id sequence.  The canonical order is
what makes tie-breaking deterministic and bid-independent everywhere else in
the package.  A knapsack dynamic program provides an independent route to
the same block for separable instances.
"""

from __future__ import annotations

import os
from itertools import permutations
from typing import Mapping

from .core import (
    AdditiveValuation,
    Block,
    ExplicitBlockset,
    KnapsackBlockset,
    Money,
    PassiveValuation,
    Scenario,
    bp_value,
)
from .mechanisms import (
    EIP1559,
    FPA,
    TIPLESS,
    TRIVIAL,
    Mechanism,
    UnsupportedInstanceError,
    _eligible_ids,
    _require_bid,
)

DEFAULT_BUDGET = 1 << 20
PERMUTATION_CAP = 8
BUDGET_ENV_VAR = "TFMLAB_BUDGET"


class EnumerationBudgetError(RuntimeError):
    """Enumerating the blockset would exceed the block budget."""

    def __init__(self, budget):
        super().__init__(
            f"blockset enumeration exceeds the budget of {budget} blocks; "
            f"raise it via the budget argument or {BUDGET_ENV_VAR}"
        )
        self.budget = budget


class NoFeasibleBlockError(ValueError):
    """The transaction appears in no feasible block."""

    def __init__(self, tx_id):
        super().__init__(f"transaction {tx_id} appears in no feasible block")
        self.tx_id = tx_id


def resolve_budget(budget: int | None) -> int:
    """Explicit argument, else the TFMLAB_BUDGET env var, else the default."""
    if budget is not None:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        return budget
    env = os.environ.get(BUDGET_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{BUDGET_ENV_VAR} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{BUDGET_ENV_VAR} must be >= 1")
        return value
    return DEFAULT_BUDGET


def canonical_key(block: Block):
    """Sort key of the canonical block order: length, then id sequence."""
    return (len(block.txs), block.txs)


def enumerate_blocks(
    scenario: Scenario,
    *,
    eligible: frozenset[int] | None = None,
    budget: int | None = None,
) -> tuple[Block, ...]:
    """All feasible blocks, optionally restricted to eligible transactions.

    Results are cached on the scenario per eligibility filter; the budget is
    re-checked on cache hits so a tighter limit still errors.
    """
    budget = resolve_budget(budget)
    cache = scenario._enum_cache
    if eligible in cache:
        blocks = cache[eligible]
        if len(blocks) > budget:
            raise EnumerationBudgetError(budget)
        return blocks

    blockset = scenario.blockset
    if isinstance(blockset, ExplicitBlockset):
        blocks = tuple(
            b
            for b in blockset.blocks
            if eligible is None or all(t in eligible for t in b.txs)
        )
        if len(blocks) > budget:
            raise EnumerationBudgetError(budget)
    else:
        blocks = _enumerate_knapsack(scenario, blockset, eligible, budget)
    cache[eligible] = blocks
    return blocks


def _enumerate_knapsack(scenario, blockset, eligible, budget):
    ids = blockset.candidate_ids
    if ids is None:
        ids = scenario.ids()
    ids = sorted(t for t in ids if eligible is None or t in eligible)
    sizes = [scenario.tx(t).size for t in ids]
    cap = blockset.max_total_size

    subsets = [()]
    chosen = []

    def grow(start, remaining):
        for j in range(start, len(ids)):
            if sizes[j] <= remaining:
                chosen.append(ids[j])
                subsets.append(tuple(chosen))
                if len(subsets) > budget:
                    raise EnumerationBudgetError(budget)
                grow(j + 1, remaining - sizes[j])
                chosen.pop()

    grow(0, cap)

    if not blockset.enumerate_permutations:
        return tuple(Block(s) for s in subsets)

    blocks = []
    for s in subsets:
        if len(s) > PERMUTATION_CAP:
            raise UnsupportedInstanceError(
                f"permutation mode supports blocks of at most {PERMUTATION_CAP} "
                f"transactions, found a feasible block of {len(s)}"
            )
        for p in permutations(s):
            blocks.append(Block(p))
            if len(blocks) > budget:
                raise EnumerationBudgetError(budget)
    return tuple(blocks)


def _per_tx_contribution(
    mech: Mechanism, bids: Mapping[int, Money], scenario: Scenario
) -> dict[int, Money]:
    """Fee income minus burn attributable to one included transaction."""
    out = {}
    for tx in scenario.transactions:
        bid = _require_bid(bids, tx.tx_id)
        if mech.preset == FPA:
            out[tx.tx_id] = bid
        elif mech.preset == EIP1559:
            out[tx.tx_id] = bid - mech.reserve(tx)
        elif mech.preset == TIPLESS:
            out[tx.tx_id] = min(bid, mech.reserve(tx)) - mech.reserve(tx)
        else:
            out[tx.tx_id] = 0
    return out


def bps_argmax_detail(
    bids: Mapping[int, Money],
    scenario: Scenario,
    mech: Mechanism,
    *,
    budget: int | None = None,
):
    """(argmax block, its surplus, all surplus-tied blocks).

    The argmax is the canonical-first block among the exact-integer maximum;
    the tied tuple preserves enumeration order.
    """
    elig = _eligible_ids(mech, bids, scenario)
    blocks = enumerate_blocks(scenario, eligible=elig, budget=budget)
    contrib = _per_tx_contribution(mech, bids, scenario)
    valuation = scenario.bp_valuation

    if isinstance(valuation, AdditiveValuation):
        mu = valuation.values
        weight = {t: c + mu.get(t, 0) for t, c in contrib.items()}

        def score(b):
            total = 0
            for t in b.txs:
                total += weight[t]
            return total

    elif isinstance(valuation, PassiveValuation):
        const = valuation.constant

        def score(b):
            total = const
            for t in b.txs:
                total += contrib[t]
            return total

    else:

        def score(b):
            total = bp_value(b, valuation)
            for t in b.txs:
                total += contrib[t]
            return total

    best = None
    best_score = None
    best_key = None
    tied = []
    for b in blocks:
        s = score(b)
        if best is None or s > best_score:
            best, best_score, best_key = b, s, canonical_key(b)
            tied = [b]
        elif s == best_score:
            tied.append(b)
            k = canonical_key(b)
            if k < best_key:
                best, best_key = b, k
    return best, best_score, tuple(tied)


def bps_argmax(
    bids: Mapping[int, Money],
    scenario: Scenario,
    mech: Mechanism,
    *,
    budget: int | None = None,
) -> Block:
    """The feasible block with maximum producer surplus, canonical-first."""
    best, _, _ = bps_argmax_detail(bids, scenario, mech, budget=budget)
    return best


def bps_argmax_additive_dp(
    bids: Mapping[int, Money], scenario: Scenario, mech: Mechanism
) -> Block:
    """Knapsack route to the surplus argmax for separable instances.

    Requires an additive or passive producer valuation and a knapsack
    blockset without permutations.  Returns the identical block to the
    exhaustive search, including canonical tie-breaking: each capacity cell
    keeps the best (weight, canonical key) pair, and extending a partial
    solution by later ids preserves the key order.
    """
    blockset = scenario.blockset
    if not isinstance(blockset, KnapsackBlockset):
        raise UnsupportedInstanceError("dynamic program needs a knapsack blockset")
    if blockset.enumerate_permutations:
        raise UnsupportedInstanceError("dynamic program does not cover permutation mode")
    valuation = scenario.bp_valuation
    if isinstance(valuation, AdditiveValuation):
        mu = valuation.values
    elif isinstance(valuation, PassiveValuation):
        mu = {}
    else:
        raise UnsupportedInstanceError(
            "dynamic program needs an additive or passive producer valuation"
        )

    elig = _eligible_ids(mech, bids, scenario)
    ids = blockset.candidate_ids
    if ids is None:
        ids = scenario.ids()
    ids = sorted(t for t in ids if elig is None or t in elig)
    contrib = _per_tx_contribution(mech, bids, scenario)
    cap = blockset.max_total_size

    # dp[c] = best (weight, canonical key) over selections of total size <= c
    dp = [(0, (0, ()))] * (cap + 1)
    for t in ids:
        size = scenario.tx(t).size
        if size > cap:
            continue
        w = contrib[t] + mu.get(t, 0)
        for c in range(cap, size - 1, -1):
            prev_w, prev_key = dp[c - size]
            cand = (prev_w + w, (prev_key[0] + 1, prev_key[1] + (t,)))
            cur = dp[c]
            if cand[0] > cur[0] or (cand[0] == cur[0] and cand[1] < cur[1]):
                dp[c] = cand
    return Block(dp[cap][1][1])


def max_marginal_value(
    tx_id, scenario: Scenario, *, budget: int | None = None
) -> Money:
    """Largest value the producer loses by deleting the transaction from a
    feasible block that contains it (order of the rest preserved).

    Needs a downward-closed blockset so the deletion stays feasible; that is
    automatic for knapsack blocksets and verified for explicit ones.
    """
    blocks = enumerate_blocks(scenario, budget=budget)
    explicit_members = (
        set(scenario.blockset.blocks)
        if isinstance(scenario.blockset, ExplicitBlockset)
        else None
    )
    valuation = scenario.bp_valuation
    best = None
    for b in blocks:
        if tx_id not in b.txs:
            continue
        rest = b.without(tx_id)
        if explicit_members is not None and rest not in explicit_members:
            raise UnsupportedInstanceError(
                f"marginal value needs a downward-closed blockset; deleting "
                f"tx {tx_id} from {b.txs} leaves an infeasible block"
            )
        gap = bp_value(b, valuation) - bp_value(rest, valuation)
        if best is None or gap > best:
            best = gap
    if best is None:
        raise NoFeasibleBlockError(tx_id)
    return best
