"""Brute-force incentive and welfare auditors.

Each auditor quantifies over a finite bid/valuation grid and hunts for
profitable deviations by exhaustive replay, so a PASS verdict always means
"no violation found at this grid resolution" and a FAIL verdict comes with
a witness cell that reproduces the gain exactly when re-simulated.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Mapping, Sequence

from .core import Block, Money, Scenario, bp_value, welfare
from .mechanisms import (
    EIP1559,
    TIPLESS,
    Allocation,
    BiddingStrategy,
    CappedAtReserve,
    Mechanism,
    UnsupportedInstanceError,
    apply_strategy,
    bps,
    is_base_fee_excessively_low,
    payment,
    recommended_block,
    strategy_bid,
)
from .scenario_io import GridSpec as Grid
from .scenario_io import scenario_digest
from .solver import (
    NoFeasibleBlockError,
    bps_argmax_detail,
    canonical_key,
    enumerate_blocks,
    max_marginal_value,
)

PASS = "PASS"
FAIL = "FAIL"


class ProfileSpaceError(ValueError):
    """The exhaustive other-bid profile space is too large to sweep."""

    def __init__(self, n, limit):
        super().__init__(
            f"scenario has {n} transactions; exhaustive deviation audits sweep "
            f"grid^(n-1) other-bid profiles and are limited to n <= {limit}. "
            f"Pass profile_samples to audit a seeded sample instead"
        )


@dataclass(frozen=True)
class Witness:
    """One profitable deviation found by an audit.

    For user-deviation audits, cell_bids holds the other users' bids and the
    gain is the deviating user's utility improvement.  For producer audits,
    cell_bids holds the whole bid cell and the gain is the surplus the
    producer forgoes by following the recommendation.
    """

    scenario_digest: str
    tx_id: int
    valuation: Money
    recommended_bid: Money
    deviation_bid: Money
    utility_gain: Money
    cell_bids: tuple[tuple[int, Money], ...]


def witness_sort_key(w: Witness):
    return (
        w.scenario_digest,
        w.tx_id,
        -w.utility_gain,
        w.valuation,
        w.recommended_bid,
        w.deviation_bid,
        w.cell_bids,
    )


@dataclass(frozen=True)
class BoundCheck:
    """Per-transaction outcome of the approximate-incentive bound audit."""

    scenario_digest: str
    tx_id: int
    nu: Money
    max_regret: Money
    within_bound: bool
    overbid_violations: int
    below_range_violations: int


@dataclass(frozen=True)
class TieConflict:
    """Tie-breaking between surplus-tied blocks admits no fixed order."""

    scenario_digest: str
    cycle: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class AuditReport:
    kind: str
    verdict: str
    max_regret: Money
    witnesses: tuple[Witness, ...]
    cells_checked: int
    bound_checks: tuple[BoundCheck, ...] | None = None
    tie_conflicts: tuple[TieConflict, ...] = ()
    mode: str = "exhaustive"
    sampling_seed: int | None = None


def _run_ordered(fn, tasks, jobs):
    """Apply fn to tasks, returning results in task order regardless of the
    worker count, so merged reports never depend on scheduling."""
    if jobs <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _finalize_witnesses(witnesses, max_witnesses):
    witnesses.sort(key=witness_sort_key)
    return tuple(witnesses[:max_witnesses])


def _precheck_standard_eip1559(mech, scenario, grid):
    """Standard eip1559 allocation errors on excessively low base fees; make
    sure no cell of this grid can reach one before sweeping."""
    if mech.preset == EIP1559 and mech.allocation is Allocation.STANDARD:
        top = {t: grid.max_value for t in scenario.ids()}
        if is_base_fee_excessively_low(mech.base_fee, scenario, top):
            raise UnsupportedInstanceError(
                "some grid cell makes the base fee excessively low for the "
                "standard eip1559 allocation; enlarge capacity or audit the "
                "consonant variant"
            )


def _detect_cycle(edges):
    """Return one cycle (as a tuple of nodes) if the precedence digraph has
    any, else None."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = dict.fromkeys(edges, WHITE)
    for node in edges:
        if color.get(node, WHITE) != WHITE:
            continue
        stack = [(node, iter(sorted(edges.get(node, ()), key=lambda b: canonical_key(b))))]
        color[node] = GRAY
        path = [node]
        while stack:
            current, it = stack[-1]
            advanced = False
            for nxt in it:
                c = color.get(nxt, WHITE)
                if c == GRAY:
                    i = path.index(nxt)
                    return tuple(path[i:] + [nxt])
                if c == WHITE:
                    color[nxt] = GRAY
                    path.append(nxt)
                    stack.append(
                        (nxt, iter(sorted(edges.get(nxt, ()), key=lambda b: canonical_key(b))))
                    )
                    advanced = True
                    break
            if not advanced:
                color[current] = BLACK
                path.pop()
                stack.pop()
    return None


def audit_bpic(
    mech: Mechanism,
    scenarios: Sequence[Scenario],
    bid_grid: Grid,
    *,
    jobs: int = 1,
    budget: int | None = None,
    max_witnesses: int = 1000,
) -> AuditReport:
    """Check the allocation rule against the producer's own interests.

    For every grid bid cell the recommendation must attain the exact maximum
    surplus (any strictly better block becomes a witness), and across cells
    the tie-breaking between surplus-tied blocks must be explainable by some
    fixed order on blocks (checked as acyclicity of observed preferences).
    """
    points = bid_grid.points()
    witnesses = []
    conflicts = []
    cells = 0
    max_gain = 0

    for scenario in scenarios:
        _precheck_standard_eip1559(mech, scenario, bid_grid)
        digest = scenario_digest(scenario)
        ids = scenario.ids()
        n = len(ids)

        def run_chunk(first):
            chunk_witnesses = []
            chunk_edges = {}
            chunk_cells = 0
            chunk_max = 0
            if first is None:
                combos = [()]
            else:
                combos = ((first,) + r for r in product(points, repeat=n - 1))
            for combo in combos:
                bids = dict(zip(ids, combo))
                rec = recommended_block(mech, bids, scenario, budget=budget)
                best, best_score, tied = bps_argmax_detail(
                    bids, scenario, mech, budget=budget
                )
                chunk_cells += 1
                if any(rec == b for b in tied):
                    for b in tied:
                        if b != rec:
                            chunk_edges.setdefault(rec, set()).add(b)
                    continue
                rec_score = bps(rec, bids, scenario, mech)
                gain = best_score - rec_score
                chunk_max = max(chunk_max, gain)
                diff = sorted(set(best.txs) - set(rec.txs)) or sorted(
                    set(rec.txs) - set(best.txs)
                )
                tx_id = diff[0] if diff else (best.txs or rec.txs)[0]
                chunk_witnesses.append(
                    Witness(
                        scenario_digest=digest,
                        tx_id=tx_id,
                        valuation=scenario.tx(tx_id).valuation,
                        recommended_bid=bids[tx_id],
                        deviation_bid=bids[tx_id],
                        utility_gain=gain,
                        cell_bids=tuple(sorted(bids.items())),
                    )
                )
            return chunk_witnesses, chunk_edges, chunk_cells, chunk_max

        tasks = list(points) if n >= 1 else [None]
        results = _run_ordered(run_chunk, tasks, jobs)

        edges = {}
        for ws, es, c, m in results:
            witnesses.extend(ws)
            cells += c
            max_gain = max(max_gain, m)
            for node, succ in es.items():
                edges.setdefault(node, set()).update(succ)
        cycle = _detect_cycle(edges)
        if cycle is not None:
            conflicts.append(TieConflict(digest, tuple(b.txs for b in cycle)))

    verdict = PASS if not witnesses and not conflicts else FAIL
    return AuditReport(
        kind="bpic",
        verdict=verdict,
        max_regret=max_gain,
        witnesses=_finalize_witnesses(witnesses, max_witnesses),
        cells_checked=cells,
        tie_conflicts=tuple(conflicts),
    )


def _included_payment(mech, block, tx, bid):
    """The deviator's own charge when included; avoids building the full
    payment map in the audit hot loop (cross-checked against payment())."""
    if tx.tx_id not in block:
        return False, 0
    if mech.preset == TIPLESS:
        return True, min(bid, mech.reserve(tx))
    if mech.preset == "trivial":
        return True, 0
    return True, bid


def _deviation_table(mech, scenario, tx, base_bids, points, budget):
    """Map each candidate own-bid to (included, own payment) given the other
    users' bids."""
    table = {}

    def look(bid):
        got = table.get(bid)
        if got is None:
            bids = dict(base_bids)
            bids[tx.tx_id] = bid
            block = recommended_block(mech, bids, scenario, budget=budget)
            got = _included_payment(mech, block, tx, bid)
            table[bid] = got
        return got

    for b in points:
        look(b)
    return table, look


def _profiles_for(points, others, mode, samples, seed_text):
    if mode == "exhaustive":
        if others:
            return product(points, repeat=len(others))
        return [()]
    rng = random.Random(seed_text)
    return [tuple(rng.choice(points) for _ in others) for _ in range(samples)]


def audit_dsic(
    mech: Mechanism,
    strategy: BiddingStrategy,
    scenarios: Sequence[Scenario],
    grid: Grid,
    *,
    jobs: int = 1,
    budget: int | None = None,
    profile_samples: int | None = None,
    sampling_seed: int = 0,
    max_witnesses: int = 1000,
    exhaustive_limit: int = 5,
) -> AuditReport:
    """Hunt for a profitable unilateral bid deviation from the strategy.

    For every transaction, every grid valuation, and every grid profile of
    the other users' bids, the strategy bid's utility is compared against
    every grid deviation, with the producer following the allocation rule
    throughout.  Zero-gain deviations are not violations.
    """
    points = grid.points()
    witnesses = []
    cells = 0
    max_regret = 0
    sampled = profile_samples is not None

    for scenario in scenarios:
        n = len(scenario.ids())
        if n > exhaustive_limit and not sampled:
            raise ProfileSpaceError(n, exhaustive_limit)

    for scenario in scenarios:
        _precheck_standard_eip1559(mech, scenario, grid)
        digest = scenario_digest(scenario)
        ids = scenario.ids()

        tasks = []
        for t in ids:
            others = tuple(i for i in ids if i != t)
            if sampled:
                tasks.append((t, others, None))
            elif others:
                for first in points:
                    tasks.append((t, others, first))
            else:
                tasks.append((t, others, None))

        def run_task(task):
            t, others, first = task
            tx = scenario.tx(t)
            task_witnesses = []
            task_cells = 0
            task_regret = 0
            if sampled:
                profiles = _profiles_for(
                    points, others, "sampled", profile_samples,
                    f"{sampling_seed}:{digest}:{t}",
                )
            elif others and first is not None:
                rest = product(points, repeat=len(others) - 1)
                profiles = ((first,) + r for r in rest)
            else:
                profiles = [()]
            for profile in profiles:
                base = dict(zip(others, profile))
                table, look = _deviation_table(
                    mech, scenario, tx, base, points, budget
                )
                dev = [(b, table[b]) for b in points]
                for v in points:
                    sb = strategy_bid(strategy, v, tx)
                    inc0, pay0 = look(sb)
                    u0 = (v - pay0) if inc0 else 0
                    best_gain = 0
                    best_bid = None
                    for b, (inc, pay) in dev:
                        u = (v - pay) if inc else 0
                        if u - u0 > best_gain:
                            best_gain = u - u0
                            best_bid = b
                    task_cells += 1
                    if best_gain > 0:
                        task_regret = max(task_regret, best_gain)
                        task_witnesses.append(
                            Witness(
                                scenario_digest=digest,
                                tx_id=t,
                                valuation=v,
                                recommended_bid=sb,
                                deviation_bid=best_bid,
                                utility_gain=best_gain,
                                cell_bids=tuple(sorted(base.items())),
                            )
                        )
            return task_witnesses, task_cells, task_regret

        for ws, c, r in _run_ordered(run_task, tasks, jobs):
            witnesses.extend(ws)
            cells += c
            max_regret = max(max_regret, r)

    verdict = PASS if max_regret == 0 else FAIL
    return AuditReport(
        kind="dsic",
        verdict=verdict,
        max_regret=max_regret,
        witnesses=_finalize_witnesses(witnesses, max_witnesses),
        cells_checked=cells,
        mode="sampled" if sampled else "exhaustive",
        sampling_seed=sampling_seed if sampled else None,
    )


def audit_approx_dsic_bound(
    mech: Mechanism,
    scenarios: Sequence[Scenario],
    grid: Grid,
    *,
    jobs: int = 1,
    budget: int | None = None,
    profile_samples: int | None = None,
    sampling_seed: int = 0,
    max_witnesses: int = 1000,
    exhaustive_limit: int = 5,
) -> AuditReport:
    """Verify the bounded-regret guarantees of reserve-capped bidding.

    Under the consonant tipless mechanism (or consonant eip1559 when no grid
    cell makes the base fee excessively low), with every user bidding its
    value capped at the reserve: overbids never strictly help, bids more
    than the transaction's maximum marginal producer value below the capped
    bid never strictly help, and no deviation gains more than that marginal
    value.  Violations of any of the three are witnessed; lawful bounded
    regret is reported but is not a violation.
    """
    if mech.preset not in (TIPLESS, EIP1559) or mech.allocation is not Allocation.CONSONANT:
        raise UnsupportedInstanceError(
            "the bounded-regret audit covers the consonant tipless and "
            "consonant eip1559 presets"
        )
    if mech.preset == EIP1559:
        for scenario in scenarios:
            top = {t: grid.max_value for t in scenario.ids()}
            if is_base_fee_excessively_low(mech.base_fee, scenario, top):
                raise UnsupportedInstanceError(
                    "a grid cell can make the base fee excessively low; the "
                    "bounded-regret guarantee needs capacity for every "
                    "clearing set on the grid"
                )

    strategy = CappedAtReserve(mech.base_fee)
    points = grid.points()
    witnesses = []
    bound_checks = []
    cells = 0
    max_regret = 0
    sampled = profile_samples is not None
    violations = 0

    for scenario in scenarios:
        n = len(scenario.ids())
        if n > exhaustive_limit and not sampled:
            raise ProfileSpaceError(n, exhaustive_limit)

    for scenario in scenarios:
        digest = scenario_digest(scenario)
        ids = scenario.ids()
        nu = {}
        for t in ids:
            try:
                nu[t] = max_marginal_value(t, scenario, budget=budget)
            except NoFeasibleBlockError:
                nu[t] = 0  # never includable, so deviations never matter

        def run_tx(t):
            tx = scenario.tx(t)
            others = tuple(i for i in ids if i != t)
            profiles = _profiles_for(
                points,
                others,
                "sampled" if sampled else "exhaustive",
                profile_samples,
                f"{sampling_seed}:{digest}:{t}",
            )
            tx_witnesses = []
            tx_cells = 0
            tx_regret = 0
            overbid = 0
            below = 0
            bound_ok = True
            for profile in profiles:
                base = dict(zip(others, profile))
                table, look = _deviation_table(
                    mech, scenario, tx, base, points, budget
                )
                dev = [(b, table[b]) for b in points]
                for v in points:
                    sb = strategy_bid(strategy, v, tx)
                    inc0, pay0 = look(sb)
                    u0 = (v - pay0) if inc0 else 0
                    cell_best = 0
                    cell_bid = None
                    for b, (inc, pay) in dev:
                        u = (v - pay) if inc else 0
                        gain = u - u0
                        if gain > 0:
                            if b > sb:
                                overbid += 1
                                tx_witnesses.append(
                                    Witness(digest, t, v, sb, b, gain,
                                            tuple(sorted(base.items())))
                                )
                            if b < sb - nu[t]:
                                below += 1
                                tx_witnesses.append(
                                    Witness(digest, t, v, sb, b, gain,
                                            tuple(sorted(base.items())))
                                )
                            if gain > cell_best:
                                cell_best = gain
                                cell_bid = b
                    tx_cells += 1
                    tx_regret = max(tx_regret, cell_best)
                    if cell_best > nu[t]:
                        bound_ok = False
                        tx_witnesses.append(
                            Witness(digest, t, v, sb, cell_bid, cell_best,
                                    tuple(sorted(base.items())))
                        )
            check = BoundCheck(
                scenario_digest=digest,
                tx_id=t,
                nu=nu[t],
                max_regret=tx_regret,
                within_bound=bound_ok,
                overbid_violations=overbid,
                below_range_violations=below,
            )
            return tx_witnesses, tx_cells, tx_regret, check

        for ws, c, r, check in _run_ordered(run_tx, list(ids), jobs):
            witnesses.extend(ws)
            cells += c
            max_regret = max(max_regret, r)
            bound_checks.append(check)
            violations += check.overbid_violations + check.below_range_violations
            violations += 0 if check.within_bound else 1

    verdict = PASS if violations == 0 else FAIL
    return AuditReport(
        kind="approx-dsic",
        verdict=verdict,
        max_regret=max_regret,
        witnesses=_finalize_witnesses(witnesses, max_witnesses),
        cells_checked=cells,
        bound_checks=tuple(bound_checks),
        mode="sampled" if sampled else "exhaustive",
        sampling_seed=sampling_seed if sampled else None,
    )


@dataclass(frozen=True)
class WelfareEntry:
    scenario_digest: str
    recommended: Block
    welfare_recommended: Money
    optimal: Block
    welfare_optimal: Money
    ratio: Fraction | None
    degenerate: bool


@dataclass(frozen=True)
class WelfareReport:
    entries: tuple[WelfareEntry, ...]
    min_ratio: Fraction | None


def welfare_argmax(scenario: Scenario, *, budget: int | None = None) -> Block:
    """The feasible block with maximum welfare, canonical-first on ties."""
    best = None
    best_w = None
    best_key = None
    for b in enumerate_blocks(scenario, budget=budget):
        w = welfare(b, scenario)
        k = canonical_key(b)
        if best is None or w > best_w or (w == best_w and k < best_key):
            best, best_w, best_key = b, w, k
    return best


def audit_welfare_ratio(
    mech: Mechanism,
    strategy: BiddingStrategy,
    scenarios: Sequence[Scenario],
    *,
    budget: int | None = None,
) -> WelfareReport:
    """Exact welfare of the recommended block relative to the optimum.

    Bids follow the strategy applied to recorded valuations.  Ratios are
    exact rationals; a zero-welfare optimum yields ratio 1 when the
    recommendation matches it and a degenerate flag otherwise.
    """
    entries = []
    min_ratio = None
    for scenario in scenarios:
        digest = scenario_digest(scenario)
        bids = apply_strategy(strategy, scenario)
        rec = recommended_block(mech, bids, scenario, budget=budget)
        opt = welfare_argmax(scenario, budget=budget)
        w_rec = welfare(rec, scenario)
        w_opt = welfare(opt, scenario)
        degenerate = False
        if w_opt > 0:
            ratio = Fraction(w_rec, w_opt)
        elif w_rec == w_opt:
            ratio = Fraction(1)
        else:
            ratio = None
            degenerate = True
        entries.append(
            WelfareEntry(digest, rec, w_rec, opt, w_opt, ratio, degenerate)
        )
        if ratio is not None and (min_ratio is None or ratio < min_ratio):
            min_ratio = ratio
    return WelfareReport(tuple(entries), min_ratio)


def check_beta_commensurate(
    scenario: Scenario, beta: Fraction, *, budget: int | None = None
) -> bool:
    """Whether the producer's best private value covers beta times the best
    total user value over feasible blocks (exact rational comparison)."""
    beta = Fraction(beta)
    best_bp = None
    best_users = None
    for b in enumerate_blocks(scenario, budget=budget):
        pv = bp_value(b, scenario.bp_valuation)
        uv = sum(scenario.tx(t).valuation for t in b.txs)
        best_bp = pv if best_bp is None else max(best_bp, pv)
        best_users = uv if best_users is None else max(best_users, uv)
    return Fraction(best_bp) >= beta * best_users


def replay_dsic_witness(
    mech: Mechanism,
    strategy: BiddingStrategy,
    scenario: Scenario,
    witness: Witness,
    *,
    budget: int | None = None,
) -> Money:
    """Re-simulate one user-deviation witness cell; returns the exact gain."""
    tx = scenario.tx(witness.tx_id)
    base = dict(witness.cell_bids)
    sb = strategy_bid(strategy, witness.valuation, tx)
    if sb != witness.recommended_bid:
        raise ValueError(
            f"witness strategy bid {witness.recommended_bid} does not match "
            f"{sb} for value {witness.valuation}"
        )

    def utility(bid):
        bids = dict(base)
        bids[tx.tx_id] = bid
        block = recommended_block(mech, bids, scenario, budget=budget)
        if tx.tx_id not in block:
            return 0
        return witness.valuation - payment(mech, block, bids, scenario)[tx.tx_id]

    return utility(witness.deviation_bid) - utility(sb)


def replay_bpic_witness(
    mech: Mechanism,
    scenario: Scenario,
    witness: Witness,
    *,
    budget: int | None = None,
) -> Money:
    """Re-simulate one producer witness cell; returns the surplus gain of
    the best block over the recommendation."""
    bids = dict(witness.cell_bids)
    rec = recommended_block(mech, bids, scenario, budget=budget)
    best, best_score, _ = bps_argmax_detail(bids, scenario, mech, budget=budget)
    return best_score - bps(rec, bids, scenario, mech)
