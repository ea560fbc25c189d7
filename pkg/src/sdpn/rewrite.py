"""Rewriting place rewards into configuration rewards over branching cells.

For safe, acyclic, free-choice nets whose initially marked places have no
producers, the reward table on place sets can be rewritten level by level
along the cell order into an equivalent reward on transition sets.  Each
auxiliary level k rewards pairs (U, V): reach all places of U inside the
net restricted to the first k cells, then fire the transitions V of the
later cells.  Removing the topmost remaining cell pushes rewards backwards:
an entry either survives unchanged (its places are still producible by
earlier cells) or is pulled before each member transition of the removed
cell that produces part of it, swapping produced places for the member's
preconditions.

At level 0 only initially marked places remain, and summing the entries
whose place part is initially marked yields a reward on transition sets
that reproduces the payoff of every run via its fired-configuration
prefixes.  Under a constant deactivation set the expected payoff is then a
sum over the support of per-cell renormalized rate products, which is also
the closed form handed to the SMT backend.

Everything here works on supports only; the exponential domains are never
materialized.  Place and transition sets are bitmasks over the net's
interned indices while rewriting, converted to frozensets at the API
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import AssumptionViolated, InconsistentReward, NotSafc
from .net import Cell, CellOrder, RewardTable, Sdpn, format_rational, order_cells
from .semantics import DEFAULT_RUN_BUDGET, _sweep_runs_masks, check_deactivation


@dataclass(frozen=True)
class AuxReward:
    """Auxiliary reward at one rewriting level.

    ``entries`` maps (places U, transitions V) to a nonzero rational; V holds
    at most one transition per cell and U lives inside the level's place set.
    ``dropped`` counts contributions discarded because their place part left
    the level's place universe (such rewards are unrealizable at lower
    levels; on the worked examples they are exactly the conflicting ones).
    """

    level: int
    entries: dict[tuple[frozenset[str], frozenset[str]], Fraction]
    place_universe: frozenset[str]
    dropped: int = 0


class TransitionReward:
    """Reward on transition sets; every support key is a configuration."""

    __slots__ = ("_entries",)

    def __init__(self, entries: dict[frozenset[str], Fraction]):
        for key, value in entries.items():
            if value == 0:
                raise ValueError(f"zero entry for {sorted(key)}")
        self._entries = dict(entries)

    def items(self):
        return self._entries.items()

    def support(self) -> list[frozenset[str]]:
        return list(self._entries)

    def get(self, transitions: frozenset) -> Fraction:
        return self._entries.get(frozenset(transitions), Fraction(0))

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, TransitionReward) and self._entries == other._entries

    def __repr__(self):
        inner = ", ".join(
            f"{{{','.join(sorted(k))}}}:{format_rational(v)}"
            for k, v in sorted(self._entries.items(), key=lambda kv: sorted(kv[0]))
        )
        return f"TransitionReward([{inner}])"


def _require_safc(net: Sdpn) -> None:
    cls = net.classify()
    if not (cls.safe and cls.acyclic and cls.free_choice):
        raise NotSafc(
            "reward rewriting requires a safe, acyclic, free-choice net "
            f"(safe={cls.safe}, acyclic={cls.acyclic}, free_choice={cls.free_choice})"
        )
    if not cls.initial_no_predecessors:
        raise AssumptionViolated("an initially marked place has a producing transition")


def rewrite_rewards(net: Sdpn) -> tuple[list[AuxReward], TransitionReward]:
    """Rewrite the net's place rewards into a configuration reward.

    Returns the auxiliary levels from the full net down to level 0, followed
    by the final reward on transition sets.
    """
    _require_safc(net)
    order = order_cells(net)
    cells = order.cells
    m = len(cells)

    pbit = {p: 1 << i for i, p in enumerate(net.places)}
    tbit = {t.id: 1 << i for i, t in enumerate(net.transitions)}
    all_places = (1 << len(net.places)) - 1

    pre_mask = {t.id: sum(pbit[p] for p in t.pre) for t in net.transitions}
    post_mask = {t.id: sum(pbit[p] for p in t.post) for t in net.transitions}
    cell_post = []
    for c in cells:
        mask = 0
        for tid in c.transitions:
            mask |= post_mask[tid]
        cell_post.append(mask)

    universe: list[int] = []
    for k in range(m + 1):
        later = 0
        for j in range(k, m):
            later |= cell_post[j]
        early = 0
        for j in range(k):
            early |= cell_post[j]
        universe.append((all_places & ~later) | early)

    current: dict[tuple[int, int], Fraction] = {}
    for places, value in net.rewards.items():
        mask = sum(pbit[p] for p in places)
        current[(mask, 0)] = current.get((mask, 0), Fraction(0)) + value
    current = {k: v for k, v in current.items() if v != 0}

    levels: list[AuxReward] = [_aux_from_masks(net, m, current, universe[m], 0)]

    for k in range(m - 1, -1, -1):
        cell = cells[k]
        members = sorted(cell.transitions, key=net.transition_index)
        allowed = universe[k]
        nxt: dict[tuple[int, int], Fraction] = {}
        dropped = 0
        for (u, v), value in current.items():
            if u & ~allowed == 0:
                key = (u, v)
                nxt[key] = nxt.get(key, Fraction(0)) + value
            for tid in members:
                produced = post_mask[tid]
                if u & produced:
                    u2 = (u & ~produced) | pre_mask[tid]
                    if u2 & ~allowed:
                        dropped += 1
                        continue
                    key = (u2, v | tbit[tid])
                    nxt[key] = nxt.get(key, Fraction(0)) + value
        current = {key: val for key, val in nxt.items() if val != 0}
        levels.append(_aux_from_masks(net, k, current, allowed, dropped))

    m0_mask = sum(pbit[p] for p in net.m0.support())
    final: dict[int, Fraction] = {}
    for (u, v), value in current.items():
        if u & ~m0_mask == 0:
            final[v] = final.get(v, Fraction(0)) + value
    final = {k: v for k, v in final.items() if v != 0}

    tid_of_bit = {1 << i: t.id for i, t in enumerate(net.transitions)}
    entries = {
        frozenset(tid for bit, tid in tid_of_bit.items() if key & bit): value
        for key, value in final.items()
    }
    return levels, TransitionReward(entries)


def _aux_from_masks(
    net: Sdpn, level: int, masks: dict[tuple[int, int], Fraction], universe: int, dropped: int
) -> AuxReward:
    place_of_bit = {1 << i: p for i, p in enumerate(net.places)}
    tid_of_bit = {1 << i: t.id for i, t in enumerate(net.transitions)}
    entries = {}
    for (u, v), value in masks.items():
        places = frozenset(p for bit, p in place_of_bit.items() if u & bit)
        tids = frozenset(t for bit, t in tid_of_bit.items() if v & bit)
        entries[(places, tids)] = value
    places_u = frozenset(p for bit, p in place_of_bit.items() if universe & bit)
    return AuxReward(level=level, entries=entries, place_universe=places_u, dropped=dropped)


# ---------------------------------------------------------------------------
# configuration probabilities and values
# ---------------------------------------------------------------------------


def _cell_of_map(net: Sdpn) -> dict[str, frozenset[str]]:
    cached = getattr(net, "_sdpn_cell_of", None)
    if cached is not None:
        return cached
    from .net import compute_cells

    mapping: dict[str, frozenset[str]] = {}
    for cell in compute_cells(net):
        for tid in cell.transitions:
            mapping[tid] = cell.transitions
    net._sdpn_cell_of = mapping
    return mapping


def config_probability(net: Sdpn, deactivated: Iterable[str], transitions: Iterable[str]) -> Fraction:
    """Probability that a run fires at least the given transition set.

    Zero whenever the set touches the deactivation set; otherwise the product
    of each member's rate over the total remaining rate of its cell, with the
    all-deactivated cell contributing zero (the 0/0 convention).
    """
    d = check_deactivation(net, deactivated)
    cell_of = _cell_of_map(net)
    prob = Fraction(1)
    for tid in transitions:
        if tid in d:
            return Fraction(0)
        denom = sum((net.transition(u).rate for u in cell_of[tid] if u not in d), Fraction(0))
        if denom == 0:
            return Fraction(0)
        prob *= net.transition(tid).rate / denom
    return prob


def value_via_rewrite(net: Sdpn, reward: TransitionReward, deactivated: Iterable[str]) -> Fraction:
    """Expected payoff from the configuration reward: sum of probability-weighted entries."""
    d = check_deactivation(net, deactivated)
    total = Fraction(0)
    for transitions, value in reward.items():
        p = config_probability(net, d, transitions)
        if p:
            total += p * value
    return total


# ---------------------------------------------------------------------------
# symbolic value expression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """One fired transition inside its cell: rate over remaining cell rate."""

    transition: str
    rate: Fraction
    controllable: bool
    cell: tuple[tuple[str, Fraction, bool], ...]  # (id, rate, controllable) per member


@dataclass(frozen=True)
class Term:
    coefficient: Fraction
    factors: tuple[Factor, ...]


@dataclass(frozen=True)
class ValueExpression:
    """Closed form of the expected payoff as a function of active/inactive bits.

    Evaluating at a deactivation set D multiplies, per term, each factor's
    indicator-weighted rate over its cell's remaining rate (0/0 reads as 0)
    and sums the coefficient-weighted products.
    """

    terms: tuple[Term, ...]
    controllables: tuple[str, ...]

    def evaluate(self, deactivated: Iterable[str]) -> Fraction:
        d = frozenset(deactivated)
        total = Fraction(0)
        for term in self.terms:
            acc = term.coefficient
            for factor in term.factors:
                if factor.transition in d:
                    acc = Fraction(0)
                    break
                denom = sum(
                    (rate for tid, rate, _ in factor.cell if tid not in d), Fraction(0)
                )
                if denom == 0:
                    acc = Fraction(0)
                    break
                acc *= factor.rate / denom
            total += acc
        return total


def value_expression(net: Sdpn, reward: TransitionReward) -> ValueExpression:
    """One term per support entry of the configuration reward."""
    cell_of = _cell_of_map(net)
    ctrl = net.controllable
    terms = []
    for transitions, value in sorted(reward.items(), key=lambda kv: sorted(kv[0])):
        factors = []
        for tid in sorted(transitions, key=net.transition_index):
            members = tuple(
                (u, net.transition(u).rate, u in ctrl)
                for u in sorted(cell_of[tid], key=net.transition_index)
            )
            factors.append(
                Factor(
                    transition=tid,
                    rate=net.transition(tid).rate,
                    controllable=tid in ctrl,
                    cell=members,
                )
            )
        terms.append(Term(coefficient=value, factors=tuple(factors)))
    controllables = tuple(sorted(ctrl, key=net.transition_index))
    return ValueExpression(terms=tuple(terms), controllables=controllables)


# ---------------------------------------------------------------------------
# consistency checking against full enumeration
# ---------------------------------------------------------------------------


def check_consistency(
    net: Sdpn,
    reward: TransitionReward,
    deactivated: Iterable[str],
    budget: int = DEFAULT_RUN_BUDGET,
) -> int:
    """Verify, run by run, that configuration-prefix sums reproduce payoffs.

    For every maximal run the payoff of its reached places must equal the
    sum of reward entries over fired-configuration prefixes.  Returns the
    number of runs checked; raises InconsistentReward on the first mismatch.
    """
    d = check_deactivation(net, deactivated)
    _require_safc(net)

    reward_rows = []
    for places, value in net.rewards.items():
        mask = 0
        for p in places:
            mask |= 1 << net.place_index(p)
        reward_rows.append((mask, value))
    entry_rows = []
    for transitions, value in reward.items():
        mask = 0
        for tid in transitions:
            mask |= 1 << net.transition_index(tid)
        entry_rows.append((mask, value))

    lhs_cache: dict[int, Fraction] = {}
    rhs_cache: dict[int, Fraction] = {}
    checked = 0
    for pl, tr, _num, _den in _sweep_runs_masks(net, d, budget):
        lhs = lhs_cache.get(pl)
        if lhs is None:
            lhs = sum((v for mask, v in reward_rows if pl & mask == mask), Fraction(0))
            lhs_cache[pl] = lhs
        rhs = rhs_cache.get(tr)
        if rhs is None:
            rhs = sum((v for mask, v in entry_rows if tr & mask == mask), Fraction(0))
            rhs_cache[tr] = rhs
        if lhs != rhs:
            raise InconsistentReward(
                f"run payoff {lhs} != prefix reward sum {rhs} under D={sorted(d)}"
            )
        checked += 1
    return checked


# ---------------------------------------------------------------------------
# JSON dump for golden-file comparison
# ---------------------------------------------------------------------------


def levels_to_dict(levels: list[AuxReward], reward: TransitionReward) -> dict:
    def entry_sort_key(item):
        (places, tids), _ = item
        return (sorted(places), sorted(tids))

    return {
        "levels": [
            {
                "level": aux.level,
                "dropped": aux.dropped,
                "entries": [
                    {
                        "places": sorted(places),
                        "transitions": sorted(tids),
                        "value": format_rational(value),
                    }
                    for (places, tids), value in sorted(aux.entries.items(), key=entry_sort_key)
                ],
            }
            for aux in levels
        ],
        "transition_reward": [
            {"transitions": sorted(tids), "value": format_rational(value)}
            for tids, value in sorted(reward.items(), key=lambda kv: sorted(kv[0]))
        ],
    }
