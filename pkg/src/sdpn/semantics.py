"""Exact discrete-time execution semantics under constant deactivation sets.

Firing is stochastic: among the enabled, non-deactivated transitions, each
fires with probability proportional to its rate.  A marking where nothing is
enabled idles forever.  The payoff of a run is the reward-table value of the
set of places it ever marked.

The run enumeration here is deliberately the dumb, trusted oracle: it walks
every firing *sequence* (all interleavings) without merging states, so other
modules can be checked against it.  To keep that affordable the sweep uses
interned bitmask markings on nets verified safe, and unreduced integer
numerator/denominator pairs for path probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional

from .errors import (
    BudgetExceeded,
    NotControllable,
    NotOccurrenceNet,
    StepCapExceeded,
)
from .net import Marking, RewardTable, Sdpn, compute_cells
from .rng import SplitMix64

DEFAULT_RUN_BUDGET = 10**7


def check_deactivation(net: Sdpn, deactivated: Iterable[str]) -> frozenset[str]:
    """Validate D against the net's controllable set."""
    d = frozenset(deactivated)
    if not d <= net.controllable:
        outside = sorted(d - net.controllable)
        raise NotControllable(f"not controllable: {outside}")
    return d


class Distribution:
    """Finite probability distribution with exact rational weights."""

    __slots__ = ("_weights",)

    def __init__(self, weights: dict):
        total = sum(weights.values(), Fraction(0))
        if total != 1:
            raise ValueError(f"weights sum to {total}, not 1")
        if any(w < 0 for w in weights.values()):
            raise ValueError("negative weight")
        self._weights = dict(weights)

    def items(self):
        return self._weights.items()

    def probability(self, outcome) -> Fraction:
        return self._weights.get(outcome, Fraction(0))

    def __len__(self):
        return len(self._weights)

    def __eq__(self, other):
        return isinstance(other, Distribution) and self._weights == other._weights


@dataclass(frozen=True)
class Run:
    """A maximal firing sequence with its probability.

    ``pl`` is the set of places ever marked (initial marking included),
    ``tr`` the set of fired transitions.
    """

    firing: tuple[str, ...]
    probability: Fraction
    pl: frozenset[str]
    tr: frozenset[str]


def step_distribution(net: Sdpn, m: Marking, deactivated: Iterable[str]) -> Distribution:
    """One-step distribution over (fired transition or None, next marking).

    The idle outcome (None, m) with weight 1 occurs exactly when nothing is
    enabled after deactivation.
    """
    d = check_deactivation(net, deactivated)
    enabled = net.enabled(m, d)
    if not enabled:
        return Distribution({(None, m): Fraction(1)})
    total = sum((t.rate for t in enabled), Fraction(0))
    weights: dict = {}
    for t in enabled:
        outcome = (t.id, m.fire(t.pre, t.post))
        weights[outcome] = weights.get(outcome, Fraction(0)) + t.rate / total
    return Distribution(weights)


# ---------------------------------------------------------------------------
# fast run sweep
# ---------------------------------------------------------------------------


def _mask_tables(net: Sdpn):
    """Interned bitmask tables for a net whose safety has been verified."""
    cached = getattr(net, "_sdpn_mask_tables", None)
    if cached is not None:
        return cached
    m0_mask = 0
    for p in net.m0.support():
        m0_mask |= 1 << net.place_index(p)
    rows = []
    for i, t in enumerate(net.transitions):
        pre = 0
        for p in t.pre:
            pre |= 1 << net.place_index(p)
        post = 0
        for p in t.post:
            post |= 1 << net.place_index(p)
        rows.append((i, t.id, pre, post, t.rate))
    tables = (m0_mask, rows)
    net._sdpn_mask_tables = tables
    return tables


def _sweep_runs(net: Sdpn, d: frozenset[str], budget: int) -> Iterator[tuple]:
    """Yield (pl, tr, num, den) per maximal run; probability is num/den.

    On safe nets pl/tr are bitmasks over the net's place/transition indices;
    otherwise pl/tr are frozensets and den carries an exact Fraction in num
    with den == 1.  Callers that need identical handling should go through
    :func:`enumerate_runs` or :func:`exact_value`.
    """
    if net.classify().safe:
        yield from _sweep_runs_masks(net, d, budget)
    else:
        for firing, prob, pl, tr in _walk_runs_general(net, d, budget):
            yield pl, tr, prob, 1


def _sweep_runs_masks(net: Sdpn, d: frozenset[str], budget: int) -> Iterator[tuple]:
    m0_mask, rows = _mask_tables(net)
    active = [row for row in rows if row[1] not in d]
    en_cache: dict[int, list] = {}

    def expand(m: int) -> list:
        enabled = [row for row in active if m & row[2] == row[2]]
        if not enabled:
            return []
        total = sum((row[4] for row in enabled), Fraction(0))
        out = []
        for i, tid, pre, post, rate in enabled:
            p = rate / total
            out.append(((m & ~pre) | post, post, 1 << i, p.numerator, p.denominator))
        return out

    nodes = 0
    stack = [(m0_mask, m0_mask, 0, 1, 1)]
    while stack:
        m, pl, tr, num, den = stack.pop()
        nodes += 1
        if nodes > budget:
            raise BudgetExceeded(f"run sweep exceeded {budget} prefixes")
        succ = en_cache.get(m)
        if succ is None:
            succ = expand(m)
            en_cache[m] = succ
        if not succ:
            yield pl, tr, num, den
            continue
        for m2, post, tbit, pnum, pden in succ:
            stack.append((m2, pl | post, tr | tbit, num * pnum, den * pden))


def _walk_runs_general(
    net: Sdpn, d: frozenset[str], budget: int
) -> Iterator[tuple[tuple[str, ...], Fraction, frozenset, frozenset]]:
    """Sequence-enumerating walk for nets that are not verified safe."""
    en_cache: dict[Marking, list] = {}

    def expand(m: Marking) -> list:
        enabled = net.enabled(m, d)
        if not enabled:
            return []
        total = sum((t.rate for t in enabled), Fraction(0))
        return [(t.id, m.fire(t.pre, t.post), frozenset(t.post), t.rate / total) for t in enabled]

    nodes = 0
    stack = [((), net.m0, net.m0.support(), Fraction(1))]
    while stack:
        firing, m, pl, prob = stack.pop()
        nodes += 1
        if nodes > budget:
            raise BudgetExceeded(f"run sweep exceeded {budget} prefixes")
        succ = en_cache.get(m)
        if succ is None:
            succ = expand(m)
            en_cache[m] = succ
        if not succ:
            yield firing, prob, pl, frozenset(firing)
            continue
        for tid, m2, post, p in succ:
            stack.append((firing + (tid,), m2, pl | post, prob * p))


def enumerate_runs(net: Sdpn, deactivated: Iterable[str], budget: int = DEFAULT_RUN_BUDGET) -> list[Run]:
    """All maximal runs with exact probabilities (probabilities sum to 1)."""
    d = check_deactivation(net, deactivated)
    runs: list[Run] = []
    if net.classify().safe:
        m0_mask, rows = _mask_tables(net)
        # Re-walk with explicit sequences; mask sweep is kept sequence-free.
        active = [row for row in rows if row[1] not in d]
        en_cache: dict[int, list] = {}

        def expand(m: int) -> list:
            enabled = [row for row in active if m & row[2] == row[2]]
            if not enabled:
                return []
            total = sum((row[4] for row in enabled), Fraction(0))
            return [(tid, (m & ~pre) | post, post, rate / total) for _, tid, pre, post, rate in enabled]

        nodes = 0
        stack = [((), m0_mask, m0_mask, Fraction(1))]
        place_of_bit = {1 << i: p for i, p in enumerate(net.places)}
        while stack:
            firing, m, pl, prob = stack.pop()
            nodes += 1
            if nodes > budget:
                raise BudgetExceeded(f"run enumeration exceeded {budget} prefixes")
            succ = en_cache.get(m)
            if succ is None:
                succ = expand(m)
                en_cache[m] = succ
            if not succ:
                places = frozenset(p for bit, p in place_of_bit.items() if pl & bit)
                runs.append(Run(firing=firing, probability=prob, pl=places, tr=frozenset(firing)))
                continue
            for tid, m2, post, p in succ:
                stack.append((firing + (tid,), m2, pl | post, prob * p))
    else:
        for firing, prob, pl, tr in _walk_runs_general(net, d, budget):
            runs.append(Run(firing=firing, probability=prob, pl=pl, tr=tr))
    runs.sort(key=lambda r: r.firing)
    return runs


def value_of_places(rewards: RewardTable, marked: Iterable[str]) -> Fraction:
    """Payoff of a set of reached places; iterates the stored support only."""
    return rewards.value_of(marked)


def exact_value(net: Sdpn, deactivated: Iterable[str], budget: int = DEFAULT_RUN_BUDGET) -> Fraction:
    """Expected payoff under constant deactivation, by full run enumeration."""
    d = check_deactivation(net, deactivated)
    if net.classify().safe:
        reward_rows = []
        for places, value in net.rewards.items():
            mask = 0
            for p in places:
                mask |= 1 << net.place_index(p)
            reward_rows.append((mask, value))

        buckets: dict[tuple[int, int], int] = {}
        for pl, _tr, num, den in _sweep_runs_masks(net, d, budget):
            key = (pl, den)
            buckets[key] = buckets.get(key, 0) + num

        value_cache: dict[int, Fraction] = {}
        total = Fraction(0)
        for (pl, den), num in buckets.items():
            v = value_cache.get(pl)
            if v is None:
                v = sum((val for mask, val in reward_rows if pl & mask == mask), Fraction(0))
                value_cache[pl] = v
            if v:
                total += Fraction(num, den) * v
        return total

    total = Fraction(0)
    for _firing, prob, pl, _tr in _walk_runs_general(net, d, budget):
        total += prob * net.rewards.value_of(pl)
    return total


# ---------------------------------------------------------------------------
# payoff range rescaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiTransform:
    """Affine rescaling of the payoff range [v_min, v_max] onto [0, 1].

    v_min is the sum of all negative reward entries and v_max the sum of all
    positive ones, so every achievable payoff lands in [v_min, v_max].  When
    the range is a single point the transform is flagged degenerate and maps
    everything to 0.
    """

    v_min: Fraction
    v_max: Fraction
    degenerate: bool

    def apply(self, x: Fraction) -> Fraction:
        if self.degenerate:
            return Fraction(0)
        return (x - self.v_min) / (self.v_max - self.v_min)


def psi(rewards: RewardTable) -> PsiTransform:
    v_min = rewards.negative_sum()
    v_max = rewards.positive_sum()
    return PsiTransform(v_min=v_min, v_max=v_max, degenerate=(v_min == v_max))


# ---------------------------------------------------------------------------
# polynomial value computation for free-choice occurrence nets
# ---------------------------------------------------------------------------


def fcon_value(net: Sdpn, deactivated: Iterable[str]) -> Fraction:
    """Expected payoff without run enumeration, for free-choice occurrence nets.

    Each place has at most one producer, so marking a set of places Q is
    equivalent to firing the closed set of transitions Q causally depends on.
    That set has probability zero if it contains two conflicting transitions
    or a deactivated one, and otherwise the product of the members' local
    win probabilities inside their cells (renormalized after deactivation).
    Runs in time polynomial in the net size times the reward support size.
    """
    d = check_deactivation(net, deactivated)
    cls = net.classify()
    if not (cls.occurrence and cls.free_choice):
        raise NotOccurrenceNet("fcon_value requires a free-choice occurrence net")

    producer: dict[str, str] = {}
    for t in net.transitions:
        for p in t.post:
            producer[p] = t.id
    cell_of: dict[str, frozenset[str]] = {}
    for cell in compute_cells(net):
        for tid in cell.transitions:
            cell_of[tid] = cell.transitions

    initial = net.m0.support()

    def causes(places: frozenset[str]) -> Optional[frozenset[str]]:
        """Transitions the places depend on, or None when unreachable."""
        closure: set[str] = set()
        stack = list(places)
        while stack:
            p = stack.pop()
            if p in initial:
                continue
            tid = producer.get(p)
            if tid is None:
                return None
            if tid in closure:
                continue
            closure.add(tid)
            stack.extend(net.transition(tid).pre)
        return frozenset(closure)

    total = Fraction(0)
    for places, value in net.rewards.items():
        closure = causes(places)
        if closure is None:
            continue
        if any(tid in d for tid in closure):
            continue
        cells_hit: dict[frozenset[str], str] = {}
        conflict = False
        for tid in closure:
            cell = cell_of[tid]
            other = cells_hit.get(cell)
            if other is not None and other != tid:
                conflict = True
                break
            cells_hit[cell] = tid
        if conflict:
            continue
        prob = Fraction(1)
        for tid in closure:
            cell = cell_of[tid]
            denom = sum((net.transition(u).rate for u in cell if u not in d), Fraction(0))
            prob *= net.transition(tid).rate / denom
        total += prob * value
    return total


# ---------------------------------------------------------------------------
# Monte Carlo estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    mean: Fraction
    stderr: float
    runs: int
    seed: int


def simulate(
    net: Sdpn,
    deactivated: Iterable[str],
    seed: int,
    runs: int,
    step_cap: int = 10**6,
) -> SimulationResult:
    """Monte Carlo estimate of the expected payoff.

    Each run draws from its own SplitMix64 substream derived from (seed, run
    index), so results do not depend on how runs would be partitioned across
    workers.  Transition selection compares 53-bit uniform integers against
    exact rational thresholds; no floating point enters the sampling.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    d = check_deactivation(net, deactivated)

    # Cache per-marking cumulative selection thresholds.
    en_cache: dict[Marking, list] = {}

    def expand(m: Marking) -> list:
        enabled = net.enabled(m, d)
        if not enabled:
            return []
        total = sum((t.rate for t in enabled), Fraction(0))
        out = []
        acc = Fraction(0)
        for t in enabled:
            acc += t.rate / total
            out.append((acc, t))
        return out

    base = SplitMix64(seed)
    two53 = 1 << 53
    total_value = Fraction(0)
    sq_sum = Fraction(0)
    for run_index in range(runs):
        rng = base.split(run_index)
        m = net.m0
        pl = set(m.support())
        steps = 0
        while True:
            succ = en_cache.get(m)
            if succ is None:
                succ = expand(m)
                en_cache[m] = succ
            if not succ:
                break
            if steps >= step_cap:
                raise StepCapExceeded(
                    f"run {run_index} exceeded step cap {step_cap} (seed {seed}); "
                    "net may be unbounded under this deactivation set"
                )
            u = Fraction(rng.next_u53(), two53)
            chosen = succ[-1][1]
            for threshold, t in succ:
                if u < threshold:
                    chosen = t
                    break
            m = m.fire(chosen.pre, chosen.post)
            pl.update(chosen.post)
            steps += 1
        v = net.rewards.value_of(pl)
        total_value += v
        sq_sum += v * v

    mean = total_value / runs
    if runs > 1:
        variance = (sq_sum - runs * mean * mean) / (runs - 1)
        stderr = math.sqrt(max(0.0, float(variance)) / runs)
    else:
        stderr = float("nan")
    return SimulationResult(mean=mean, stderr=stderr, runs=runs, seed=seed)
