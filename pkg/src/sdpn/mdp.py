"""Compilation of a net into a finite Markov decision process.

States pair a reachable marking with the set of places seen strictly before
it; actions are deactivation sets.  Rewards are collected on leaving a state:
the payoff difference between the seen-set after and before the step, with
the unconditional (empty-set) reward granted once on the very first step.
Since the seen-set only grows, every cycle of the induced chain is reward
free and expected total rewards are finite.

This module is the semantic ground truth for policies that may react to the
current marking and to already-achieved subgoals; constant deactivation sets
are the special case evaluated elsewhere by run enumeration and rewriting.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Optional

from .errors import BudgetExceeded, HorizonNotConverged, NotControllable, RewardDiverges
from .net import DEFAULT_STATE_BUDGET, Marking, Sdpn, format_rational
from .semantics import check_deactivation

State = tuple[Marking, frozenset[str]]


def subset_lex_order(net: Sdpn, sets: Iterable[frozenset[str]]) -> list[frozenset[str]]:
    """Sort sets by their sorted interned-index tuples, lexicographically."""
    def key(s: frozenset[str]) -> tuple[int, ...]:
        return tuple(sorted(net.transition_index(t) for t in s))

    return sorted(sets, key=key)


def all_subsets_lex(net: Sdpn, items: frozenset[str]) -> list[frozenset[str]]:
    members = sorted(items, key=net.transition_index)
    subsets = [frozenset(c) for r in range(len(members) + 1) for c in combinations(members, r)]
    return subset_lex_order(net, subsets)


class Mdp:
    """Finite MDP over (marking, seen places) states.

    Transition rows and rewards are computed on demand; the reward for
    leaving a state does not depend on the action or the successor, which
    keeps the expected-total-reward computations simple.
    """

    def __init__(self, net: Sdpn, states: list[State]):
        self.net = net
        self.states = states
        self.index: dict[State, int] = {s: i for i, s in enumerate(states)}
        self.initial = 0
        self._value_cache: dict[frozenset[str], Fraction] = {}
        self._leave_reward: dict[int, Fraction] = {}
        self._enabled_cache: dict[int, list] = {}

    def __len__(self) -> int:
        return len(self.states)

    # -- rewards -----------------------------------------------------------

    def _payoff(self, seen: frozenset[str]) -> Fraction:
        v = self._value_cache.get(seen)
        if v is None:
            v = self.net.rewards.value_of(seen)
            self._value_cache[seen] = v
        return v

    def reward_leaving(self, idx: int) -> Fraction:
        r = self._leave_reward.get(idx)
        if r is None:
            m, seen = self.states[idx]
            after = seen | m.support()
            r = self._payoff(after)
            if seen:
                r -= self._payoff(seen)
            self._leave_reward[idx] = r
        return r

    def reward(self, idx: int, deactivated: frozenset[str], succ_idx: int) -> Fraction:
        """Per-edge reward; uniform over actions and successors of a state."""
        return self.reward_leaving(idx)

    # -- transitions ---------------------------------------------------------

    def _enabled(self, idx: int) -> list:
        rows = self._enabled_cache.get(idx)
        if rows is None:
            m, _ = self.states[idx]
            rows = [(t.id, t.rate, m.fire(t.pre, t.post)) for t in self.net.enabled(m)]
            self._enabled_cache[idx] = rows
        return rows

    def effective_actions(self, idx: int) -> list[frozenset[str]]:
        """Canonical action representatives: subsets of the enabled controllables.

        Deactivating a transition that is not enabled cannot change the step,
        so actions are deduplicated by their restriction to the enabled
        controllables; the restriction itself is the recorded representative.
        """
        enabled_ctrl = frozenset(
            tid for tid, _, _ in self._enabled(idx) if tid in self.net.controllable
        )
        return all_subsets_lex(self.net, enabled_ctrl)

    def delta(self, idx: int, deactivated: Iterable[str]) -> list[tuple[int, Fraction]]:
        d = check_deactivation(self.net, deactivated)
        m, seen = self.states[idx]
        seen_after = seen | m.support()
        rows = [(tid, rate, m2) for tid, rate, m2 in self._enabled(idx) if tid not in d]
        if not rows:
            return [(self.index[(m, seen_after)], Fraction(1))]
        total = sum((rate for _, rate, _ in rows), Fraction(0))
        acc: dict[int, Fraction] = {}
        for _, rate, m2 in rows:
            j = self.index[(m2, seen_after)]
            acc[j] = acc.get(j, Fraction(0)) + rate / total
        return sorted(acc.items())


def compile_mdp(net: Sdpn, budget: int = DEFAULT_STATE_BUDGET) -> Mdp:
    """Explore all (marking, seen places) states reachable under some action sequence."""
    start: State = (net.m0, frozenset())
    states: list[State] = [start]
    index = {start: 0}
    queue = deque([start])
    controllable = net.controllable
    while queue:
        m, seen = queue.popleft()
        seen_after = seen | m.support()
        enabled = net.enabled(m)
        successors: list[State] = []
        for t in enabled:
            successors.append((m.fire(t.pre, t.post), seen_after))
        # The idle step is possible when some action empties the enabled set,
        # i.e. when every enabled transition can be switched off.
        if not enabled or all(t.id in controllable for t in enabled):
            successors.append((m, seen_after))
        for s in successors:
            if s not in index:
                if len(states) >= budget:
                    raise BudgetExceeded(f"MDP exceeded {budget} states")
                index[s] = len(states)
                states.append(s)
                queue.append(s)
    return Mdp(net, states)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PositionalPolicy:
    """Deactivation choice per MDP state, keyed by state index."""

    actions: dict[int, frozenset[str]]

    @classmethod
    def constant(cls, mdp: Mdp, deactivated: Iterable[str]) -> "PositionalPolicy":
        d = check_deactivation(mdp.net, deactivated)
        return cls(actions={i: d for i in range(len(mdp))})

    def action_at(self, idx: int) -> frozenset[str]:
        return self.actions[idx]


def _tarjan_sccs(n: int, succ: dict[int, list[int]]) -> list[list[int]]:
    """Strongly connected components, in reverse topological order."""
    index_counter = 0
    stack: list[int] = []
    lowlink = [0] * n
    number = [-1] * n
    on_stack = [False] * n
    result: list[list[int]] = []

    for root in range(n):
        if number[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            node, pi = work[-1]
            if pi == 0:
                number[node] = index_counter
                lowlink[node] = index_counter
                index_counter += 1
                stack.append(node)
                on_stack[node] = True
            recurse = False
            neighbours = succ.get(node, [])
            while pi < len(neighbours):
                w = neighbours[pi]
                pi += 1
                if number[w] == -1:
                    work[-1] = (node, pi)
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    lowlink[node] = min(lowlink[node], number[w])
            if recurse:
                continue
            if lowlink[node] == number[node]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    component.append(w)
                    if w == node:
                        break
                result.append(component)
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return result


def _solve_linear(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination over exact rationals (small dense systems)."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            raise RewardDiverges("singular chain system; total reward not determined")
        m[col], m[pivot] = m[pivot], m[col]
        inv = 1 / m[col][col]
        m[col] = [x * inv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [x - factor * y for x, y in zip(m[r], m[col])]
    return [m[i][n] for i in range(n)]


def evaluate_policy(mdp: Mdp, policy: PositionalPolicy) -> Fraction:
    """Exact expected total reward of a policy from the initial state.

    The induced chain is decomposed into strongly connected components; all
    cycles carry zero reward (the seen-set is constant inside a component),
    so values propagate by a reverse-topological pass with a small exact
    linear solve inside each component that has an exit.
    """
    reach: dict[int, list[tuple[int, Fraction]]] = {}
    stack = [mdp.initial]
    while stack:
        i = stack.pop()
        if i in reach:
            continue
        rows = mdp.delta(i, policy.action_at(i))
        reach[i] = rows
        for j, _ in rows:
            if j not in reach:
                stack.append(j)

    ids = sorted(reach)
    local = {s: i for i, s in enumerate(ids)}
    succ = {local[s]: [local[j] for j, _ in reach[s]] for s in ids}
    comps = _tarjan_sccs(len(ids), succ)

    value: dict[int, Fraction] = {}
    for comp in comps:  # already reverse-topological
        members = [ids[i] for i in comp]
        member_set = set(members)
        closed = all(
            j in member_set for s in members for j, _ in reach[s]
        )
        if closed:
            if any(mdp.reward_leaving(s) != 0 for s in members):
                raise RewardDiverges("nonzero reward inside a closed recurrent class")
            for s in members:
                value[s] = Fraction(0)
            continue
        pos = {s: i for i, s in enumerate(members)}
        size = len(members)
        a = [[Fraction(0)] * size for _ in range(size)]
        b = [Fraction(0)] * size
        for s in members:
            i = pos[s]
            a[i][i] = Fraction(1)
            b[i] = mdp.reward_leaving(s)
            for j, p in reach[s]:
                if j in member_set:
                    a[i][pos[j]] -= p
                else:
                    b[i] += p * value[j]
        solved = _solve_linear(a, b)
        for s in members:
            value[s] = solved[pos[s]]
    return value[mdp.initial]


def _action_value(
    mdp: Mdp, idx: int, action: frozenset[str], value: dict[int, Fraction]
) -> Optional[Fraction]:
    """Value of committing to one action at a state, given successor values.

    Handles a self-successor exactly (geometric return); None when the state
    would loop forever on itself, which is worth 0 only if its leave reward
    is 0 (always true once the seen-set has stabilized).
    """
    r = mdp.reward_leaving(idx)
    p_self = Fraction(0)
    rest = Fraction(0)
    for j, p in mdp.delta(idx, action):
        if j == idx:
            p_self += p
        else:
            rest += p * value[j]
    if p_self == 1:
        if r != 0:
            raise RewardDiverges("state loops on itself while collecting reward")
        return Fraction(0)
    return (r + rest) / (1 - p_self)


def optimal_positional_policy(
    mdp: Mdp, horizon: Optional[int] = None
) -> tuple[PositionalPolicy, Fraction]:
    """Maximize expected total reward over positional policies.

    When the union transition graph is acyclic modulo self-loops the optimum
    is computed by exact backward induction in topological order.  Otherwise
    an exact-rational value iteration runs to the configured horizon and must
    stabilize; its greedy policy is then re-evaluated exactly.
    """
    n = len(mdp)
    union_succ: dict[int, list[int]] = {}
    action_lists: list[list[frozenset[str]]] = []
    for i in range(n):
        actions = mdp.effective_actions(i)
        action_lists.append(actions)
        targets: set[int] = set()
        for a in actions:
            targets.update(j for j, _ in mdp.delta(i, a))
        union_succ[i] = sorted(targets - {i})

    comps = _tarjan_sccs(n, union_succ)
    acyclic = all(len(c) == 1 for c in comps)

    if acyclic:
        value: dict[int, Fraction] = {}
        chosen: dict[int, frozenset[str]] = {}
        for comp in comps:  # reverse topological: successors already valued
            i = comp[0]
            best: Optional[Fraction] = None
            best_action = action_lists[i][0]
            for a in action_lists[i]:
                v = _action_value(mdp, i, a, value)
                if best is None or v > best:
                    best = v
                    best_action = a
            value[i] = best if best is not None else Fraction(0)
            chosen[i] = best_action
        return PositionalPolicy(actions=chosen), value[mdp.initial]

    limit = horizon if horizon is not None else 10 * n + 100
    values = {i: Fraction(0) for i in range(n)}
    for _ in range(limit):
        nxt: dict[int, Fraction] = {}
        for i in range(n):
            nxt[i] = max(_action_value(mdp, i, a, values) for a in action_lists[i])
        if nxt == values:
            chosen = {}
            for i in range(n):
                for a in action_lists[i]:
                    if _action_value(mdp, i, a, values) == values[i]:
                        chosen[i] = a
                        break
            policy = PositionalPolicy(actions=chosen)
            exact = evaluate_policy(mdp, policy)
            if exact != values[mdp.initial]:
                raise HorizonNotConverged(
                    "value iteration fixed point disagrees with exact policy value"
                )
            return policy, exact
        values = nxt
    raise HorizonNotConverged(f"value iteration did not stabilize within {limit} sweeps")


def best_constant_policy_via_mdp(mdp: Mdp) -> tuple[frozenset[str], Fraction]:
    """Argmax over constant deactivation sets, smallest subset-lex witness."""
    best_d: Optional[frozenset[str]] = None
    best_v: Optional[Fraction] = None
    for d in all_subsets_lex(mdp.net, mdp.net.controllable):
        v = evaluate_policy(mdp, PositionalPolicy.constant(mdp, d))
        if best_v is None or v > best_v:
            best_v = v
            best_d = d
    assert best_d is not None and best_v is not None
    return best_d, best_v


# ---------------------------------------------------------------------------
# JSON dump
# ---------------------------------------------------------------------------


def mdp_to_dict(mdp: Mdp) -> dict:
    rows = []
    for i in range(len(mdp)):
        for action in mdp.effective_actions(i):
            rows.append(
                {
                    "state": i,
                    "action": sorted(action),
                    "successors": [
                        {"state": j, "probability": format_rational(p)}
                        for j, p in mdp.delta(i, action)
                    ],
                    "reward": format_rational(mdp.reward_leaving(i)),
                }
            )
    return {
        "initial": mdp.initial,
        "states": [
            {"marking": dict(sorted(m.as_dict().items())), "seen": sorted(seen)}
            for m, seen in mdp.states
        ],
        "rows": rows,
    }
