"""Core data model: stochastic decision Petri nets and their structural analysis.

A net consists of places, transitions with pre/post multisets and positive
rational firing rates, an initial marking, a set of controllable transitions,
and a sparse reward table over place sets.  All numbers are exact rationals
(`fractions.Fraction`); nothing in this package uses floating point for
probabilities or values.

Structural notions implemented here:

* classification flags (ordinary / safe / acyclic / free-choice / occurrence),
  where safety is decided semantically by exhaustive reachability under a
  state budget, not merely by syntactic inspection;
* branching cells: the equivalence classes of transitions sharing an
  identical pre-multiset.  In free-choice nets a cell is the locus of one
  independent probabilistic choice;
* a deterministic total order on cells extending the causal order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional

import json

from .errors import BudgetExceeded, CyclicNet, NetFormatError

DEFAULT_STATE_BUDGET = 10**6


# ---------------------------------------------------------------------------
# rational parsing / formatting
# ---------------------------------------------------------------------------


def parse_rational(value) -> Fraction:
    """Parse an exact rational from an int or an 'a/b' / 'a' string."""
    if isinstance(value, bool):
        raise NetFormatError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise NetFormatError(f"not a rational: {value!r}") from exc
    raise NetFormatError(f"not a rational: {value!r}")


def format_rational(value: Fraction) -> str:
    """Exact string form, 'a' or 'a/b'."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def approx_decimal(value: Fraction, places: int = 6) -> str:
    """Decimal approximation used only for display, never for decisions."""
    return f"{float(value):.{places}f}"


# ---------------------------------------------------------------------------
# markings
# ---------------------------------------------------------------------------


class Marking:
    """Immutable multiset of tokens over places.

    Only strictly positive counts are stored.  Equality and hashing are by
    content, so markings can key sets and dictionaries during exploration.
    """

    __slots__ = ("_counts", "_hash")

    def __init__(self, counts: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = dict(counts)
        for place, count in items.items():
            if not isinstance(count, int) or count < 0:
                raise NetFormatError(f"negative or non-integer count for {place!r}")
        self._counts = {p: c for p, c in items.items() if c > 0}
        self._hash = hash(frozenset(self._counts.items()))

    def count(self, place: str) -> int:
        return self._counts.get(place, 0)

    def support(self) -> frozenset[str]:
        return frozenset(self._counts)

    def as_dict(self) -> dict[str, int]:
        return dict(self._counts)

    def covers(self, pre: Mapping[str, int]) -> bool:
        return all(self._counts.get(p, 0) >= c for p, c in pre.items())

    def fire(self, pre: Mapping[str, int], post: Mapping[str, int]) -> "Marking":
        counts = dict(self._counts)
        for p, c in pre.items():
            counts[p] = counts.get(p, 0) - c
        for p, c in post.items():
            counts[p] = counts.get(p, 0) + c
        return Marking(counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, Marking) and self._counts == other._counts

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{p}:{c}" for p, c in sorted(self._counts.items()))
        return f"Marking({{{inner}}})"


# ---------------------------------------------------------------------------
# reward tables
# ---------------------------------------------------------------------------


class RewardTable:
    """Sparse map from place sets to nonzero rationals.

    Zero values are never stored; adding entries that cancel removes the key.
    The empty place set is a legal key (a reward handed out unconditionally).
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[frozenset, Fraction] | Iterable[tuple] = ()):
        table: dict[frozenset[str], Fraction] = {}
        items = entries.items() if isinstance(entries, Mapping) else entries
        for places, value in items:
            key = frozenset(places)
            val = Fraction(value)
            if val == 0:
                raise NetFormatError(f"zero reward entry for {sorted(key)}")
            if key in table:
                raise NetFormatError(f"duplicate reward entry for {sorted(key)}")
            table[key] = val
        self._entries = table

    @classmethod
    def accumulate(cls, items: Iterable[tuple[frozenset, Fraction]]) -> "RewardTable":
        """Sum entries with equal keys and drop keys that cancel to zero."""
        table: dict[frozenset, Fraction] = {}
        for places, value in items:
            key = frozenset(places)
            total = table.get(key, Fraction(0)) + value
            if total == 0:
                table.pop(key, None)
            else:
                table[key] = total
        return cls(table)

    def support(self) -> list[frozenset[str]]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def get(self, places: frozenset) -> Fraction:
        return self._entries.get(frozenset(places), Fraction(0))

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, RewardTable) and self._entries == other._entries

    def value_of(self, marked: Iterable[str]) -> Fraction:
        """Payoff of a set of reached places: sum of entries contained in it."""
        marked_set = frozenset(marked)
        total = Fraction(0)
        for places, value in self._entries.items():
            if places <= marked_set:
                total += value
        return total

    def positive_sum(self) -> Fraction:
        return sum((v for v in self._entries.values() if v > 0), Fraction(0))

    def negative_sum(self) -> Fraction:
        return sum((v for v in self._entries.values() if v < 0), Fraction(0))

    def __repr__(self) -> str:
        inner = ", ".join(
            f"{{{','.join(sorted(k))}}}:{format_rational(v)}"
            for k, v in sorted(self._entries.items(), key=lambda kv: sorted(kv[0]))
        )
        return f"RewardTable([{inner}])"


# ---------------------------------------------------------------------------
# transitions and nets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    id: str
    pre: Mapping[str, int]
    post: Mapping[str, int]
    rate: Fraction


@dataclass(frozen=True)
class NetClassification:
    ordinary: bool
    safe: bool
    acyclic: bool
    free_choice: bool
    occurrence: bool
    initial_no_predecessors: bool
    max_run_length: Optional[int]  # None means unbounded

    @property
    def safc(self) -> bool:
        return self.safe and self.acyclic and self.free_choice

    @property
    def fcon(self) -> bool:
        return self.occurrence and self.free_choice


@dataclass(frozen=True)
class Cell:
    """Branching cell: a maximal set of transitions with identical pre-sets."""

    id: str  # smallest member transition id, for stable naming
    transitions: frozenset[str]
    pre_places: frozenset[str]
    post_places: frozenset[str]


@dataclass(frozen=True)
class CellOrder:
    """Cells in a total order extending the causal order between cells."""

    cells: tuple[Cell, ...]

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def level_of(self) -> dict[str, int]:
        """Map transition id -> 1-based index of its cell in the order."""
        levels: dict[str, int] = {}
        for index, cell in enumerate(self.cells, start=1):
            for tid in cell.transitions:
                levels[tid] = index
        return levels


class Sdpn:
    """A stochastic decision Petri net.

    Immutable after construction.  Construction validates:

    * all rates strictly positive;
    * pre/post/initial/reward places are declared, controllables are declared
      transitions;
    * no two transitions carry identical (pre, post) pairs, so firing
      sequences determine transition sequences uniquely.
    """

    def __init__(
        self,
        places: Iterable[str],
        transitions: Iterable[Transition],
        m0: Marking,
        controllable: Iterable[str] = (),
        rewards: RewardTable | None = None,
    ):
        self.places: tuple[str, ...] = tuple(places)
        if len(set(self.places)) != len(self.places):
            raise NetFormatError("duplicate place ids")
        place_set = set(self.places)

        self.transitions: tuple[Transition, ...] = tuple(transitions)
        seen_ids: set[str] = set()
        seen_flows: set[tuple] = set()
        for t in self.transitions:
            if t.id in seen_ids:
                raise NetFormatError(f"duplicate transition id {t.id!r}")
            seen_ids.add(t.id)
            if t.rate <= 0:
                raise NetFormatError(f"transition {t.id!r} has non-positive rate")
            for p in list(t.pre) + list(t.post):
                if p not in place_set:
                    raise NetFormatError(f"transition {t.id!r} uses undeclared place {p!r}")
            if any(c <= 0 for c in t.pre.values()) or any(c <= 0 for c in t.post.values()):
                raise NetFormatError(f"transition {t.id!r} has non-positive arc weight")
            flow = (
                tuple(sorted(t.pre.items())),
                tuple(sorted(t.post.items())),
            )
            if flow in seen_flows:
                raise NetFormatError(
                    f"transition {t.id!r} duplicates another transition's pre/post pair"
                )
            seen_flows.add(flow)

        for p in m0.support():
            if p not in place_set:
                raise NetFormatError(f"initial marking uses undeclared place {p!r}")
        self.m0 = m0

        self.controllable: frozenset[str] = frozenset(controllable)
        if not self.controllable <= seen_ids:
            unknown = sorted(self.controllable - seen_ids)
            raise NetFormatError(f"controllable set has undeclared transitions {unknown}")

        self.rewards = rewards if rewards is not None else RewardTable()
        for key in self.rewards.support():
            if not key <= place_set:
                raise NetFormatError(f"reward entry uses undeclared places {sorted(key - place_set)}")

        self._by_id = {t.id: t for t in self.transitions}
        self._place_index = {p: i for i, p in enumerate(self.places)}
        self._transition_index = {t.id: i for i, t in enumerate(self.transitions)}
        self._classification: Optional[NetClassification] = None
        self._classification_budget = 0

    # -- lookups ----------------------------------------------------------

    def transition(self, tid: str) -> Transition:
        return self._by_id[tid]

    def place_index(self, place: str) -> int:
        return self._place_index[place]

    def transition_index(self, tid: str) -> int:
        return self._transition_index[tid]

    def producers(self, place: str) -> list[Transition]:
        return [t for t in self.transitions if t.post.get(place, 0) > 0]

    def enabled(self, m: Marking, deactivated: frozenset[str] = frozenset()) -> list[Transition]:
        return [t for t in self.transitions if t.id not in deactivated and m.covers(t.pre)]

    # -- reachability / classification ------------------------------------

    def reachability(self, budget: int = DEFAULT_STATE_BUDGET):
        """All reachable markings plus the edge list of the marking graph."""
        edges: dict[Marking, list[tuple[str, Marking]]] = {}
        queue = deque([self.m0])
        seen = {self.m0}
        while queue:
            m = queue.popleft()
            out = []
            for t in self.transitions:
                if m.covers(t.pre):
                    m2 = m.fire(t.pre, t.post)
                    out.append((t.id, m2))
                    if m2 not in seen:
                        if len(seen) >= budget:
                            raise BudgetExceeded(
                                f"reachability exceeded {budget} markings; net may be unbounded"
                            )
                        seen.add(m2)
                        queue.append(m2)
            edges[m] = out
        return seen, edges

    def classify(self, budget: int = DEFAULT_STATE_BUDGET) -> NetClassification:
        if self._classification is not None and self._classification_budget >= budget:
            return self._classification

        ordinary = all(
            all(c <= 1 for c in t.pre.values()) and all(c <= 1 for c in t.post.values())
            for t in self.transitions
        )

        acyclic = self._causality_is_acyclic()

        consumers: dict[str, list[Transition]] = {p: [] for p in self.places}
        for t in self.transitions:
            for p in t.pre:
                consumers[p].append(t)
        free_choice = ordinary
        if free_choice:
            for group in consumers.values():
                pres = {tuple(sorted(t.pre.items())) for t in group}
                if len(pres) > 1:
                    free_choice = False
                    break

        producers: dict[str, int] = {p: 0 for p in self.places}
        for t in self.transitions:
            for p in t.post:
                producers[p] += 1
        no_backward_conflicts = all(n <= 1 for n in producers.values())
        initial_no_predecessors = all(producers[p] == 0 for p in self.m0.support())

        markings, edges = self.reachability(budget)
        safe = ordinary and all(
            all(c <= 1 for c in m.as_dict().values()) for m in markings
        )
        max_run_length = self._longest_run(edges)

        occurrence = (
            safe
            and acyclic
            and no_backward_conflicts
            and initial_no_predecessors
            and not self._has_self_conflict()
        )

        result = NetClassification(
            ordinary=ordinary,
            safe=safe,
            acyclic=acyclic,
            free_choice=free_choice,
            occurrence=occurrence,
            initial_no_predecessors=initial_no_predecessors,
            max_run_length=max_run_length,
        )
        self._classification = result
        self._classification_budget = budget
        return result

    def _causal_successors(self) -> dict[object, list[object]]:
        """Bipartite causal graph: place -> consuming transition -> produced place."""
        succ: dict[object, list[object]] = {p: [] for p in self.places}
        for t in self.transitions:
            succ[("t", t.id)] = [p for p in t.post]
            for p in t.pre:
                succ[p].append(("t", t.id))
        return succ

    def _causality_is_acyclic(self) -> bool:
        succ = self._causal_successors()
        state: dict[object, int] = {}  # 0 in-progress, 1 done
        for root in succ:
            if root in state:
                continue
            stack = [(root, iter(succ[root]))]
            state[root] = 0
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    mark = state.get(nxt)
                    if mark == 0:
                        return False
                    if mark is None:
                        state[nxt] = 0
                        stack.append((nxt, iter(succ[nxt])))
                        advanced = True
                        break
                if not advanced:
                    state[node] = 1
                    stack.pop()
        return True

    def _descendants(self, tid: str) -> set[object]:
        succ = self._causal_successors()
        start = ("t", tid)
        seen: set[object] = set()
        stack = list(succ[start])
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(succ.get(node, []))
        return seen | {start}  # a transition depends on itself for conflict purposes

    def _has_self_conflict(self) -> bool:
        conflicting: list[tuple[str, str]] = []
        ids = [t.id for t in self.transitions]
        for i, a in enumerate(ids):
            pre_a = set(self._by_id[a].pre)
            for b in ids[i + 1 :]:
                if pre_a & set(self._by_id[b].pre):
                    conflicting.append((a, b))
        if not conflicting:
            return False
        desc = {tid: self._descendants(tid) for tid in ids}
        for a, b in conflicting:
            if desc[a] & desc[b]:
                return True
        return False

    def _longest_run(self, edges: dict[Marking, list[tuple[str, Marking]]]) -> Optional[int]:
        """Longest firing sequence, or None when the marking graph has a cycle."""
        indegree: dict[Marking, int] = {m: 0 for m in edges}
        for outs in edges.values():
            for _, m2 in outs:
                indegree[m2] += 1
        order: list[Marking] = []
        queue = deque(m for m, d in indegree.items() if d == 0)
        while queue:
            m = queue.popleft()
            order.append(m)
            for _, m2 in edges[m]:
                indegree[m2] -= 1
                if indegree[m2] == 0:
                    queue.append(m2)
        if len(order) != len(edges):
            return None
        depth: dict[Marking, int] = {m: 0 for m in edges}
        for m in order:
            for _, m2 in edges[m]:
                depth[m2] = max(depth[m2], depth[m] + 1)
        return max(depth.values(), default=0)

    def __repr__(self) -> str:
        return (
            f"Sdpn(|P|={len(self.places)}, |T|={len(self.transitions)}, "
            f"|C|={len(self.controllable)}, |supp(R)|={len(self.rewards)})"
        )


# ---------------------------------------------------------------------------
# branching cells
# ---------------------------------------------------------------------------


def compute_cells(net: Sdpn) -> list[Cell]:
    """Partition the transitions into cells of identical pre-multisets."""
    groups: dict[tuple, list[Transition]] = {}
    for t in net.transitions:
        groups.setdefault(tuple(sorted(t.pre.items())), []).append(t)
    cells = []
    for members in groups.values():
        tids = frozenset(t.id for t in members)
        pre_places = frozenset(p for t in members for p in t.pre)
        post_places = frozenset(p for t in members for p in t.post)
        cells.append(
            Cell(id=min(tids), transitions=tids, pre_places=pre_places, post_places=post_places)
        )
    cells.sort(key=lambda c: c.id)
    return cells


def order_cells(net: Sdpn) -> CellOrder:
    """Total order on cells extending causal precedence.

    Incomparable cells are ordered by their smallest member transition id,
    which makes the result deterministic for a fixed net.
    """
    if not net._causality_is_acyclic():
        raise CyclicNet("cell ordering requires an acyclic net")
    cells = compute_cells(net)
    cell_of: dict[str, int] = {}
    for i, cell in enumerate(cells):
        for tid in cell.transitions:
            cell_of[tid] = i

    # Edge i -> j when some member of cell i causally precedes a member of cell j.
    succs: dict[str, set[str]] = {t.id: set() for t in net.transitions}
    produced_by: dict[str, list[str]] = {}
    for t in net.transitions:
        for p in t.post:
            produced_by.setdefault(p, []).append(t.id)
    for t in net.transitions:
        for p in t.pre:
            for producer in produced_by.get(p, []):
                succs[producer].add(t.id)

    preceded: set[tuple[int, int]] = set()
    for tid, followers in succs.items():
        stack = list(followers)
        seen: set[str] = set()
        while stack:
            nxt = stack.pop()
            if nxt in seen:
                continue
            seen.add(nxt)
            preceded.add((cell_of[tid], cell_of[nxt]))
            stack.extend(succs[nxt])

    indegree = [0] * len(cells)
    out: dict[int, set[int]] = {i: set() for i in range(len(cells))}
    for i, j in preceded:
        if i != j and j not in out[i]:
            out[i].add(j)
            indegree[j] += 1

    frontier = sorted(
        (i for i in range(len(cells)) if indegree[i] == 0), key=lambda i: cells[i].id
    )
    ordered: list[Cell] = []
    while frontier:
        i = frontier.pop(0)
        ordered.append(cells[i])
        changed = False
        for j in out[i]:
            indegree[j] -= 1
            if indegree[j] == 0:
                frontier.append(j)
                changed = True
        if changed:
            frontier.sort(key=lambda i: cells[i].id)
    if len(ordered) != len(cells):
        raise CyclicNet("cells are cyclically dependent")
    return CellOrder(cells=tuple(ordered))


# ---------------------------------------------------------------------------
# JSON net format
# ---------------------------------------------------------------------------

_NET_FIELDS = {"places", "transitions", "initial", "controllable", "rewards"}
_TRANSITION_FIELDS = {"id", "pre", "post", "rate"}
_REWARD_FIELDS = {"places", "value"}


def net_from_dict(doc: dict) -> Sdpn:
    if not isinstance(doc, dict):
        raise NetFormatError("net document must be a JSON object")
    unknown = set(doc) - _NET_FIELDS
    if unknown:
        raise NetFormatError(f"unknown net fields: {sorted(unknown)}")
    for field in ("places", "transitions"):
        if field not in doc:
            raise NetFormatError(f"missing net field {field!r}")
    transitions = []
    for tdoc in doc["transitions"]:
        extra = set(tdoc) - _TRANSITION_FIELDS
        if extra:
            raise NetFormatError(f"unknown transition fields: {sorted(extra)}")
        transitions.append(
            Transition(
                id=tdoc["id"],
                pre=dict(tdoc.get("pre", {})),
                post=dict(tdoc.get("post", {})),
                rate=parse_rational(tdoc.get("rate", 1)),
            )
        )
    rewards = []
    for rdoc in doc.get("rewards", []):
        extra = set(rdoc) - _REWARD_FIELDS
        if extra:
            raise NetFormatError(f"unknown reward fields: {sorted(extra)}")
        rewards.append((frozenset(rdoc["places"]), parse_rational(rdoc["value"])))
    return Sdpn(
        places=doc["places"],
        transitions=transitions,
        m0=Marking(doc.get("initial", {})),
        controllable=doc.get("controllable", []),
        rewards=RewardTable(rewards),
    )


def net_to_dict(net: Sdpn) -> dict:
    return {
        "places": list(net.places),
        "transitions": [
            {
                "id": t.id,
                "pre": {p: t.pre[p] for p in sorted(t.pre)},
                "post": {p: t.post[p] for p in sorted(t.post)},
                "rate": format_rational(t.rate),
            }
            for t in net.transitions
        ],
        "initial": dict(sorted(net.m0.as_dict().items())),
        "controllable": sorted(net.controllable),
        "rewards": [
            {"places": sorted(places), "value": format_rational(value)}
            for places, value in sorted(net.rewards.items(), key=lambda kv: sorted(kv[0]))
        ],
    }


def load_net(path: str) -> Sdpn:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise NetFormatError(f"invalid JSON in {path}: {exc}") from exc
    return net_from_dict(doc)


def save_net(net: Sdpn, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(net_to_dict(net), handle, indent=2, sort_keys=True)
        handle.write("\n")
