"""Bayesian networks with exact enumeration-based inference.

Networks are desk-scale here, so marginals are computed by summing the
joint over completions, in topological order with zero-pruning, entirely in
exact rational arithmetic.  Domains are arbitrary finite value lists; this
matters because the net-to-network reduction uses per-cell variables whose
values are transition ids plus a "nothing fired" marker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Optional

import json

from .errors import NetFormatError, ZeroConditioning
from .net import format_rational, parse_rational


@dataclass(frozen=True)
class BnNode:
    id: str
    domain: tuple[str, ...]
    parents: tuple[str, ...]
    # rows keyed by parent-value tuples (in `parents` order), each an exact
    # distribution over `domain`
    cpt: dict[tuple[str, ...], dict[str, Fraction]]


class BayesNet:
    """Finite Bayesian network over string-valued variables."""

    def __init__(self, nodes: Iterable[BnNode]):
        self.nodes: tuple[BnNode, ...] = tuple(nodes)
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise NetFormatError("duplicate node ids")
        for node in self.nodes:
            if len(set(node.domain)) != len(node.domain) or not node.domain:
                raise NetFormatError(f"node {node.id!r} has an invalid domain")
            for parent in node.parents:
                if parent not in self._by_id:
                    raise NetFormatError(f"node {node.id!r} has undeclared parent {parent!r}")
            expected_rows = 1
            for parent in node.parents:
                expected_rows *= len(self._by_id[parent].domain)
            if len(node.cpt) != expected_rows:
                raise NetFormatError(
                    f"node {node.id!r} has {len(node.cpt)} CPT rows, expected {expected_rows}"
                )
            for key, row in node.cpt.items():
                if len(key) != len(node.parents):
                    raise NetFormatError(f"node {node.id!r} row key {key} has wrong arity")
                for j, parent in enumerate(node.parents):
                    if key[j] not in self._by_id[parent].domain:
                        raise NetFormatError(
                            f"node {node.id!r} row key {key} uses a value outside "
                            f"{parent!r}'s domain"
                        )
                if set(row) != set(node.domain):
                    raise NetFormatError(f"node {node.id!r} row {key} does not cover the domain")
                if any(p < 0 for p in row.values()):
                    raise NetFormatError(f"node {node.id!r} row {key} has a negative entry")
                if sum(row.values(), Fraction(0)) != 1:
                    raise NetFormatError(f"node {node.id!r} row {key} does not sum to 1")
        self._topo = self._topological_order()

    def node(self, node_id: str) -> BnNode:
        return self._by_id[node_id]

    def __iter__(self):
        return iter(self.nodes)

    def _topological_order(self) -> tuple[BnNode, ...]:
        order: list[BnNode] = []
        state: dict[str, int] = {}

        def visit(node_id: str) -> None:
            mark = state.get(node_id)
            if mark == 1:
                return
            if mark == 0:
                raise NetFormatError("parent relation has a cycle")
            state[node_id] = 0
            for parent in self._by_id[node_id].parents:
                visit(parent)
            state[node_id] = 1
            order.append(self._by_id[node_id])

        for node in self.nodes:
            visit(node.id)
        return tuple(order)

    def is_input(self, node_id: str) -> bool:
        return not self._by_id[node_id].parents

    def is_uniform_binary_input(self, node_id: str) -> bool:
        node = self._by_id[node_id]
        if node.parents or len(node.domain) != 2:
            return False
        row = node.cpt[()]
        return all(p == Fraction(1, 2) for p in row.values())

    # -- inference ----------------------------------------------------------

    def joint(self, assignment: Mapping[str, str]) -> Fraction:
        if set(assignment) != set(self._by_id):
            missing = sorted(set(self._by_id) - set(assignment))
            raise ValueError(f"assignment must cover every node; missing {missing}")
        prob = Fraction(1)
        for node in self.nodes:
            key = tuple(assignment[p] for p in node.parents)
            value = assignment[node.id]
            if value not in node.cpt[key]:
                raise ValueError(f"value {value!r} not in domain of {node.id!r}")
            prob *= node.cpt[key][value]
            if prob == 0:
                return Fraction(0)
        return prob

    def marginal(self, fixed: Mapping[str, str]) -> Fraction:
        """Probability of a partial assignment, by exact enumeration."""
        for node_id, value in fixed.items():
            if node_id not in self._by_id:
                raise ValueError(f"unknown node {node_id!r}")
            if value not in self._by_id[node_id].domain:
                raise ValueError(f"value {value!r} not in domain of {node_id!r}")
        order = self._topo
        n = len(order)
        assignment: dict[str, str] = {}

        def recurse(i: int, acc: Fraction) -> Fraction:
            if i == n:
                return acc
            node = order[i]
            key = tuple(assignment[p] for p in node.parents)
            row = node.cpt[key]
            want = fixed.get(node.id)
            if want is not None:
                p = row[want]
                if p == 0:
                    return Fraction(0)
                assignment[node.id] = want
                result = recurse(i + 1, acc * p)
                del assignment[node.id]
                return result
            total = Fraction(0)
            for value in node.domain:
                p = row[value]
                if p == 0:
                    continue
                assignment[node.id] = value
                total += recurse(i + 1, acc * p)
                del assignment[node.id]
            return total

        return recurse(0, Fraction(1))


# ---------------------------------------------------------------------------
# decision problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MapQuery:
    """Threshold query: does some assignment of the map nodes make the
    evidence (jointly or conditionally) more likely than the threshold?"""

    evidence_nodes: tuple[str, ...]
    evidence: tuple[str, ...]
    map_nodes: tuple[str, ...]
    threshold: Optional[Fraction] = None

    def __post_init__(self):
        if len(self.evidence_nodes) != len(self.evidence):
            raise ValueError("evidence values do not match evidence nodes")
        if set(self.evidence_nodes) & set(self.map_nodes):
            raise ValueError("evidence and map nodes must be disjoint")


@dataclass(frozen=True)
class PrResult:
    decision: bool
    probability: Fraction


@dataclass(frozen=True)
class MapResult:
    decision: bool
    witness: dict[str, str]
    probability: Fraction


def joint_probability(bn: BayesNet, assignment: Mapping[str, str]) -> Fraction:
    return bn.joint(assignment)


def d_pr(bn: BayesNet, evidence_nodes, evidence, p: Fraction) -> PrResult:
    fixed = dict(zip(tuple(evidence_nodes), tuple(evidence), strict=True))
    prob = bn.marginal(fixed)
    return PrResult(decision=prob > p, probability=prob)


def d_map(bn: BayesNet, query: MapQuery, conditional: bool = True) -> MapResult:
    """Maximize over map-node assignments; strict comparison with the threshold.

    With ``conditional`` the score is P(E=e | F=f), otherwise P(F=f, E=e).
    Ties keep the first maximizer in domain enumeration order.
    """
    if query.threshold is None:
        raise ValueError("query threshold is unset")
    evidence = dict(zip(query.evidence_nodes, query.evidence, strict=True))
    domains = [bn.node(node_id).domain for node_id in query.map_nodes]
    best: Optional[Fraction] = None
    best_f: dict[str, str] = {}
    for values in product(*domains):
        f = dict(zip(query.map_nodes, values))
        score = bn.marginal({**evidence, **f})
        if conditional and query.map_nodes:
            denom = bn.marginal(f)
            if denom == 0:
                raise ZeroConditioning(f"P(F={values}) = 0; conditional score undefined")
            score = score / denom
        if best is None or score > best:
            best = score
            best_f = f
    assert best is not None
    return MapResult(decision=best > query.threshold, witness=best_f, probability=best)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

_BN_FIELDS = {"nodes"}
_NODE_FIELDS = {"id", "domain", "parents", "cpt"}


def bn_from_dict(doc: dict) -> BayesNet:
    if not isinstance(doc, dict):
        raise NetFormatError("network document must be a JSON object")
    unknown = set(doc) - _BN_FIELDS
    if unknown:
        raise NetFormatError(f"unknown network fields: {sorted(unknown)}")
    if "nodes" not in doc:
        raise NetFormatError("missing 'nodes'")
    nodes = []
    for ndoc in doc["nodes"]:
        extra = set(ndoc) - _NODE_FIELDS
        if extra:
            raise NetFormatError(f"unknown node fields: {sorted(extra)}")
        parents = tuple(ndoc.get("parents", []))
        cpt: dict[tuple[str, ...], dict[str, Fraction]] = {}
        for key, row in ndoc["cpt"].items():
            key_tuple = tuple(key.split(",")) if key else ()
            cpt[key_tuple] = {v: parse_rational(p) for v, p in row.items()}
        nodes.append(
            BnNode(
                id=ndoc["id"],
                domain=tuple(ndoc["domain"]),
                parents=parents,
                cpt=cpt,
            )
        )
    return BayesNet(nodes)


def bn_to_dict(bn: BayesNet) -> dict:
    nodes = []
    for node in bn.nodes:
        for value in node.domain:
            if "," in value:
                raise NetFormatError(f"domain value {value!r} cannot be serialized")
        nodes.append(
            {
                "id": node.id,
                "domain": list(node.domain),
                "parents": list(node.parents),
                "cpt": {
                    ",".join(key): {v: format_rational(p) for v, p in sorted(row.items())}
                    for key, row in sorted(node.cpt.items())
                },
            }
        )
    return {"nodes": nodes}


def load_bn(path: str) -> BayesNet:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise NetFormatError(f"invalid JSON in {path}: {exc}") from exc
    return bn_from_dict(doc)


def save_bn(bn: BayesNet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(bn_to_dict(bn), handle, indent=2, sort_keys=True)
        handle.write("\n")
