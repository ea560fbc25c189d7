"""Constructive reductions between net policy problems and network queries.

Three directions are implemented, each returning a certificate that records
the deterministic name mangling and the threshold mapping so callers can
translate witnesses back and forth:

* a binary Bayesian network with input map-variables becomes a safe acyclic
  free-choice net whose constant-policy values are the conditional evidence
  probabilities;
* a safe acyclic free-choice net (with bounded per-cell controllables and
  bounded rewarded places) becomes a Bayesian network whose single evidence
  variable is true with probability equal to the affinely rescaled value,
  with wide CPTs split into binary and/or cascades;
* a width-3 CNF formula becomes a free-choice occurrence net whose constant
  policies are variable assignments, satisfiable iff some policy's value
  exceeds (number of clauses - 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Optional

from .bayes import BayesNet, BnNode, MapQuery
from .errors import (
    AssumptionViolated,
    BoundExceeded,
    NetFormatError,
    NotBinary,
    NotSafc,
    NotUniformInput,
)
from .net import Marking, RewardTable, Sdpn, Transition, format_rational, order_cells
from .semantics import PsiTransform, psi

EPSILON = "eps"  # cell-variable value for "no member fired"


@dataclass(frozen=True)
class ReductionCert:
    """Traceability record: injective name maps plus the threshold mapping."""

    kind: str
    name_map: dict[str, str]
    threshold_note: str
    psi_transform: Optional[PsiTransform] = None

    def __post_init__(self):
        values = list(self.name_map.values())
        if len(set(values)) != len(values):
            raise NetFormatError("reduction name map is not injective")

    def map_threshold(self, p: Fraction) -> Fraction:
        if self.psi_transform is None:
            return p
        return self.psi_transform.apply(p)


# ---------------------------------------------------------------------------
# Bayesian network -> safe acyclic free-choice net
# ---------------------------------------------------------------------------


def bn_to_safc(
    bn: BayesNet,
    evidence_nodes: Iterable[str],
    evidence: Iterable[str],
    map_nodes: Iterable[str],
) -> tuple[Sdpn, ReductionCert]:
    """Simulate the network's probabilistic choices with a free-choice net.

    Each node gets one chooser cell per row of its CPT (rates are the row's
    probabilities) plus rate-1 duplicators that copy the chosen value place
    into per-child wire places; the duplication is what keeps every conflict
    free-choice.  Map nodes must be input nodes; their choosers are the
    controllable transitions, and the reward marks exactly the evidence
    value places.  Deactivating, for each map node, the chooser of the
    non-chosen value forces that assignment, so constant-policy values equal
    conditional evidence probabilities.
    """
    e_nodes = tuple(evidence_nodes)
    e_values = tuple(evidence)
    f_nodes = tuple(map_nodes)
    if len(e_nodes) != len(e_values):
        raise ValueError("evidence values do not match evidence nodes")
    if set(e_nodes) & set(f_nodes):
        raise ValueError("evidence and map nodes must be disjoint")
    for node in bn:
        if node.domain != ("0", "1"):
            raise NotBinary(f"node {node.id!r} has domain {node.domain}, expected ('0', '1')")
    for node_id in f_nodes:
        node = bn.node(node_id)
        if node.parents:
            raise NotUniformInput(f"map node {node_id!r} is not an input node")
        if any(p == 0 for p in node.cpt[()].values()):
            raise NotUniformInput(f"map node {node_id!r} has a zero prior")
    for node_id, value in zip(e_nodes, e_values):
        if value not in bn.node(node_id).domain:
            raise ValueError(f"evidence value {value!r} not in domain of {node_id!r}")

    children: dict[str, list[str]] = {node.id: [] for node in bn}
    for node in bn:
        for parent in node.parents:
            children[parent].append(node.id)

    places: list[str] = []
    transitions: list[Transition] = []
    initial: dict[str, int] = {}
    name_map: dict[str, str] = {}

    def value_place(node_id: str, value: str) -> str:
        return f"v_{node_id}_{value}"

    def wire_place(parent: str, child: str, bits: tuple[str, ...]) -> str:
        return f"w_{parent}_{child}_{''.join(bits)}"

    def start_place(node_id: str) -> str:
        return f"s_{node_id}"

    for node in bn:
        for value in node.domain:
            pid = value_place(node.id, value)
            places.append(pid)
            name_map[f"place:{node.id}={value}"] = pid
        if node.parents:
            for bits in product(*(bn.node(p).domain for p in node.parents)):
                for parent in node.parents:
                    places.append(wire_place(parent, node.id, bits))
        else:
            pid = start_place(node.id)
            places.append(pid)
            initial[pid] = 1

    controllable: list[str] = []
    for node in bn:
        rows = (
            list(product(*(bn.node(p).domain for p in node.parents)))
            if node.parents
            else [()]
        )
        for bits in rows:
            pre = (
                {wire_place(parent, node.id, bits): 1 for parent in node.parents}
                if node.parents
                else {start_place(node.id): 1}
            )
            for value in node.domain:
                rate = node.cpt[bits][value]
                # A rate-0 transition could never fire; leaving it out keeps
                # the remaining cell distribution unchanged and rates positive.
                if rate == 0:
                    continue
                tid = f"c_{node.id}_{''.join(bits)}_{value}"
                transitions.append(Transition(tid, pre, {value_place(node.id, value): 1}, rate))
                if not node.parents:
                    name_map[f"chooser:{node.id}={value}"] = tid
                if node.id in f_nodes:
                    controllable.append(tid)
        for value in node.domain:
            post = {}
            for child in children[node.id]:
                child_node = bn.node(child)
                slot = child_node.parents.index(node.id)
                for bits in product(*(bn.node(p).domain for p in child_node.parents)):
                    if bits[slot] == value:
                        post[wire_place(node.id, child, bits)] = 1
            transitions.append(
                Transition(f"d_{node.id}_{value}", {value_place(node.id, value): 1}, post, Fraction(1))
            )

    if len(set(places)) != len(places):
        raise NetFormatError("generated place names collide; rename network nodes")

    rewards = RewardTable(
        [(frozenset(value_place(n, v) for n, v in zip(e_nodes, e_values)), Fraction(1))]
    )
    net = Sdpn(
        places=places,
        transitions=transitions,
        m0=Marking(initial),
        controllable=controllable,
        rewards=rewards,
    )
    cert = ReductionCert(kind="bn_to_safc", name_map=name_map, threshold_note="identity")
    return net, cert


def bn_to_safc_deactivation(cert: ReductionCert, f: Mapping[str, str]) -> frozenset[str]:
    """The deactivation set that forces the map assignment f."""
    out = []
    for node_id, value in f.items():
        other = "1" if value == "0" else "0"
        out.append(cert.name_map[f"chooser:{node_id}={other}"])
    return frozenset(out)


# ---------------------------------------------------------------------------
# safe acyclic free-choice net -> Bayesian network
# ---------------------------------------------------------------------------


def safc_to_bn(
    net: Sdpn,
    k: int,
    l: int,
    parent_cap: int = 2,
) -> tuple[BayesNet, MapQuery, ReductionCert]:
    """Encode a net's constant-policy value problem as a MAP query.

    Variables: one boolean per place (was it marked), one uniform boolean
    per controllable transition (is it active; these are the map variables),
    one per cell recording which member fired (or nothing), and one reward
    variable whose conditional chance of being 1 is the affinely rescaled
    payoff.  A query threshold p must therefore be rescaled the same way;
    the certificate carries the transform.

    Cell variables with more than ``parent_cap`` place parents are split
    with a binary conjunction cascade, place variables with more than
    ``parent_cap`` producing cells with a binary disjunction cascade, so
    CPT sizes stay linear apart from the 2**k controllable combinations and
    the 2**l reward combinations, which the bounds keep constant.
    """
    cls = net.classify()
    if not (cls.safe and cls.acyclic and cls.free_choice):
        raise NotSafc("reduction requires a safe, acyclic, free-choice net")
    if not cls.initial_no_predecessors:
        raise AssumptionViolated("an initially marked place has a producing transition")

    order = order_cells(net)
    cells = order.cells
    for cell in cells:
        if len(cell.transitions & net.controllable) > k:
            raise BoundExceeded(
                f"cell {cell.id!r} has more than {k} controllable transitions"
            )
    rewarded = frozenset().union(*net.rewards.support()) if len(net.rewards) else frozenset()
    if len(rewarded) > l:
        raise BoundExceeded(f"{len(rewarded)} rewarded places exceed the bound {l}")

    place_var = {p: f"Xp_{p}" for p in net.places}
    ctrl_sorted = sorted(net.controllable, key=net.transition_index)
    ctrl_var = {t: f"Xt_{t}" for t in ctrl_sorted}
    cell_var = {cell.id: f"Xc_{cell.id}" for cell in cells}
    reward_var = "Xrew"
    all_names = list(place_var.values()) + list(ctrl_var.values()) + list(cell_var.values())
    if len(set(all_names)) != len(all_names):
        raise NetFormatError("generated variable names collide; rename net elements")

    producing_cells: dict[str, list] = {p: [] for p in net.places}
    for cell in cells:
        for p in sorted(cell.post_places, key=net.place_index):
            producing_cells[p].append(cell)

    nodes: list[BnNode] = []
    transform = psi(net.rewards)

    def bool_node(node_id: str, parents: tuple[str, ...], truth) -> BnNode:
        """truth: parent-value tuple -> bool."""
        rows = {}
        domains = [next(n.domain for n in nodes if n.id == pid) for pid in parents]
        for bits in product(*domains):
            value = truth(bits)
            rows[bits] = {
                "1": Fraction(1 if value else 0),
                "0": Fraction(0 if value else 1),
            }
        return BnNode(id=node_id, domain=("0", "1"), parents=parents, cpt=rows)

    # Map variables first: uniform binary inputs.
    for tid in ctrl_sorted:
        nodes.append(
            BnNode(
                id=ctrl_var[tid],
                domain=("0", "1"),
                parents=(),
                cpt={(): {"0": Fraction(1, 2), "1": Fraction(1, 2)}},
            )
        )

    # Interleave cell and place variables along the cell order so parents
    # always precede children.
    for p in net.places:
        if not producing_cells[p]:
            value = "1" if p in net.m0.support() else "0"
            nodes.append(
                BnNode(
                    id=place_var[p],
                    domain=("0", "1"),
                    parents=(),
                    cpt={(): {value: Fraction(1), ("0" if value == "1" else "1"): Fraction(0)}},
                )
            )

    for cell in cells:
        members = sorted(cell.transitions, key=net.transition_index)
        if EPSILON in members:
            raise NetFormatError(f"transition id {EPSILON!r} collides with the idle marker")
        domain = (EPSILON, *members)
        pre_sorted = sorted(cell.pre_places, key=net.place_index)
        ctrl_members = [t for t in members if t in net.controllable]

        def cell_rows(precondition_arity: int, parents: tuple[str, ...]) -> dict:
            """CPT with `precondition_arity` leading 0/1 place bits, then the
            controllable activation bits."""
            rows = {}
            for bits in product(("0", "1"), repeat=precondition_arity + len(ctrl_members)):
                place_bits = bits[:precondition_arity]
                act_bits = bits[precondition_arity:]
                active = [
                    t
                    for t in members
                    if t not in net.controllable
                    or act_bits[ctrl_members.index(t)] == "1"
                ]
                row = {value: Fraction(0) for value in domain}
                if all(b == "1" for b in place_bits) and active:
                    total = sum((net.transition(t).rate for t in active), Fraction(0))
                    for t in active:
                        row[t] = net.transition(t).rate / total
                row[EPSILON] = 1 - sum(row[t] for t in members)
                rows[bits] = row
            return rows

        if len(pre_sorted) <= parent_cap:
            parents = tuple(place_var[p] for p in pre_sorted) + tuple(
                ctrl_var[t] for t in ctrl_members
            )
            nodes.append(
                BnNode(
                    id=cell_var[cell.id],
                    domain=domain,
                    parents=parents,
                    cpt=cell_rows(len(pre_sorted), parents),
                )
            )
        else:
            # Conjunction cascade over the place preconditions.
            prev = f"Xand_{cell.id}_1"
            nodes.append(
                bool_node(
                    prev,
                    (place_var[pre_sorted[0]], place_var[pre_sorted[1]]),
                    lambda bits: bits[0] == "1" and bits[1] == "1",
                )
            )
            for i, p in enumerate(pre_sorted[2:], start=2):
                nxt = f"Xand_{cell.id}_{i}"
                nodes.append(
                    bool_node(
                        nxt,
                        (prev, place_var[p]),
                        lambda bits: bits[0] == "1" and bits[1] == "1",
                    )
                )
                prev = nxt
            parents = (prev,) + tuple(ctrl_var[t] for t in ctrl_members)
            nodes.append(
                BnNode(
                    id=cell_var[cell.id],
                    domain=domain,
                    parents=parents,
                    cpt=cell_rows(1, parents),
                )
            )

        for p in sorted(cell.post_places, key=net.place_index):
            if producing_cells[p] and producing_cells[p][-1].id == cell.id:
                _emit_place_node(net, nodes, place_var, cell_var, producing_cells[p], p, parent_cap)

    reward_parents = tuple(place_var[p] for p in sorted(rewarded, key=net.place_index))
    rows = {}
    for bits in product(("0", "1"), repeat=len(reward_parents)):
        marked = {
            p
            for p, bit in zip(sorted(rewarded, key=net.place_index), bits)
            if bit == "1"
        }
        chance = transform.apply(net.rewards.value_of(marked))
        rows[bits] = {"1": chance, "0": 1 - chance}
    nodes.append(BnNode(id=reward_var, domain=("0", "1"), parents=reward_parents, cpt=rows))

    bn = BayesNet(nodes)
    query = MapQuery(
        evidence_nodes=(reward_var,),
        evidence=("1",),
        map_nodes=tuple(ctrl_var[t] for t in ctrl_sorted),
        threshold=None,  # callers rescale their own p via the certificate
    )
    name_map = {f"place:{p}": v for p, v in place_var.items()}
    name_map.update({f"ctrl:{t}": v for t, v in ctrl_var.items()})
    name_map.update({f"cell:{c}": v for c, v in cell_var.items()})
    name_map["reward"] = reward_var
    cert = ReductionCert(
        kind="safc_to_bn",
        name_map=name_map,
        threshold_note=(
            f"p -> (p - ({format_rational(transform.v_min)})) / "
            f"({format_rational(transform.v_max - transform.v_min)})"
            if not transform.degenerate
            else "degenerate: all values rescale to 0"
        ),
        psi_transform=transform,
    )
    return bn, query, cert


def _emit_place_node(net, nodes, place_var, cell_var, cells, p, parent_cap) -> None:
    def marks(value: str) -> bool:
        return value != EPSILON and p in net.transition(value).post

    if len(cells) <= parent_cap:
        parents = tuple(cell_var[c.id] for c in cells)
        domains = [next(n.domain for n in nodes if n.id == pid) for pid in parents]
        rows = {}
        for bits in product(*domains):
            value = any(marks(b) for b in bits)
            rows[bits] = {"1": Fraction(1 if value else 0), "0": Fraction(0 if value else 1)}
        nodes.append(BnNode(id=place_var[p], domain=("0", "1"), parents=parents, cpt=rows))
        return

    # Disjunction cascade over producing cells.
    def or_node(node_id: str, parents: tuple[str, ...], kinds: tuple[str, ...]) -> BnNode:
        domains = [next(n.domain for n in nodes if n.id == pid) for pid in parents]
        rows = {}
        for bits in product(*domains):
            value = False
            for kind, bit in zip(kinds, bits):
                if kind == "bool":
                    value = value or bit == "1"
                else:
                    value = value or marks(bit)
            rows[bits] = {"1": Fraction(1 if value else 0), "0": Fraction(0 if value else 1)}
        return BnNode(id=node_id, domain=("0", "1"), parents=parents, cpt=rows)

    prev = f"Xor_{p}_1"
    nodes.append(
        or_node(prev, (cell_var[cells[0].id], cell_var[cells[1].id]), ("cell", "cell"))
    )
    for i, cell in enumerate(cells[2:-1], start=2):
        nxt = f"Xor_{p}_{i}"
        nodes.append(or_node(nxt, (prev, cell_var[cell.id]), ("bool", "cell")))
        prev = nxt
    nodes.append(or_node(place_var[p], (prev, cell_var[cells[-1].id]), ("bool", "cell")))


def safc_to_bn_assignment(cert: ReductionCert, deactivated: Iterable[str]) -> dict[str, str]:
    """Map-variable assignment encoding a deactivation set (active = 1)."""
    d = frozenset(deactivated)
    out = {}
    for key, var in cert.name_map.items():
        if key.startswith("ctrl:"):
            tid = key[len("ctrl:"):]
            out[var] = "0" if tid in d else "1"
    return out


# ---------------------------------------------------------------------------
# 3-SAT -> free-choice occurrence net
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CnfFormula:
    """CNF with exactly three literals per clause; a literal is (variable, positive)."""

    variables: tuple[str, ...]
    clauses: tuple[tuple[tuple[str, bool], ...], ...]

    def __post_init__(self):
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise NetFormatError("duplicate CNF variables")
        for clause in self.clauses:
            if len(clause) != 3:
                raise NetFormatError(f"clause {clause} does not have exactly 3 literals")
            for var, _sign in clause:
                if var not in declared:
                    raise NetFormatError(f"undeclared variable {var!r}")

    def satisfied_by(self, assignment: Mapping[str, bool]) -> bool:
        return all(
            any(assignment[var] == sign for var, sign in clause) for clause in self.clauses
        )


def parse_dimacs(text: str) -> CnfFormula:
    """DIMACS CNF; clauses shorter than 3 literals are padded by repetition."""
    num_vars = None
    clauses: list[tuple[tuple[str, bool], ...]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise NetFormatError(f"invalid problem line: {line!r}")
            num_vars = int(parts[2])
            continue
        literals = [int(x) for x in line.split()]
        if not literals or literals[-1] != 0:
            raise NetFormatError(f"clause must end with 0: {line!r}")
        body = literals[:-1]
        if not body:
            continue
        if len(body) > 3:
            raise NetFormatError(f"clause has more than 3 literals: {line!r}")
        while len(body) < 3:
            body.append(body[-1])
        clauses.append(tuple((f"x{abs(lit)}", lit > 0) for lit in body))
    if num_vars is None:
        raise NetFormatError("missing 'p cnf' problem line")
    return CnfFormula(
        variables=tuple(f"x{i}" for i in range(1, num_vars + 1)),
        clauses=tuple(clauses),
    )


def reward_disjunction(r1: RewardTable, r2: RewardTable) -> RewardTable:
    """Inclusion-exclusion on reward tables, computed over supports only:
    the payoff of the result is V1 + V2 - V1*V2 on every place set."""
    items: list[tuple[frozenset, Fraction]] = []
    items.extend(r1.items())
    items.extend(r2.items())
    for q1, v1 in r1.items():
        for q2, v2 in r2.items():
            items.append((q1 | q2, -v1 * v2))
    return RewardTable.accumulate(items)


def sat_to_fcon(cnf: CnfFormula) -> tuple[Sdpn, Fraction, ReductionCert]:
    """One rate-1 controllable transition per variable, moving a token from
    an input place to an output place; "variable true" reads as "transition
    deactivated" (output place never marked).  Literal reward tables encode
    truth of a literal as payoff 1, clauses combine them by inclusion-
    exclusion, and the whole formula is the clause sum, so an assignment is
    a model exactly when its policy value exceeds (clause count - 1)."""
    places = []
    transitions = []
    initial = {}
    name_map = {}
    for var in cnf.variables:
        p_in, p_out, tid = f"p_{var}", f"q_{var}", f"t_{var}"
        places.extend([p_in, p_out])
        transitions.append(Transition(tid, {p_in: 1}, {p_out: 1}, Fraction(1)))
        initial[p_in] = 1
        name_map[f"var:{var}"] = tid
        name_map[f"out:{var}"] = p_out

    def literal_table(var: str, positive: bool) -> RewardTable:
        q = f"q_{var}"
        if positive:
            return RewardTable([(frozenset(), Fraction(1)), (frozenset({q}), Fraction(-1))])
        return RewardTable([(frozenset({q}), Fraction(1))])

    items: list[tuple[frozenset, Fraction]] = []
    for clause in cnf.clauses:
        table = literal_table(*clause[0])
        for lit in clause[1:]:
            table = reward_disjunction(table, literal_table(*lit))
        items.extend(table.items())
    rewards = RewardTable.accumulate(items)

    net = Sdpn(
        places=places,
        transitions=transitions,
        m0=Marking(initial),
        controllable=[t.id for t in transitions],
        rewards=rewards,
    )
    threshold = Fraction(len(cnf.clauses) - 1)
    cert = ReductionCert(
        kind="sat_to_fcon", name_map=name_map, threshold_note="clause count - 1"
    )
    return net, threshold, cert


def sat_assignment_deactivation(cert: ReductionCert, assignment: Mapping[str, bool]) -> frozenset[str]:
    return frozenset(
        cert.name_map[f"var:{var}"] for var, value in assignment.items() if value
    )
