"""Command-line interface.

Reports are printed as human-readable lines or, with --json, as a canonical
JSON document (sorted keys, exact rationals as strings).  Exit status: 0 for
success (and yes-decisions), 1 for no-decisions, 2 for errors, so scripts
can branch on the answer.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from fractions import Fraction
from typing import Optional

from . import bayes as bayes_mod
from . import bench as bench_mod
from . import mdp as mdp_mod
from . import reductions, rewrite, semantics, solve
from .errors import SdpnError
from .net import (
    Sdpn,
    approx_decimal,
    format_rational,
    load_net,
    net_to_dict,
    parse_rational,
    save_net,
)

EXIT_OK = 0
EXIT_NO = 1
EXIT_ERROR = 2


def _canonical_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _rational_fields(value: Fraction) -> dict:
    return {"value": format_rational(value), "value_approx": approx_decimal(value)}


def _print_report(doc: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        sys.stdout.write(_canonical_json(doc))
    else:
        for line in lines:
            print(line)


def _parse_set(text: Optional[str]) -> frozenset[str]:
    if not text:
        return frozenset()
    return frozenset(part.strip() for part in text.split(",") if part.strip())


def _parse_assignment(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    if not text:
        return out
    for part in text.split(","):
        name, sep, value = part.strip().partition("=")
        if not sep:
            raise SdpnError(f"expected name=value, got {part!r}")
        out[name] = value
    return out


def _fmt_set(items) -> str:
    return "{" + ",".join(sorted(items)) + "}"


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_classify(args) -> int:
    net = load_net(args.net)
    cls = net.classify(budget=args.state_budget)
    doc = {
        "command": "classify",
        "ordinary": cls.ordinary,
        "safe": cls.safe,
        "acyclic": cls.acyclic,
        "free_choice": cls.free_choice,
        "occurrence": cls.occurrence,
        "initial_no_predecessors": cls.initial_no_predecessors,
        "max_run_length": "unbounded" if cls.max_run_length is None else cls.max_run_length,
    }
    lines = [f"{key}: {doc[key]}" for key in sorted(doc) if key != "command"]
    _print_report(doc, args.json, lines)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    net = load_net(args.net)
    d = _parse_set(args.deactivate)
    result = semantics.simulate(net, d, seed=args.seed, runs=args.runs, step_cap=args.step_cap)
    doc = {
        "command": "simulate",
        "deactivated": sorted(d),
        "seed": result.seed,
        "runs": result.runs,
        "mean": format_rational(result.mean),
        "mean_approx": approx_decimal(result.mean),
        "stderr": f"{result.stderr:.6f}",
    }
    _print_report(
        doc,
        args.json,
        [
            f"deactivated: {_fmt_set(d)}",
            f"mean: {format_rational(result.mean)} (~{approx_decimal(result.mean)})",
            f"stderr: {result.stderr:.6f}  (runs={result.runs}, seed={result.seed})",
        ],
    )
    return EXIT_OK


def _cmd_value(args) -> int:
    net = load_net(args.net)
    d = _parse_set(args.deactivate)
    if args.method == "enumeration":
        value = semantics.exact_value(net, d)
    elif args.method == "rewrite":
        _, reward = rewrite.rewrite_rewards(net)
        value = rewrite.value_via_rewrite(net, reward, d)
    elif args.method == "mdp":
        mdp = mdp_mod.compile_mdp(net)
        value = mdp_mod.evaluate_policy(mdp, mdp_mod.PositionalPolicy.constant(mdp, d))
    else:  # fcon
        value = semantics.fcon_value(net, d)
    doc = {
        "command": "value",
        "method": args.method,
        "deactivated": sorted(d),
        **_rational_fields(value),
    }
    _print_report(
        doc,
        args.json,
        [f"value of {_fmt_set(d)}: {format_rational(value)} (~{approx_decimal(value)})"],
    )
    return EXIT_OK


def _cmd_compile_mdp(args) -> int:
    net = load_net(args.net)
    mdp = mdp_mod.compile_mdp(net, budget=args.state_budget)
    doc = {"command": "compile-mdp", "states": len(mdp)}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(_canonical_json(mdp_mod.mdp_to_dict(mdp)))
        doc["dump"] = args.out
    _print_report(doc, args.json, [f"states: {len(mdp)}"] + ([f"dump: {args.out}"] if args.out else []))
    return EXIT_OK


def _cmd_optimal(args) -> int:
    net = load_net(args.net)
    mdp = mdp_mod.compile_mdp(net, budget=args.state_budget)
    policy, value = mdp_mod.optimal_positional_policy(mdp)
    best_d, best_v = mdp_mod.best_constant_policy_via_mdp(mdp)
    doc = {
        "command": "optimal",
        "positional_value": format_rational(value),
        "positional_value_approx": approx_decimal(value),
        "initial_action": sorted(policy.action_at(mdp.initial)),
        "best_constant": sorted(best_d),
        "best_constant_value": format_rational(best_v),
        "best_constant_value_approx": approx_decimal(best_v),
    }
    _print_report(
        doc,
        args.json,
        [
            f"optimal positional value: {format_rational(value)} (~{approx_decimal(value)})",
            f"  action at start: {_fmt_set(policy.action_at(mdp.initial))}",
            f"best constant set: {_fmt_set(best_d)}"
            f" value {format_rational(best_v)} (~{approx_decimal(best_v)})",
        ],
    )
    return EXIT_OK


def _cmd_rewrite(args) -> int:
    net = load_net(args.net)
    levels, reward = rewrite.rewrite_rewards(net)
    doc = {
        "command": "rewrite",
        "support_per_level": {str(aux.level): len(aux.entries) for aux in levels},
        "support_final": len(reward),
        "transition_reward": [
            {"transitions": sorted(tids), "value": format_rational(value)}
            for tids, value in sorted(reward.items(), key=lambda kv: sorted(kv[0]))
        ],
    }
    if args.dump_levels:
        dump = _canonical_json(rewrite.levels_to_dict(levels, reward))
        if args.dump_levels == "-":
            sys.stdout.write(dump)
        else:
            with open(args.dump_levels, "w", encoding="utf-8") as handle:
                handle.write(dump)
            doc["dump"] = args.dump_levels
    lines = [f"levels: {[len(aux.entries) for aux in levels]}"]
    for tids, value in sorted(reward.items(), key=lambda kv: sorted(kv[0])):
        lines.append(f"  {_fmt_set(tids)}: {format_rational(value)}")
    _print_report(doc, args.json, lines)
    return EXIT_OK


def _cmd_solve(args) -> int:
    net = load_net(args.net)
    p = parse_rational(args.threshold)
    if args.method == "brute":
        result = solve.brute_force(net, p, valuer=args.valuer, cap=args.cap)
    else:
        solver_cmd = args.solver or solve.default_solver_command()
        if not solver_cmd:
            raise SdpnError(
                "no SMT solver configured; pass --solver or set " + solve.SOLVER_ENV_VAR
            )
        style = "int01" if args.smt_vars == "int" else "bool"
        result = solve.solve_net_smt(
            net, p, solver_cmd, var_style=style, timeout_ms=args.timeout_ms
        )
    doc = {
        "command": "solve",
        "method": result.method,
        "threshold": format_rational(p),
        "decision": "yes" if result.decision else "no",
        "witness": sorted(result.witness) if result.witness is not None else None,
        "value": format_rational(result.value) if result.value is not None else None,
        "value_approx": approx_decimal(result.value) if result.value is not None else None,
        "elapsed_ms": round(result.elapsed_ms, 3),
    }
    lines = [f"decision: {'yes' if result.decision else 'no'} (threshold {format_rational(p)})"]
    if result.witness is not None:
        lines.append(f"witness: {_fmt_set(result.witness)}")
    if result.value is not None:
        lines.append(
            f"value: {format_rational(result.value)} (~{approx_decimal(result.value)})"
        )
    _print_report(doc, args.json, lines)
    return EXIT_OK if result.decision else EXIT_NO


def _cmd_reduce(args) -> int:
    if args.reduction == "bn2safc":
        bn = bayes_mod.load_bn(args.bn)
        evidence = _parse_assignment(args.evidence)
        map_nodes = sorted(_parse_set(args.map))
        net, cert = reductions.bn_to_safc(
            bn, tuple(evidence), tuple(evidence.values()), map_nodes
        )
        if args.out:
            save_net(net, args.out)
        doc = {
            "command": "reduce",
            "reduction": "bn2safc",
            "places": len(net.places),
            "transitions": len(net.transitions),
            "controllable": sorted(net.controllable),
            "threshold_map": cert.threshold_note,
            "out": args.out,
        }
        lines = [
            f"net: {len(net.places)} places, {len(net.transitions)} transitions",
            f"controllable: {_fmt_set(net.controllable)}",
            f"threshold map: {cert.threshold_note}",
        ]
    elif args.reduction == "safc2bn":
        net = load_net(args.net)
        bn, query, cert = reductions.safc_to_bn(
            net, k=args.k, l=args.l, parent_cap=args.parent_cap
        )
        if args.out:
            bayes_mod.save_bn(bn, args.out)
        doc = {
            "command": "reduce",
            "reduction": "safc2bn",
            "nodes": len(bn.nodes),
            "evidence": dict(zip(query.evidence_nodes, query.evidence)),
            "map_nodes": list(query.map_nodes),
            "threshold_map": cert.threshold_note,
            "out": args.out,
        }
        lines = [
            f"network: {len(bn.nodes)} nodes",
            f"evidence: {doc['evidence']}",
            f"map nodes: {', '.join(query.map_nodes)}",
            f"threshold map: {cert.threshold_note}",
        ]
        if args.threshold is not None:
            mapped = cert.map_threshold(parse_rational(args.threshold))
            doc["mapped_threshold"] = format_rational(mapped)
            lines.append(f"mapped threshold: {format_rational(mapped)}")
    else:  # sat2fcon
        with open(args.cnf, "r", encoding="utf-8") as handle:
            cnf = reductions.parse_dimacs(handle.read())
        net, threshold, cert = reductions.sat_to_fcon(cnf)
        if args.out:
            save_net(net, args.out)
        doc = {
            "command": "reduce",
            "reduction": "sat2fcon",
            "variables": len(cnf.variables),
            "clauses": len(cnf.clauses),
            "places": len(net.places),
            "transitions": len(net.transitions),
            "threshold": format_rational(threshold),
            "out": args.out,
        }
        lines = [
            f"net: {len(net.places)} places, {len(net.transitions)} transitions",
            f"threshold: {format_rational(threshold)} (satisfiable iff some value exceeds it)",
        ]
    _print_report(doc, args.json, lines)
    return EXIT_OK


def _cmd_bn_infer(args) -> int:
    bn = bayes_mod.load_bn(args.bn)
    if args.query == "joint":
        assignment = _parse_assignment(args.assign)
        prob = bayes_mod.joint_probability(bn, assignment)
        doc = {"command": "bn-infer", "query": "joint", **_rational_fields(prob)}
        _print_report(
            doc, args.json, [f"joint: {format_rational(prob)} (~{approx_decimal(prob)})"]
        )
        return EXIT_OK
    if args.query == "pr":
        evidence = _parse_assignment(args.evidence)
        p = parse_rational(args.threshold)
        result = bayes_mod.d_pr(bn, tuple(evidence), tuple(evidence.values()), p)
        doc = {
            "command": "bn-infer",
            "query": "pr",
            "decision": "yes" if result.decision else "no",
            "probability": format_rational(result.probability),
            "probability_approx": approx_decimal(result.probability),
            "threshold": format_rational(p),
        }
        _print_report(
            doc,
            args.json,
            [
                f"P(evidence) = {format_rational(result.probability)}"
                f" (~{approx_decimal(result.probability)})",
                f"decision: {'yes' if result.decision else 'no'} (> {format_rational(p)})",
            ],
        )
        return EXIT_OK if result.decision else EXIT_NO
    # map
    evidence = _parse_assignment(args.evidence)
    p = parse_rational(args.threshold)
    query = bayes_mod.MapQuery(
        evidence_nodes=tuple(evidence),
        evidence=tuple(evidence.values()),
        map_nodes=tuple(sorted(_parse_set(args.map))),
        threshold=p,
    )
    result = bayes_mod.d_map(bn, query, conditional=not args.joint)
    doc = {
        "command": "bn-infer",
        "query": "map",
        "conditional": not args.joint,
        "decision": "yes" if result.decision else "no",
        "witness": dict(sorted(result.witness.items())),
        "probability": format_rational(result.probability),
        "probability_approx": approx_decimal(result.probability),
        "threshold": format_rational(p),
    }
    witness_text = ", ".join(f"{k}={v}" for k, v in sorted(result.witness.items()))
    _print_report(
        doc,
        args.json,
        [
            f"decision: {'yes' if result.decision else 'no'} (> {format_rational(p)})",
            f"witness: {witness_text}",
            f"probability: {format_rational(result.probability)}"
            f" (~{approx_decimal(result.probability)})",
        ],
    )
    return EXIT_OK if result.decision else EXIT_NO


def _cmd_bench(args) -> int:
    families = sorted(_parse_set(args.families)) or ["N1", "N2", "N3"]
    sizes = [int(x) for x in args.sizes.split(",")] if "," in args.sizes else None
    if sizes is None:
        if ".." in args.sizes:
            lo, hi = args.sizes.split("..")
            sizes = list(range(int(lo), int(hi) + 1))
        else:
            sizes = [int(args.sizes)]
    cfgs = [
        bench_mod.BenchConfig(family=family, n=n, seed=seed)
        for family in families
        for n in sizes
        for seed in range(args.seeds)
    ]
    solver_cmd = args.solver or solve.default_solver_command()
    records = bench_mod.run_bench(cfgs, solver_cmd=solver_cmd, smt_timeout_ms=args.timeout_ms)
    bench_mod.write_csv(records, args.out)
    figures: list[str] = []
    if not args.no_figures:
        figures = bench_mod.render_figures(records, args.figures_dir or ".")
    doc = {
        "command": "bench",
        "instances": len(records),
        "csv": args.out,
        "figures": figures,
        "aggregate": [
            {k: (round(v, 3) if isinstance(v, float) else v) for k, v in row.items()}
            for row in bench_mod.aggregate(records)
        ],
    }
    lines = [f"wrote {len(records)} records to {args.out}"]
    lines += [f"figure: {path}" for path in figures]
    for row in doc["aggregate"]:
        lines.append(
            f"{row['family']} n={row['n']}: rewrite median "
            f"{row.get('rewrite_ms_median', 0.0)} ms, brute median "
            f"{row.get('brute_ms_median', 0.0)} ms"
        )
    _print_report(doc, args.json, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdpn",
        description="Stochastic decision Petri nets: exact analysis and policy search.",
    )
    parser.add_argument("--json", action="store_true", help="emit a canonical JSON report")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_net(p):
        p.add_argument("--net", required=True, help="net JSON file")

    p = sub.add_parser("classify", help="structural and semantic net classification")
    add_net(p)
    p.add_argument("--state-budget", type=int, default=10**6)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of the expected payoff")
    add_net(p)
    p.add_argument("--deactivate", default="", help="comma-separated transition ids")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=10000)
    p.add_argument("--step-cap", type=int, default=10**6)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("value", help="exact expected payoff of a deactivation set")
    add_net(p)
    p.add_argument("--deactivate", default="")
    p.add_argument(
        "--method",
        choices=["enumeration", "rewrite", "mdp", "fcon"],
        default="enumeration",
    )
    p.set_defaults(func=_cmd_value)

    p = sub.add_parser("compile-mdp", help="compile the net's decision process")
    add_net(p)
    p.add_argument("--state-budget", type=int, default=10**6)
    p.add_argument("--out", help="write a JSON dump of states and transition rows")
    p.set_defaults(func=_cmd_compile_mdp)

    p = sub.add_parser("optimal", help="optimal positional policy and best constant set")
    add_net(p)
    p.add_argument("--state-budget", type=int, default=10**6)
    p.set_defaults(func=_cmd_optimal)

    p = sub.add_parser("rewrite", help="rewrite place rewards into configuration rewards")
    add_net(p)
    p.add_argument("--dump-levels", metavar="PATH", help="write all levels as JSON ('-' for stdout)")
    p.set_defaults(func=_cmd_rewrite)

    p = sub.add_parser("solve", help="is there a deactivation set with value > threshold?")
    add_net(p)
    p.add_argument("--threshold", required=True, help="rational a/b")
    p.add_argument("--method", choices=["brute", "smt"], default="brute")
    p.add_argument("--valuer", choices=list(solve.VALUERS), default="rewrite")
    p.add_argument("--cap", type=int, default=solve.DEFAULT_BRUTE_CAP)
    p.add_argument("--smt-vars", choices=["int", "bool"], default="int")
    p.add_argument("--solver", help=f"solver command (default ${solve.SOLVER_ENV_VAR})")
    p.add_argument("--timeout-ms", type=int, default=solve.DEFAULT_TIMEOUT_MS)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("reduce", help="constructive reductions")
    rsub = p.add_subparsers(dest="reduction", required=True)

    q = rsub.add_parser("bn2safc", help="network MAP query to net policy problem")
    q.add_argument("--bn", required=True)
    q.add_argument("--evidence", required=True, help="e.g. c=0,d=1")
    q.add_argument("--map", required=True, help="comma-separated map nodes")
    q.add_argument("--out", help="write the generated net JSON")
    q.set_defaults(func=_cmd_reduce)

    q = rsub.add_parser("safc2bn", help="net policy problem to network MAP query")
    q.add_argument("--net", required=True)
    q.add_argument("--k", type=int, default=2, help="per-cell controllable bound")
    q.add_argument("--l", type=int, default=8, help="rewarded place bound")
    q.add_argument("--parent-cap", type=int, default=2)
    q.add_argument("--threshold", help="optional rational to map through the rescaling")
    q.add_argument("--out", help="write the generated network JSON")
    q.set_defaults(func=_cmd_reduce)

    q = rsub.add_parser("sat2fcon", help="3-SAT to occurrence-net policy problem")
    q.add_argument("--cnf", required=True, help="DIMACS file")
    q.add_argument("--out", help="write the generated net JSON")
    q.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("bn-infer", help="exact network inference")
    bsub = p.add_subparsers(dest="query", required=True)

    q = bsub.add_parser("joint", help="joint probability of a full assignment")
    q.add_argument("--bn", required=True)
    q.add_argument("--assign", required=True, help="e.g. a=0,b=1,c=0,d=0")
    q.set_defaults(func=_cmd_bn_infer)

    q = bsub.add_parser("pr", help="is P(evidence) above the threshold?")
    q.add_argument("--bn", required=True)
    q.add_argument("--evidence", required=True)
    q.add_argument("--threshold", required=True)
    q.set_defaults(func=_cmd_bn_infer)

    q = bsub.add_parser("map", help="is some map assignment above the threshold?")
    q.add_argument("--bn", required=True)
    q.add_argument("--evidence", required=True)
    q.add_argument("--map", required=True)
    q.add_argument("--threshold", required=True)
    q.add_argument("--joint", action="store_true", help="score P(F,E) instead of P(E|F)")
    q.set_defaults(func=_cmd_bn_infer)

    p = sub.add_parser("bench", help="timing harness over the scalable families")
    p.add_argument("--families", default="", help="subset of N1,N2,N3 (default all)")
    p.add_argument("--sizes", default="1..6", help="e.g. 1..8 or 2,4,6")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--figures-dir", help="directory for rendered figures (default '.')")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--solver", help="optional SMT solver command")
    p.add_argument("--timeout-ms", type=int, default=solve.DEFAULT_TIMEOUT_MS)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SdpnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
