"""Constant-policy synthesis: exhaustive search and SMT-backed search.

Both methods decide the same strict-threshold question: is there a
deactivation set whose exact value exceeds p?  The exhaustive path sweeps
all subsets of the controllables with a configurable valuation backend.
The SMT path serializes the closed-form value expression to SMT-LIB2 and
runs an external solver as an untrusted subprocess: any model it returns is
decoded and re-verified by exact rational evaluation before a yes is
reported.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .errors import (
    CapExceeded,
    SolverOutputUnparseable,
    SolverTimeout,
    SolverUnavailable,
    WitnessVerificationFailed,
)
from .mdp import PositionalPolicy, all_subsets_lex, compile_mdp, evaluate_policy
from .net import Sdpn
from .rewrite import ValueExpression, rewrite_rewards, value_expression, value_via_rewrite
from .semantics import exact_value

VALUERS = ("enumeration", "rewrite", "mdp")
DEFAULT_BRUTE_CAP = 24
DEFAULT_TIMEOUT_MS = 60_000
SOLVER_ENV_VAR = "SDPN_SMT_SOLVER"


@dataclass(frozen=True)
class SolveResult:
    decision: bool
    witness: Optional[frozenset[str]]
    value: Optional[Fraction]
    method: str
    elapsed_ms: float


def _make_valuer(net: Sdpn, valuer: str) -> Callable[[frozenset[str]], Fraction]:
    if valuer == "enumeration":
        return lambda d: exact_value(net, d)
    if valuer == "rewrite":
        _, reward = rewrite_rewards(net)
        return lambda d: value_via_rewrite(net, reward, d)
    if valuer == "mdp":
        mdp = compile_mdp(net)
        return lambda d: evaluate_policy(mdp, PositionalPolicy.constant(mdp, d))
    raise ValueError(f"unknown valuer {valuer!r}; expected one of {VALUERS}")


def brute_force(
    net: Sdpn,
    p: Fraction,
    valuer: str = "rewrite",
    cap: int = DEFAULT_BRUTE_CAP,
) -> SolveResult:
    """Sweep every deactivation set; strict comparison against the threshold.

    The maximizer is reported with the smallest subset-lexicographic witness
    among ties.  For a no-decision the best value is still reported (it is
    the exact optimum over constant policies) but no witness is claimed.
    """
    if len(net.controllable) > cap:
        raise CapExceeded(
            f"{len(net.controllable)} controllable transitions exceed the cap {cap}"
        )
    value_of = _make_valuer(net, valuer)
    started = time.perf_counter()
    best_d: Optional[frozenset[str]] = None
    best_v: Optional[Fraction] = None
    for d in all_subsets_lex(net, net.controllable):
        v = value_of(d)
        if best_v is None or v > best_v:
            best_v = v
            best_d = d
    elapsed = (time.perf_counter() - started) * 1000.0
    assert best_v is not None
    decision = best_v > p
    return SolveResult(
        decision=decision,
        witness=best_d if decision else None,
        value=best_v,
        method=f"brute:{valuer}",
        elapsed_ms=elapsed,
    )


# ---------------------------------------------------------------------------
# SMT-LIB2 emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmtScript:
    text: str
    var_map: dict[str, str]  # transition id -> SMT symbol
    threshold: Fraction
    var_style: str
    expression: ValueExpression  # kept for exact witness re-verification


_SYMBOL_RE = re.compile(r"[A-Za-z0-9_.]+\Z")


def _symbol_for(tid: str, index: int) -> str:
    if _SYMBOL_RE.match(tid):
        return f"x_{tid}"
    return f"x_{index}"


def _real_literal(value: Fraction) -> str:
    num, den = value.numerator, value.denominator
    if den == 1:
        return f"{num}.0" if num >= 0 else f"(- {-num}.0)"
    body = f"(/ {abs(num)}.0 {den}.0)"
    return body if num >= 0 else f"(- {body})"


def emit_smtlib(expr: ValueExpression, p: Fraction, var_style: str = "int01") -> SmtScript:
    """Serialize 'expression value > p' as an SMT-LIB2 satisfiability query.

    One 0/1 variable per controllable transition; int01 encodes them as
    bounded integers (the better-performing choice), bool as booleans.
    Every cell denominator is guarded by an if-then-else so that an
    all-deactivated cell contributes 0 rather than relying on the solver's
    division-by-zero semantics.  Non-controllable occurrence indicators are
    folded away; cells without controllable members fold to constants.
    """
    if var_style not in ("int01", "bool"):
        raise ValueError(f"unknown var_style {var_style!r}")
    var_map = {
        tid: _symbol_for(tid, i) for i, tid in enumerate(expr.controllables)
    }
    lines = [
        "(set-logic QF_NIRA)" if var_style == "int01" else "(set-logic QF_NRA)",
        "(set-option :produce-models true)",
    ]
    for tid in expr.controllables:
        sym = var_map[tid]
        if var_style == "int01":
            lines.append(f"(declare-const {sym} Int)")
            lines.append(f"(assert (<= 0 {sym}))")
            lines.append(f"(assert (<= {sym} 1))")
        else:
            lines.append(f"(declare-const {sym} Bool)")
    for tid in expr.controllables:
        sym = var_map[tid]
        active = f"(to_real {sym})" if var_style == "int01" else f"(ite {sym} 1.0 0.0)"
        lines.append(f"(define-fun a_{sym} () Real {active})")

    def activity(tid: str) -> str:
        return f"a_{var_map[tid]}"

    term_texts = []
    for term in expr.terms:
        coeff = term.coefficient
        factor_texts = []
        for factor in term.factors:
            ctrl_members = [m for m in factor.cell if m[2]]
            if not ctrl_members:
                # Constant factor: rate over total cell rate.
                total = sum((rate for _, rate, _ in factor.cell), Fraction(0))
                coeff *= factor.rate / total
                continue
            num_parts = []
            if factor.controllable:
                num_parts.append(f"(* {_real_literal(factor.rate)} {activity(factor.transition)})")
            else:
                num_parts.append(_real_literal(factor.rate))
            den_parts = []
            for member, rate, controllable in factor.cell:
                if controllable:
                    den_parts.append(f"(* {_real_literal(rate)} {activity(member)})")
                else:
                    den_parts.append(_real_literal(rate))
            num = num_parts[0]
            den = den_parts[0] if len(den_parts) == 1 else "(+ " + " ".join(den_parts) + ")"
            factor_texts.append(f"(ite (= {den} 0.0) 0.0 (/ {num} {den}))")
        parts = [_real_literal(coeff)] + factor_texts
        term_texts.append(parts[0] if len(parts) == 1 else "(* " + " ".join(parts) + ")")

    if not term_texts:
        total_text = "0.0"
    elif len(term_texts) == 1:
        total_text = term_texts[0]
    else:
        total_text = "(+ " + " ".join(term_texts) + ")"
    lines.append(f"(assert (> {total_text} {_real_literal(p)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return SmtScript(
        text="\n".join(lines) + "\n",
        var_map=var_map,
        threshold=p,
        var_style=var_style,
        expression=expr,
    )


# ---------------------------------------------------------------------------
# external solver orchestration
# ---------------------------------------------------------------------------


def default_solver_command() -> Optional[str]:
    return os.environ.get(SOLVER_ENV_VAR)


def _tokenize_sexpr(text: str) -> list[str]:
    return re.findall(r"\(|\)|[^\s()]+", text)


def _parse_sexprs(tokens: list[str]) -> list:
    stack: list[list] = [[]]
    for token in tokens:
        if token == "(":
            stack.append([])
        elif token == ")":
            if len(stack) == 1:
                raise SolverOutputUnparseable("unbalanced parentheses in solver output")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise SolverOutputUnparseable("unbalanced parentheses in solver output")
    return stack[0]


def _model_values(nodes, out: dict[str, object]) -> None:
    for node in nodes:
        if isinstance(node, list):
            if len(node) >= 5 and node[0] == "define-fun" and node[2] == []:
                out[node[1]] = _atom_value(node[4])
            else:
                _model_values(node, out)


def _atom_value(node):
    if isinstance(node, list):
        if len(node) == 2 and node[0] == "-":
            return -_atom_value(node[1])
        if len(node) == 3 and node[0] == "/":
            return Fraction(_atom_value(node[1]), _atom_value(node[2]))
        raise SolverOutputUnparseable(f"unsupported model value {node}")
    if node == "true":
        return True
    if node == "false":
        return False
    try:
        if "." in node:
            num, _, frac = node.partition(".")
            scale = 10 ** len(frac)
            return Fraction(int(num) * scale + int(frac or 0), scale)
        return Fraction(int(node))
    except ValueError as exc:
        raise SolverOutputUnparseable(f"unsupported model value {node!r}") from exc


def solve_smt(
    script: SmtScript,
    solver_cmd: str,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> SolveResult:
    """Run `<solver_cmd> <file>` and decide from its answer.

    The solver is untrusted: a sat answer is only reported as yes after the
    decoded deactivation set strictly beats the threshold under exact
    re-evaluation; disagreement is a hard error since it can only come from
    an encoding or parsing bug.
    """
    argv = shlex.split(solver_cmd) if isinstance(solver_cmd, str) else list(solver_cmd)
    if not argv:
        raise SolverUnavailable("empty solver command")
    started = time.perf_counter()
    with tempfile.NamedTemporaryFile(
        "w", suffix=".smt2", prefix="sdpn_", delete=False
    ) as handle:
        handle.write(script.text)
        path = handle.name
    try:
        try:
            proc = subprocess.run(
                argv + [path],
                capture_output=True,
                text=True,
                timeout=timeout_ms / 1000.0,
            )
        except FileNotFoundError as exc:
            raise SolverUnavailable(f"solver command not found: {argv[0]!r}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SolverTimeout(f"solver exceeded {timeout_ms} ms") from exc
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass
    elapsed = (time.perf_counter() - started) * 1000.0

    status = None
    for line in proc.stdout.splitlines():
        stripped = line.strip()
        if stripped in ("sat", "unsat", "unknown"):
            status = stripped
            break
    if status is None:
        raise SolverOutputUnparseable(
            f"no sat/unsat answer from solver (exit {proc.returncode}); "
            f"stdout={proc.stdout[:500]!r} stderr={proc.stderr[:500]!r}"
        )
    if status == "unknown":
        raise SolverOutputUnparseable("solver answered 'unknown'")
    if status == "unsat":
        return SolveResult(
            decision=False, witness=None, value=None, method="smt", elapsed_ms=elapsed
        )

    values: dict[str, object] = {}
    _model_values(_parse_sexprs(_tokenize_sexpr(proc.stdout)), values)
    deactivated = []
    for tid, sym in script.var_map.items():
        value = values.get(sym, 1)  # unmentioned variables are don't-care
        active = value is True or value == 1
        inactive = value is False or value == 0
        if not (active or inactive):
            raise SolverOutputUnparseable(f"model value for {sym} is {value!r}, expected 0/1")
        if inactive:
            deactivated.append(tid)
    witness = frozenset(deactivated)
    value = script.expression.evaluate(witness)
    if not value > script.threshold:
        raise WitnessVerificationFailed(
            f"solver model gives value {value}, not above threshold {script.threshold}"
        )
    return SolveResult(
        decision=True, witness=witness, value=value, method="smt", elapsed_ms=elapsed
    )


def solve_net_smt(
    net: Sdpn,
    p: Fraction,
    solver_cmd: str,
    var_style: str = "int01",
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> SolveResult:
    """Rewrite, emit, and solve in one step."""
    _, reward = rewrite_rewards(net)
    expr = value_expression(net, reward)
    script = emit_smtlib(expr, p, var_style=var_style)
    return solve_smt(script, solver_cmd, timeout_ms=timeout_ms)
