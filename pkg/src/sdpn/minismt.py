"""A tiny reference SMT solver for finite 0/1 problems.

``sdpn-minismt FILE`` reads an SMT-LIB2 script whose variables are Bool or
0/1-bounded Int constants, enumerates all assignments, and answers sat or
unsat with a model in the conventional ``(define-fun ...)`` shape.  It
exists so the external-solver pipeline can be exercised end to end on
machines without a production solver; point SDPN_SMT_SOLVER at z3 or cvc5
for anything serious.

Arithmetic is exact rational; ``ite`` evaluates lazily, so guarded
divisions by zero are never touched.  Int variables must carry asserted
0 <= x <= 1 bounds, otherwise the enumeration would be incomplete and the
script is rejected.
"""

from __future__ import annotations

import re
import sys
from fractions import Fraction
from itertools import product


class MiniSmtError(Exception):
    pass


def _tokenize(text: str) -> list[str]:
    text = re.sub(r";[^\n]*", "", text)
    return re.findall(r"\(|\)|[^\s()]+", text)


def _parse(tokens: list[str]) -> list:
    stack: list[list] = [[]]
    for token in tokens:
        if token == "(":
            stack.append([])
        elif token == ")":
            if len(stack) == 1:
                raise MiniSmtError("unbalanced parentheses")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise MiniSmtError("unbalanced parentheses")
    return stack[0]


def _is_number(token: str) -> bool:
    return re.fullmatch(r"-?\d+(\.\d*)?", token) is not None


def _number(token: str) -> Fraction:
    if "." in token:
        num, _, frac = token.partition(".")
        scale = 10 ** len(frac)
        return Fraction(int(num) * scale + (int(frac) if frac else 0), scale)
    return Fraction(int(token))


class Script:
    def __init__(self):
        self.variables: dict[str, str] = {}  # name -> "Int" | "Bool"
        self.macros: dict[str, list] = {}  # 0-ary define-funs
        self.asserts: list = []
        self.check = False
        self.want_model = False

    def load(self, forms: list) -> None:
        for form in forms:
            if not isinstance(form, list) or not form:
                raise MiniSmtError(f"unexpected top-level form {form!r}")
            head = form[0]
            if head in ("set-logic", "set-option", "set-info", "exit"):
                continue
            if head == "declare-const":
                _, name, sort = form
                self._declare(name, sort)
            elif head == "declare-fun":
                _, name, args, sort = form
                if args:
                    raise MiniSmtError("only 0-ary declarations are supported")
                self._declare(name, sort)
            elif head == "define-fun":
                _, name, args, _sort, body = form
                if args:
                    raise MiniSmtError("only 0-ary definitions are supported")
                self.macros[name] = body
            elif head == "assert":
                self.asserts.append(form[1])
            elif head == "check-sat":
                self.check = True
            elif head == "get-model":
                self.want_model = True
            else:
                raise MiniSmtError(f"unsupported command {head!r}")

    def _declare(self, name: str, sort) -> None:
        if sort not in ("Int", "Bool"):
            raise MiniSmtError(f"unsupported sort {sort!r}")
        self.variables[name] = sort

    def _check_int_bounds(self) -> None:
        lower: set[str] = set()
        upper: set[str] = set()
        for node in self.asserts:
            if isinstance(node, list) and len(node) == 3 and node[0] == "<=":
                a, b = node[1], node[2]
                if a == "0" and isinstance(b, str):
                    lower.add(b)
                if isinstance(a, str) and b == "1":
                    upper.add(a)
        for name, sort in self.variables.items():
            if sort == "Int" and (name not in lower or name not in upper):
                raise MiniSmtError(
                    f"Int variable {name} lacks asserted 0/1 bounds; "
                    "enumeration would be incomplete"
                )

    def solve(self):
        self._check_int_bounds()
        names = list(self.variables)
        domains = [
            ((False, True) if self.variables[n] == "Bool" else (Fraction(0), Fraction(1)))
            for n in names
        ]
        for values in product(*domains):
            env = dict(zip(names, values))
            cache: dict[str, object] = {}
            try:
                if all(self._eval(a, env, cache) is True for a in self.asserts):
                    return env
            except ZeroDivisionError:
                continue  # an unguarded division: this assignment cannot model it
        return None

    def _eval(self, node, env, cache):
        if isinstance(node, str):
            if node in env:
                return env[node]
            if node in cache:
                return cache[node]
            if node in self.macros:
                value = self._eval(self.macros[node], env, cache)
                cache[node] = value
                return value
            if node == "true":
                return True
            if node == "false":
                return False
            if _is_number(node):
                return _number(node)
            raise MiniSmtError(f"unbound symbol {node!r}")
        head = node[0]
        if head == "ite":
            cond = self._eval(node[1], env, cache)
            return self._eval(node[2] if cond is True else node[3], env, cache)
        if head == "and":
            return all(self._eval(arg, env, cache) is True for arg in node[1:])
        if head == "or":
            return any(self._eval(arg, env, cache) is True for arg in node[1:])
        if head == "not":
            return self._eval(node[1], env, cache) is not True
        if head == "=>":
            return (self._eval(node[1], env, cache) is not True) or (
                self._eval(node[2], env, cache) is True
            )
        if head == "to_real":
            return Fraction(self._eval(node[1], env, cache))
        args = [self._eval(arg, env, cache) for arg in node[1:]]
        if head == "+":
            return sum(args, Fraction(0))
        if head == "*":
            out = Fraction(1)
            for a in args:
                out *= a
            return out
        if head == "-":
            if len(args) == 1:
                return -args[0]
            out = args[0]
            for a in args[1:]:
                out -= a
            return out
        if head == "/":
            out = args[0]
            for a in args[1:]:
                if a == 0:
                    raise ZeroDivisionError
                out /= a
            return out
        if head == "=":
            return all(a == args[0] for a in args[1:])
        if head == "distinct":
            return len(set(args)) == len(args)
        if head == "<":
            return all(args[i] < args[i + 1] for i in range(len(args) - 1))
        if head == "<=":
            return all(args[i] <= args[i + 1] for i in range(len(args) - 1))
        if head == ">":
            return all(args[i] > args[i + 1] for i in range(len(args) - 1))
        if head == ">=":
            return all(args[i] >= args[i + 1] for i in range(len(args) - 1))
        raise MiniSmtError(f"unsupported operator {head!r}")


def _format_model(script: Script, env: dict) -> str:
    lines = ["("]
    for name, sort in script.variables.items():
        value = env[name]
        if sort == "Bool":
            text = "true" if value else "false"
        else:
            text = str(value.numerator)
        lines.append(f"  (define-fun {name} () {sort} {text})")
    lines.append(")")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 1:
        print("usage: sdpn-minismt FILE.smt2", file=sys.stderr)
        return 2
    try:
        with open(args[0], "r", encoding="utf-8") as handle:
            forms = _parse(_tokenize(handle.read()))
        script = Script()
        script.load(forms)
        if not script.check:
            print("(error \"no check-sat command\")", file=sys.stderr)
            return 2
        model = script.solve()
    except (MiniSmtError, OSError) as exc:
        print(f"(error \"{exc}\")", file=sys.stderr)
        return 2
    if model is None:
        print("unsat")
    else:
        print("sat")
        if script.want_model:
            print(_format_model(script, model))
    return 0


if __name__ == "__main__":
    sys.exit(main())
