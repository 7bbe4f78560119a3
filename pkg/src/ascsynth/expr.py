"""Boolean/integer expressions over state variables.

Expressions appear in DSL guards, in guarded commands and in label
definitions.  They are parsed into a small immutable AST, printed back in
canonical form, evaluated directly, or compiled to Python closures over a
state tuple for fast exploration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

Value = Union[bool, int]


class ExprError(ValueError):
    """Raised for malformed, ill-typed or unbound expressions."""

    def __init__(self, message: str, pos: int | None = None):
        super().__init__(message if pos is None else f"{message} (at offset {pos})")
        self.pos = pos


@dataclass(frozen=True, eq=False)
class Lit:
    value: Value

    # bool is an int subclass; true must not equal 1
    def __eq__(self, other):
        return (
            isinstance(other, Lit)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "!" or "-"
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Var, Unary, Binary]

TRUE = Lit(True)
FALSE = Lit(False)

# binding strength, loosest first
_PREC = {
    "=>": 1,
    "|": 2,
    "&": 3,
    "=": 5, "!=": 5, "<": 5, "<=": 5, ">": 5, ">=": 5,
    "+": 6, "-": 6,
    "*": 7,
}
_BOOL_OPS = {"=>", "|", "&"}
_REL_OPS = {"=", "!=", "<", "<=", ">", ">="}
_ARITH_OPS = {"+", "-", "*"}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>=>|!=|<=|>=|[=<>&|!+\-*()]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprError(f"unexpected character {text[pos:].strip()[:1]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ExprError("unexpected end of expression", len(self.text))
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.binary(1)
        tok = self.peek()
        if tok is not None:
            raise ExprError(f"unexpected token {tok[1]!r}", tok[2])
        return e

    def binary(self, min_prec: int) -> Expr:
        left = self.unary()
        while True:
            tok = self.peek()
            if tok is None or tok[0] != "op" or tok[1] not in _PREC:
                return left
            op = tok[1]
            prec = _PREC[op]
            if prec < min_prec:
                return left
            self.take()
            # "=>" is right-associative, relations do not chain
            right = self.binary(prec if op == "=>" else prec + 1)
            left = Binary(op, left, right)
            if op in _REL_OPS:
                nxt = self.peek()
                if nxt is not None and nxt[1] in _REL_OPS:
                    raise ExprError("relational operators do not chain", nxt[2])

    def unary(self) -> Expr:
        tok = self.take()
        kind, text, pos = tok
        if kind == "op" and text == "!":
            # negation binds looser than relations: !x = 1 means !(x = 1)
            return Unary("!", self.binary(_PREC["="]))
        if kind == "op" and text == "-":
            nxt = self.peek()
            if nxt is not None and nxt[0] == "num":
                self.take()
                return Lit(-int(nxt[1]))  # a negative literal
            return Unary("-", self.unary())
        if kind == "op" and text == "(":
            e = self.binary(1)
            close = self.take()
            if close[1] != ")":
                raise ExprError("expected ')'", close[2])
            return e
        if kind == "num":
            return Lit(int(text))
        if kind == "id":
            if text == "true":
                return TRUE
            if text == "false":
                return FALSE
            return Var(text)
        raise ExprError(f"unexpected token {text!r}", pos)


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


def to_source(e: Expr) -> str:
    """Canonical text; ``parse_expr(to_source(e)) == e``."""
    return _src(e, 0)


def _src(e: Expr, ctx: int) -> str:
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return str(e.value) if e.value >= 0 or ctx == 0 else f"({e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "!":
            s = "!" + _src(e.arg, _PREC["="])
            return f"({s})" if ctx >= _PREC["="] else s
        inner = _src(e.arg, 8)
        # "-3" would read back as a literal, so negated literals keep parentheses
        return f"-({inner})" if isinstance(e.arg, Lit) else "-" + inner
    prec = _PREC[e.op]
    if e.op == "=>":
        s = f"{_src(e.left, prec + 1)} => {_src(e.right, prec)}"
    elif e.op in _REL_OPS:
        s = f"{_src(e.left, prec + 1)} {e.op} {_src(e.right, prec + 1)}"
    else:
        s = f"{_src(e.left, prec)} {e.op} {_src(e.right, prec + 1)}"
    return f"({s})" if prec < ctx else s


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Lit):
        return set()
    if isinstance(e, Unary):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Lit):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


def conj(*parts: Expr) -> Expr:
    """Conjunction that drops ``true`` operands and collapses on ``false``."""
    out: Expr | None = None
    for p in parts:
        if p == TRUE:
            continue
        if p == FALSE:
            return FALSE
        out = p if out is None else Binary("&", out, p)
    return TRUE if out is None else out


def disj(*parts: Expr) -> Expr:
    out: Expr | None = None
    for p in parts:
        if p == FALSE:
            continue
        if p == TRUE:
            return TRUE
        out = p if out is None else Binary("|", out, p)
    return FALSE if out is None else out


def neg(e: Expr) -> Expr:
    if e == TRUE:
        return FALSE
    if e == FALSE:
        return TRUE
    if isinstance(e, Unary) and e.op == "!":
        return e.arg
    return Unary("!", e)


def eq(name: str, value: Value) -> Expr:
    return Binary("=", Var(name), Lit(value))


def one_of(name: str, values: Iterable[int]) -> Expr:
    return disj(*(eq(name, v) for v in values))


def infer_type(e: Expr, types: Mapping[str, str]) -> str:
    """Return ``"bool"`` or ``"int"``; raise ExprError if ill-typed."""
    if isinstance(e, Lit):
        return "bool" if isinstance(e.value, bool) else "int"
    if isinstance(e, Var):
        if e.name not in types:
            raise ExprError(f"unbound identifier {e.name!r}")
        return types[e.name]
    if isinstance(e, Unary):
        t = infer_type(e.arg, types)
        want = "bool" if e.op == "!" else "int"
        if t != want:
            raise ExprError(f"operator {e.op!r} expects {want}, got {t}")
        return want
    lt, rt = infer_type(e.left, types), infer_type(e.right, types)
    if e.op in _BOOL_OPS:
        if lt != "bool" or rt != "bool":
            raise ExprError(f"operator {e.op!r} expects bool operands")
        return "bool"
    if e.op in ("=", "!="):
        if lt != rt:
            raise ExprError(f"cannot compare {lt} with {rt}")
        return "bool"
    if lt != "int" or rt != "int":
        raise ExprError(f"operator {e.op!r} expects int operands")
    return "bool" if e.op in _REL_OPS else "int"


def evaluate(e: Expr, env: Mapping[str, Value]) -> Value:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprError(f"unbound identifier {e.name!r}") from None
    if isinstance(e, Unary):
        v = evaluate(e.arg, env)
        return (not v) if e.op == "!" else -v
    op = e.op
    if op == "&":
        return bool(evaluate(e.left, env)) and bool(evaluate(e.right, env))
    if op == "|":
        return bool(evaluate(e.left, env)) or bool(evaluate(e.right, env))
    if op == "=>":
        return (not evaluate(e.left, env)) or bool(evaluate(e.right, env))
    a, b = evaluate(e.left, env), evaluate(e.right, env)
    if op in ("=", "!="):
        if isinstance(a, bool) != isinstance(b, bool):
            raise ExprError("type error: comparing bool with int")
        return (a == b) if op == "=" else (a != b)
    if isinstance(a, bool) or isinstance(b, bool):
        raise ExprError(f"type error: operator {op!r} on bool")
    return {
        "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
        "+": a + b, "-": a - b, "*": a * b,
    }[op]


def _py(e: Expr, index: Mapping[str, int], consts: Mapping[str, Value]) -> str:
    if isinstance(e, Lit):
        return repr(e.value)
    if isinstance(e, Var):
        if e.name in index:
            return f"s[{index[e.name]}]"
        if e.name in consts:
            return repr(consts[e.name])
        raise ExprError(f"unbound identifier {e.name!r}")
    if isinstance(e, Unary):
        inner = _py(e.arg, index, consts)
        return f"(not {inner})" if e.op == "!" else f"(-{inner})"
    l, r = _py(e.left, index, consts), _py(e.right, index, consts)
    if e.op == "&":
        return f"({l} and {r})"
    if e.op == "|":
        return f"({l} or {r})"
    if e.op == "=>":
        return f"((not {l}) or {r})"
    if e.op == "=":
        return f"({l} == {r})"
    return f"({l} {e.op} {r})"


def compile_expr(
    e: Expr, index: Mapping[str, int], consts: Mapping[str, Value] | None = None
) -> Callable[[tuple], Value]:
    """Compile to ``f(state_tuple)``; ``index`` maps variable -> tuple slot."""
    src = _py(e, index, consts or {})
    return eval(f"lambda s: {src}", {"__builtins__": {}})  # noqa: S307 - generated from AST


def compile_source(e: Expr, index: Mapping[str, int], consts: Mapping[str, Value] | None = None) -> str:
    return _py(e, index, consts or {})
