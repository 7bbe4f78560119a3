"""Risk-model DSL: abstract syntax, parser, printer and static validator.

A ``.riskm`` file is a sequence of ``;``-terminated declarations and
``{ ... }`` blocks::

    model cell;
    modes normal ssm stopped;
    var opLoc : [0..3] init 0 owner operator;
    final wp = 6;
    Activity welding { includes moving; successor exchWrkp; actions w_weld; done wp = 4; }
    Command w_weld @ welder { guard rLoc = 2; update 0.9: (weldOn'=true) + 0.1: true; cost value=2; }
    Factor HC { desc "operator close to welding spot"; guard opLoc = 3 & weldOn;
                detectedBy opLoc = 3; faultProb 0.05; mishap o_touch prob 0.2 sev 5;
                mitigatedBy HCmit; resumedBy HCres; }
    Action HCmit : SHUTDOWN { event stop; update (notif'=true); target activity off, mode stopped; }
    constraint RC requiresNOf (2|HRW,HS,HC|2);
    Gradients mode { normal: 0 1 2; ssm: -1 0 1; stopped: -2 -1 0; }

The first declared activity and mode are initial.  Activity and mode names
are integer constants inside expressions (their declaration index), and
``act``/``mode`` are the implicit variables holding the current ones.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .expr import TRUE, Expr, ExprError, Lit, infer_type, parse_expr, to_source, variables

ACTION_KINDS = ("SHUTDOWN", "MODE_SWITCH", "ACTIVITY_SWITCH", "SAFETY_FUNCTION", "RESUME")
RESERVED = {"act", "mode", "true", "false"}
PROB_TOL = 1e-9


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0, rule: str = "syntax"):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col
        self.rule = rule


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: str  # "bool" | "int"
    lo: int = 0
    hi: int = 1
    owner: str | None = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ActivityDecl:
    name: str
    includes: tuple[str, ...] = ()
    successors: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    done: Expr | None = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Branch:
    prob: float
    assigns: tuple[tuple[str, Expr], ...]


@dataclass(frozen=True)
class CommandDecl:
    """A nominal process action owned by an actor."""

    name: str
    actor: str
    guard: Expr = TRUE
    branches: tuple[Branch, ...] = (Branch(1.0, ()),)
    modes: tuple[str, ...] = ()  # permitted safety modes; empty means all
    event: str | None = None
    costs: tuple[tuple[str, float], ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FactorDecl:
    name: str
    description: str = ""
    guard: Expr = TRUE
    detected_by: Expr = TRUE
    detection_fault_prob: float = 0.0
    mishap_action: str | None = None
    mishap_prob: float = 0.0
    severity: float = 0.0
    # alternatives; each alternative is a chain of actions applied in sequence
    mitigations: tuple[tuple[str, ...], ...] = ()
    resumptions: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def mitigation_actions(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for chain in self.mitigations:
            for a in chain:
                seen.setdefault(a)
        return tuple(seen)


@dataclass(frozen=True)
class ActionDecl:
    name: str
    kind: str
    sync_event: str | None = None
    update: tuple[tuple[str, Expr], ...] = ()
    target_activity: str | None = None
    target_mode: str | None = None
    guard: Expr = TRUE
    costs: tuple[tuple[str, float], ...] = ()
    line: int = field(default=0, compare=False)

    def cost(self, quantity: str, default: float = 0.0) -> float:
        return dict(self.costs).get(quantity, default)


@dataclass(frozen=True)
class Constraint:
    subject: str
    lower: int
    upper: int
    over: tuple[str, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class GradientMatrix:
    labels: tuple[str, ...]
    entries: tuple[tuple[float, ...], ...]
    line: int = field(default=0, compare=False)

    def __getitem__(self, key: tuple[str, str]) -> float:
        i, j = key
        return self.entries[self.labels.index(i)][self.labels.index(j)]


@dataclass(frozen=True)
class RiskModel:
    name: str = "model"
    activities: tuple[ActivityDecl, ...] = ()
    safety_modes: tuple[str, ...] = ()
    factors: tuple[FactorDecl, ...] = ()
    actions: tuple[ActionDecl, ...] = ()
    commands: tuple[CommandDecl, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    gradients: Mapping[str, GradientMatrix] = field(default_factory=dict)
    initial: Mapping[str, bool | int] = field(default_factory=dict)
    variables: tuple[VarDecl, ...] = ()
    final: Expr = Lit(False)
    goal: Expr | None = None

    def factor(self, name: str) -> FactorDecl:
        return next(f for f in self.factors if f.name == name)

    def action(self, name: str) -> ActionDecl:
        return next(a for a in self.actions if a.name == name)

    def activity(self, name: str) -> ActivityDecl:
        return next(a for a in self.activities if a.name == name)

    def constants(self) -> dict[str, int]:
        """Activity and mode names as integer constants."""
        out = {a.name: i for i, a in enumerate(self.activities)}
        out.update({m: i for i, m in enumerate(self.safety_modes)})
        return out

    def expanded_actions(self, activity: str) -> tuple[str, ...]:
        """Action set of an activity with ``includes`` inlined."""
        out: dict[str, None] = {}
        stack, seen = [activity], set()
        while stack:
            name = stack.pop(0)
            if name in seen:
                continue
            seen.add(name)
            decl = self.activity(name)
            for a in decl.actions:
                out.setdefault(a)
            stack.extend(decl.includes)
        return tuple(out)

    @property
    def handler_count(self) -> int:
        names = set()
        for f in self.factors:
            names.update(f.mitigation_actions, f.resumptions)
        return len(names)


def restrict(model: RiskModel, factor_names: Iterable[str]) -> RiskModel:
    """Sub-model keeping only the named factors (an analysis increment).

    Constraints mentioning a dropped factor and actions used only by
    dropped factors are removed.
    """
    keep = set(factor_names)
    unknown = keep - {f.name for f in model.factors}
    if unknown:
        raise KeyError(f"unknown factors: {sorted(unknown)}")
    factors = tuple(f for f in model.factors if f.name in keep)
    used = set()
    for f in factors:
        used.update(f.mitigation_actions, f.resumptions)
    handlers = set()
    for f in model.factors:
        handlers.update(f.mitigation_actions, f.resumptions)
    actions = tuple(a for a in model.actions if a.name in used or a.name not in handlers)
    constraints = tuple(
        c for c in model.constraints if c.subject in keep and all(o in keep for o in c.over)
    )
    return replace(model, factors=factors, actions=actions, constraints=constraints)


# ---------------------------------------------------------------- lexer

_LEX = re.compile(
    r"""(?P<ws>\s+|//[^\n]*)
      |(?P<str>"(?:[^"\\]|\\.)*")
      |(?P<num>\d+\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?|\.\d+)
      |(?P<id>[A-Za-z_][A-Za-z0-9_]*)
      |(?P<sym>=>|!=|<=|>=|\.\.|[{}()\[\];:,|@='<>&!+\-*])""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _LEX.match(text, pos)
        if m is None:
            line, col = _linecol(text, pos)
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    return out


def _linecol(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


# ---------------------------------------------------------------- parser

_ASSIGN_RE = re.compile(r"^\s*\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*'\s*=(.*)\)\s*$", re.S)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _lex(text)
        self.i = 0

    # -- token helpers
    def error(self, msg: str, pos: int | None = None, rule: str = "syntax") -> ParseError:
        if pos is None:
            pos = self.toks[self.i].pos if self.i < len(self.toks) else len(self.text)
        line, col = _linecol(self.text, pos)
        return ParseError(msg, line, col, rule)

    def peek(self, k: int = 0) -> _Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text and t.kind != "str"

    def take(self) -> _Tok:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of input")
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t is None or t.text != text or t.kind == "str":
            got = "end of input" if t is None else repr(t.text)
            raise self.error(f"expected {text!r}, got {got}")
        self.i += 1
        return t

    def ident(self) -> str:
        t = self.take()
        if t.kind != "id":
            raise self.error(f"expected identifier, got {t.text!r}", t.pos)
        return t.text

    def number(self) -> float:
        neg = False
        if self.at("-"):
            self.take()
            neg = True
        t = self.take()
        if t.kind != "num":
            raise self.error(f"expected number, got {t.text!r}", t.pos)
        v = float(t.text)
        return -v if neg else v

    def integer(self) -> int:
        neg = self.at("-")
        if neg:
            self.take()
        t = self.take()
        if t.kind != "num" or not t.text.isdigit():
            raise self.error(f"expected integer, got {t.text!r}", t.pos)
        return -int(t.text) if neg else int(t.text)

    def line(self) -> int:
        t = self.peek()
        return _linecol(self.text, t.pos if t else len(self.text))[0]

    def raw_until_semicolon(self) -> tuple[str, int]:
        """Raw source up to the next top-level ';' (consumed)."""
        start = self.peek()
        if start is None:
            raise self.error("unexpected end of input")
        depth = 0
        while True:
            t = self.take()
            if t.text in "([{" and t.kind == "sym":
                depth += 1
            elif t.text in ")]}" and t.kind == "sym":
                depth -= 1
                if depth < 0:
                    raise self.error("unbalanced bracket", t.pos)
            elif t.text == ";" and depth == 0:
                return self.text[start.pos : t.pos], start.pos

    def expr(self) -> Expr:
        src, base = self.raw_until_semicolon()
        return self._expr_of(src, base)

    def _expr_of(self, src: str, base: int) -> Expr:
        try:
            return parse_expr(src)
        except ExprError as exc:
            raise self.error(f"bad expression: {exc}", base + (exc.pos or 0)) from None

    def _assigns(self, src: str, base: int) -> tuple[tuple[str, Expr], ...]:
        if src.strip() == "true":
            return ()
        out = []
        for part, off in _split_top(src, "&"):
            m = _ASSIGN_RE.match(part)
            if m is None:
                raise self.error(f"bad assignment {part.strip()!r}", base + off)
            rhs_off = base + off + m.start(2)
            out.append((m.group(1), self._expr_of(m.group(2), rhs_off)))
        return tuple(out)

    def _branches(self, src: str, base: int) -> tuple[Branch, ...]:
        out = []
        for part, off in _split_top(src, "+"):
            colon = _find_top(part, ":")
            if colon is None:
                out.append(Branch(1.0, self._assigns(part, base + off)))
                continue
            ptxt = part[:colon].strip()
            try:
                prob = float(ptxt)
            except ValueError:
                raise self.error(f"bad probability {ptxt!r}", base + off) from None
            out.append(Branch(prob, self._assigns(part[colon + 1 :], base + off + colon + 1)))
        return tuple(out)

    def costs(self) -> tuple[tuple[str, float], ...]:
        out = []
        while True:
            name = self.ident()
            self.expect("=")
            out.append((name, self.number()))
            if self.at(","):
                self.take()
                continue
            self.expect(";")
            return tuple(out)

    def names_until_semicolon(self) -> tuple[str, ...]:
        out = []
        while not self.at(";"):
            out.append(self.ident())
            if self.at(","):
                self.take()
        self.expect(";")
        return tuple(out)

    # -- blocks
    def parse(self) -> RiskModel:
        fields: dict = {
            "activities": [], "safety_modes": [], "factors": [], "actions": [],
            "commands": [], "constraints": [], "gradients": {}, "initial": {},
            "variables": [],
        }
        name = "model"
        final: Expr = Lit(False)
        goal = None
        seen_final = False
        while self.peek() is not None:
            kw = self.peek()
            if kw.kind != "id":
                raise self.error(f"expected a declaration, got {kw.text!r}")
            k = kw.text
            if k == "model":
                self.take()
                name = self.ident()
                self.expect(";")
            elif k == "modes":
                self.take()
                fields["safety_modes"].extend(self.names_until_semicolon())
            elif k == "var":
                fields["variables"].append(self.var_decl(fields["initial"]))
            elif k == "init":
                self.init_block(fields["initial"])
            elif k == "final":
                self.take()
                if seen_final:
                    raise self.error("duplicate declaration of 'final'", kw.pos, "duplicate declaration")
                seen_final = True
                final = self.expr()
            elif k == "goal":
                self.take()
                goal = self.expr()
            elif k == "Activity":
                fields["activities"].append(self.activity())
            elif k == "Command":
                fields["commands"].append(self.command())
            elif k == "Factor":
                fields["factors"].append(self.factor())
            elif k == "Action":
                fields["actions"].append(self.action())
            elif k == "constraint":
                fields["constraints"].append(self.constraint())
            elif k == "Gradients":
                line = self.line()
                self.take()
                kind = self.ident()
                if kind not in ("activity", "mode"):
                    raise self.error("Gradients must be 'activity' or 'mode'", kw.pos)
                if kind in fields["gradients"]:
                    raise self.error(f"duplicate Gradients {kind}", kw.pos, "duplicate declaration")
                fields["gradients"][kind] = self.gradients(line)
            else:
                raise self.error(f"unknown declaration {k!r}")
        return RiskModel(
            name=name,
            activities=tuple(fields["activities"]),
            safety_modes=tuple(fields["safety_modes"]),
            factors=tuple(fields["factors"]),
            actions=tuple(fields["actions"]),
            commands=tuple(fields["commands"]),
            constraints=tuple(fields["constraints"]),
            gradients=fields["gradients"],
            initial=fields["initial"],
            variables=tuple(fields["variables"]),
            final=final,
            goal=goal,
        )

    def var_decl(self, initial: dict) -> VarDecl:
        line = self.line()
        self.expect("var")
        name = self.ident()
        self.expect(":")
        if self.at("bool"):
            self.take()
            typ, lo, hi = "bool", 0, 1
        else:
            self.expect("[")
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            self.expect("]")
            typ = "int"
        owner = None
        while not self.at(";"):
            kw = self.ident()
            if kw == "init":
                initial[name] = self.value(typ)
            elif kw == "owner":
                owner = self.ident()
            else:
                raise self.error(f"unexpected {kw!r} in var declaration")
        self.expect(";")
        return VarDecl(name, typ, lo, hi, owner, line)

    def value(self, typ: str | None = None):
        t = self.peek()
        if t is not None and t.text in ("true", "false"):
            self.take()
            return t.text == "true"
        return self.integer()

    def init_block(self, initial: dict) -> None:
        self.expect("init")
        self.expect("{")
        while not self.at("}"):
            name = self.ident()
            self.expect("=")
            initial[name] = self.value()
            self.expect(";")
        self.expect("}")

    def activity(self) -> ActivityDecl:
        line = self.line()
        self.expect("Activity")
        name = self.ident()
        self.expect("{")
        includes, successors, actions = [], [], []
        done = None
        while not self.at("}"):
            kw = self.ident()
            if kw == "includes":
                includes.extend(self.names_until_semicolon())
            elif kw == "successor":
                successors.extend(self.names_until_semicolon())
            elif kw == "actions":
                actions.extend(self.names_until_semicolon())
            elif kw == "done":
                done = self.expr()
            else:
                raise self.error(f"unexpected {kw!r} in Activity")
        self.expect("}")
        return ActivityDecl(name, tuple(includes), tuple(successors), tuple(actions), done, line)

    def command(self) -> CommandDecl:
        line = self.line()
        self.expect("Command")
        name = self.ident()
        self.expect("@")
        actor = self.ident()
        self.expect("{")
        kw_args: dict = {}
        while not self.at("}"):
            kw = self.ident()
            if kw == "guard":
                kw_args["guard"] = self.expr()
            elif kw == "update":
                src, base = self.raw_until_semicolon()
                kw_args["branches"] = self._branches(src, base)
            elif kw == "modes":
                kw_args["modes"] = self.names_until_semicolon()
            elif kw == "event":
                kw_args["event"] = self.ident()
                self.expect(";")
            elif kw == "cost":
                kw_args["costs"] = self.costs()
            else:
                raise self.error(f"unexpected {kw!r} in Command")
        self.expect("}")
        return CommandDecl(name, actor, line=line, **kw_args)

    def factor(self) -> FactorDecl:
        line = self.line()
        self.expect("Factor")
        name = self.ident()
        self.expect("{")
        kw_args: dict = {}
        while not self.at("}"):
            kw = self.ident()
            if kw == "desc":
                t = self.take()
                if t.kind != "str":
                    raise self.error("expected string after desc", t.pos)
                kw_args["description"] = _unquote(t.text)
                self.expect(";")
            elif kw == "guard":
                kw_args["guard"] = self.expr()
            elif kw == "detectedBy":
                kw_args["detected_by"] = self.expr()
            elif kw == "faultProb":
                kw_args["detection_fault_prob"] = self.number()
                self.expect(";")
            elif kw == "mishap":
                kw_args["mishap_action"] = self.ident()
                self.expect("prob")
                kw_args["mishap_prob"] = self.number()
                self.expect("sev")
                kw_args["severity"] = self.number()
                self.expect(";")
            elif kw == "severity":
                kw_args["severity"] = self.number()
                self.expect(";")
            elif kw == "mitigatedBy":
                chains = []
                while not self.at(";"):
                    chain = [self.ident()]
                    while self.at(">"):
                        self.take()
                        chain.append(self.ident())
                    chains.append(tuple(chain))
                    if self.at(","):
                        self.take()
                self.expect(";")
                kw_args["mitigations"] = tuple(chains)
            elif kw == "resumedBy":
                kw_args["resumptions"] = self.names_until_semicolon()
            else:
                raise self.error(f"unexpected {kw!r} in Factor")
        self.expect("}")
        return FactorDecl(name, line=line, **kw_args)

    def action(self) -> ActionDecl:
        line = self.line()
        self.expect("Action")
        name = self.ident()
        self.expect(":")
        kind_tok = self.peek()
        kind = self.ident()
        if kind not in ACTION_KINDS:
            raise self.error(f"unknown action kind {kind!r}", kind_tok.pos)
        self.expect("{")
        kw_args: dict = {}
        while not self.at("}"):
            kw = self.ident()
            if kw == "event":
                kw_args["sync_event"] = self.ident()
                self.expect(";")
            elif kw == "update":
                src, base = self.raw_until_semicolon()
                kw_args["update"] = self._assigns(src, base)
            elif kw == "target":
                while not self.at(";"):
                    which = self.ident()
                    if which == "activity":
                        kw_args["target_activity"] = self.ident()
                    elif which == "mode":
                        kw_args["target_mode"] = self.ident()
                    else:
                        raise self.error("target expects 'activity NAME' and/or 'mode NAME'")
                    if self.at(","):
                        self.take()
                self.expect(";")
            elif kw == "guard":
                kw_args["guard"] = self.expr()
            elif kw == "cost":
                kw_args["costs"] = self.costs()
            else:
                raise self.error(f"unexpected {kw!r} in Action")
        self.expect("}")
        return ActionDecl(name, kind, line=line, **kw_args)

    def constraint(self) -> Constraint:
        line = self.line()
        self.expect("constraint")
        subject = self.ident()
        self.expect("requiresNOf")
        self.expect("(")
        lower = self.integer()
        self.expect("|")
        over = [self.ident()]
        while self.at(","):
            self.take()
            over.append(self.ident())
        self.expect("|")
        upper = self.integer()
        self.expect(")")
        self.expect(";")
        return Constraint(subject, lower, upper, tuple(over), line)

    def gradients(self, line: int) -> GradientMatrix:
        self.expect("{")
        labels, rows = [], []
        while not self.at("}"):
            labels.append(self.ident())
            self.expect(":")
            row = []
            while not self.at(";"):
                row.append(self.number())
            self.expect(";")
            rows.append(tuple(row))
        self.expect("}")
        return GradientMatrix(tuple(labels), tuple(rows), line)


def _unquote(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s[1:-1])


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _split_top(src: str, sep: str) -> list[tuple[str, int]]:
    """Split at top-level (outside parentheses) occurrences of ``sep``."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(src):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((src[start:i], start))
            start = i + 1
    parts.append((src[start:], start))
    return parts


def _find_top(src: str, ch: str) -> int | None:
    depth = 0
    for i, c in enumerate(src):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == ch and depth == 0:
            return i
    return None


def parse_risk_model(source_text: str, check: bool = True) -> RiskModel:
    """Parse DSL text; with ``check`` also reject models with validation errors."""
    model = _Parser(source_text).parse()
    if check:
        errors = [d for d in validate(model) if d.severity == "error"]
        if errors:
            d = errors[0]
            raise ParseError(f"{d.rule}: {d.message}", d.line, 0, d.rule)
    return model


# ---------------------------------------------------------------- printer

def _fmt_num(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def _fmt_assigns(assigns) -> str:
    if not assigns:
        return "true"
    return " & ".join(f"({v}'={to_source(e)})" for v, e in assigns)


def _fmt_costs(costs) -> str:
    return ", ".join(f"{k}={_fmt_num(v)}" for k, v in costs)


def pretty_print(model: RiskModel) -> str:
    out = [f"model {model.name};"]
    if model.safety_modes:
        out.append("modes " + " ".join(model.safety_modes) + ";")
    declared = set()
    for v in model.variables:
        typ = "bool" if v.type == "bool" else f"[{v.lo}..{v.hi}]"
        s = f"var {v.name} : {typ}"
        if v.name in model.initial:
            val = model.initial[v.name]
            s += " init " + (str(val).lower() if isinstance(val, bool) else str(val))
            declared.add(v.name)
        if v.owner:
            s += f" owner {v.owner}"
        out.append(s + ";")
    extra = [k for k in model.initial if k not in declared]
    if extra:
        body = " ".join(
            f"{k} = {str(model.initial[k]).lower() if isinstance(model.initial[k], bool) else model.initial[k]};"
            for k in extra
        )
        out.append("init { " + body + " }")
    out.append(f"final {to_source(model.final)};")
    if model.goal is not None:
        out.append(f"goal {to_source(model.goal)};")
    for a in model.activities:
        parts = [f"includes {' '.join(a.includes)};"] if a.includes else []
        if a.successors:
            parts.append(f"successor {' '.join(a.successors)};")
        if a.actions:
            parts.append(f"actions {' '.join(a.actions)};")
        if a.done is not None:
            parts.append(f"done {to_source(a.done)};")
        out.append(f"Activity {a.name} {{ " + " ".join(parts) + " }")
    for c in model.commands:
        parts = [f"guard {to_source(c.guard)};"]
        if c.branches != (Branch(1.0, ()),):
            if len(c.branches) == 1 and c.branches[0].prob == 1.0:
                upd = _fmt_assigns(c.branches[0].assigns)
            else:
                upd = " + ".join(f"{_fmt_num(b.prob)}: {_fmt_assigns(b.assigns)}" for b in c.branches)
            parts.append(f"update {upd};")
        if c.modes:
            parts.append(f"modes {' '.join(c.modes)};")
        if c.event:
            parts.append(f"event {c.event};")
        if c.costs:
            parts.append(f"cost {_fmt_costs(c.costs)};")
        out.append(f"Command {c.name} @ {c.actor} {{ " + " ".join(parts) + " }")
    for f in model.factors:
        parts = [
            f"desc {_quote(f.description)};",
            f"guard {to_source(f.guard)};",
            f"detectedBy {to_source(f.detected_by)};",
            f"faultProb {_fmt_num(f.detection_fault_prob)};",
        ]
        if f.mishap_action is not None:
            parts.append(
                f"mishap {f.mishap_action} prob {_fmt_num(f.mishap_prob)} sev {_fmt_num(f.severity)};"
            )
        elif f.severity:
            parts.append(f"severity {_fmt_num(f.severity)};")
        parts.append("mitigatedBy " + " ".join(">".join(ch) for ch in f.mitigations) + ";")
        parts.append("resumedBy " + " ".join(f.resumptions) + ";")
        out.append(f"Factor {f.name} {{ " + " ".join(parts) + " }")
    for a in model.actions:
        parts = []
        if a.sync_event:
            parts.append(f"event {a.sync_event};")
        if a.update:
            parts.append(f"update {_fmt_assigns(a.update)};")
        tgt = []
        if a.target_activity:
            tgt.append(f"activity {a.target_activity}")
        if a.target_mode:
            tgt.append(f"mode {a.target_mode}")
        if tgt:
            parts.append("target " + ", ".join(tgt) + ";")
        if a.guard != TRUE:
            parts.append(f"guard {to_source(a.guard)};")
        if a.costs:
            parts.append(f"cost {_fmt_costs(a.costs)};")
        out.append(f"Action {a.name} : {a.kind} {{ " + " ".join(parts) + " }")
    for c in model.constraints:
        out.append(f"constraint {c.subject} requiresNOf ({c.lower}|{','.join(c.over)}|{c.upper});")
    for kind in ("activity", "mode"):
        g = model.gradients.get(kind)
        if g is None:
            continue
        rows = " ".join(
            f"{lab}: {' '.join(_fmt_num(x) for x in row)};" for lab, row in zip(g.labels, g.entries)
        )
        out.append(f"Gradients {kind} {{ {rows} }}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- validator

@dataclass(frozen=True, order=True)
class Diagnostic:
    line: int
    severity: str  # "error" | "warning"
    rule: str
    message: str

    def __str__(self) -> str:
        loc = f"line {self.line}: " if self.line else ""
        return f"{loc}{self.severity}: {self.rule}: {self.message}"


def _types(model: RiskModel) -> dict[str, str]:
    t = {v.name: v.type for v in model.variables}
    for name in model.constants():
        t.setdefault(name, "int")
    if model.activities:
        t["act"] = "int"
    if model.safety_modes:
        t["mode"] = "int"
    for f in model.factors:
        t.setdefault(f"ph_{f.name}", "int")
    return t


def validate(model: RiskModel) -> list[Diagnostic]:
    """All rule violations, sorted; empty iff the model is well formed."""
    diags: set[Diagnostic] = set()

    def err(line, rule, msg, severity="error"):
        diags.add(Diagnostic(line, severity, rule, msg))

    # unique names across all namespaces
    decls: list[tuple[str, str, int]] = []
    decls += [(v.name, "variable", v.line) for v in model.variables]
    decls += [(a.name, "activity", a.line) for a in model.activities]
    decls += [(m, "mode", 0) for m in model.safety_modes]
    decls += [(f.name, "factor", f.line) for f in model.factors]
    decls += [(a.name, "action", a.line) for a in model.actions]
    decls += [(c.name, "command", c.line) for c in model.commands]
    counts: dict[str, list] = {}
    for name, kind, line in decls:
        counts.setdefault(name, []).append((kind, line))
    for name, uses in counts.items():
        if len(uses) > 1:
            kinds = ", ".join(k for k, _ in uses)
            err(max(l for _, l in uses), "duplicate declaration", f"{name!r} declared {len(uses)} times ({kinds})")
        if name in RESERVED or name.startswith("ph_"):
            err(uses[0][1], "reserved name", f"{name!r} is reserved")

    activities = {a.name for a in model.activities}
    modes = set(model.safety_modes)
    factors = {f.name for f in model.factors}
    actions = {a.name: a for a in model.actions}
    commands = {c.name for c in model.commands}
    var_by_name = {v.name: v for v in model.variables}
    types = _types(model)
    labels = commands | {c.event for c in model.commands if c.event}
    labels |= {a.sync_event for a in model.actions if a.sync_event}

    def check_expr(e: Expr | None, line: int, what: str, want: str = "bool"):
        if e is None:
            return
        missing = sorted(variables(e) - set(types))
        if missing:
            err(line, "unresolved reference", f"{what}: unknown identifier(s) {', '.join(missing)}")
            return
        try:
            t = infer_type(e, types)
        except ExprError as exc:
            err(line, "type error", f"{what}: {exc}")
            return
        if t != want:
            err(line, "type error", f"{what}: expected {want}, got {t}")

    def check_assigns(assigns, line: int, what: str):
        seen = set()
        for var, e in assigns:
            if var in seen:
                err(line, "duplicate declaration", f"{what}: {var!r} assigned twice")
            seen.add(var)
            if var not in var_by_name and var not in ("act", "mode"):
                err(line, "unresolved reference", f"{what}: unknown variable {var!r}")
                continue
            want = var_by_name[var].type if var in var_by_name else "int"
            check_expr(e, line, f"{what}: {var}'", want)
            if isinstance(e, Lit) and var in var_by_name and want == "int":
                v = var_by_name[var]
                if not (v.lo <= e.value <= v.hi):
                    err(line, "bounds", f"{what}: {var}'={e.value} outside [{v.lo}..{v.hi}]")

    def check_prob(p: float, line: int, what: str):
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            err(line, "probability out of range", f"{what} = {p} not in [0,1]")

    for v in model.variables:
        if v.type == "int" and v.lo > v.hi:
            err(v.line, "bounds", f"variable {v.name!r}: empty range [{v.lo}..{v.hi}]")
    for name, val in model.initial.items():
        if name not in var_by_name:
            err(0, "unresolved reference", f"init: unknown variable {name!r}")
            continue
        v = var_by_name[name]
        if v.type == "bool" and not isinstance(val, bool):
            err(v.line, "type error", f"init: {name} expects bool")
        elif v.type == "int" and (isinstance(val, bool) or not v.lo <= val <= v.hi):
            err(v.line, "bounds", f"init: {name}={val} outside [{v.lo}..{v.hi}]")

    check_expr(model.final, 0, "final")
    check_expr(model.goal, 0, "goal")

    # activities
    for a in model.activities:
        for ref in a.includes + a.successors:
            if ref not in activities:
                err(a.line, "unresolved reference", f"activity {a.name!r}: unknown activity {ref!r}")
        for ref in a.actions:
            if ref not in commands:
                err(a.line, "unresolved reference", f"activity {a.name!r}: unknown command {ref!r}")
        check_expr(a.done, a.line, f"activity {a.name!r} done")
    graph = {a.name: [i for i in a.includes if i in activities] for a in model.activities}
    for a in _cycle_members(graph):
        err(model.activity(a).line, "cyclic includes", f"activity {a!r} includes itself transitively")

    # commands
    for c in model.commands:
        what = f"command {c.name!r}"
        check_expr(c.guard, c.line, f"{what} guard")
        for m in c.modes:
            if m not in modes:
                err(c.line, "unresolved reference", f"{what}: unknown mode {m!r}")
        total = 0.0
        for b in c.branches:
            check_prob(b.prob, c.line, f"{what} branch probability")
            total += b.prob
            check_assigns(b.assigns, c.line, what)
        if abs(total - 1.0) > PROB_TOL:
            err(c.line, "distribution does not sum to 1", f"{what}: branch probabilities sum to {total}")
        for k, v in c.costs:
            if v < 0:
                err(c.line, "negative value", f"{what}: cost {k}={v} < 0")

    # factors
    for f in model.factors:
        what = f"factor {f.name!r}"
        check_expr(f.guard, f.line, f"{what} guard")
        check_expr(f.detected_by, f.line, f"{what} detectedBy")
        check_prob(f.detection_fault_prob, f.line, f"{what} faultProb")
        check_prob(f.mishap_prob, f.line, f"{what} mishap prob")
        if f.severity < 0:
            err(f.line, "negative value", f"{what}: severity {f.severity} < 0")
        if f.mishap_action is not None and f.mishap_action not in labels:
            err(f.line, "unresolved reference", f"{what}: unknown mishap action {f.mishap_action!r}")
        if f.mishap_action is not None and 0 < f.mishap_prob < 1:
            # the mishap command synchronises with the action, and only one
            # participant of a synchronised label may branch
            for c in model.commands:
                if f.mishap_action in (c.name, c.event) and sum(b.prob > 0 for b in c.branches) > 1:
                    err(f.line, "probabilistic mishap action",
                        f"{what}: mishap action {f.mishap_action!r} has a probabilistic update in {c.name!r}")
        for chain in f.mitigations:
            for name in chain:
                if name not in actions:
                    err(f.line, "unresolved reference", f"{what}: unknown mitigation {name!r}")
                elif actions[name].kind == "RESUME":
                    err(f.line, "kind mismatch", f"{what}: mitigation {name!r} is a RESUME action")
        for name in f.resumptions:
            if name not in actions:
                err(f.line, "unresolved reference", f"{what}: unknown resumption {name!r}")
            elif actions[name].kind != "RESUME":
                err(f.line, "kind mismatch", f"{what}: resumption {name!r} is not a RESUME action")
        mit_vars = {v for ch in f.mitigations for n in ch if n in actions for v, _ in actions[n].update}
        for name in f.resumptions:
            if name in actions and mit_vars and not mit_vars <= {v for v, _ in actions[name].update}:
                err(f.line, "missing inverse update",
                    f"{what}: resumption {name!r} does not undo safety function on {sorted(mit_vars)}",
                    "warning")

    # actions
    for a in model.actions:
        what = f"action {a.name!r}"
        check_assigns(a.update, a.line, what)
        check_expr(a.guard, a.line, f"{what} guard")
        if a.target_activity is not None and a.target_activity not in activities:
            err(a.line, "unresolved reference", f"{what}: unknown activity {a.target_activity!r}")
        if a.target_mode is not None and a.target_mode not in modes:
            err(a.line, "unresolved reference", f"{what}: unknown mode {a.target_mode!r}")
        if a.sync_event and not a.update:
            err(a.line, "event without update", f"{what}: event {a.sync_event!r} needs a safety-function update")
        for k, v in a.costs:
            if v < 0:
                err(a.line, "negative value", f"{what}: cost {k}={v} < 0")
        for kind, target in (("activity", a.target_activity), ("mode", a.target_mode)):
            g = model.gradients.get(kind)
            if target is not None and g is not None and target not in g.labels:
                err(a.line, "unresolved reference", f"{what}: {kind} {target!r} missing from gradient matrix")

    # constraints
    for c in model.constraints:
        for ref in (c.subject, *c.over):
            if ref not in factors:
                err(c.line, "unresolved reference", f"constraint on {c.subject!r}: unknown factor {ref!r}")
        if c.subject in c.over:
            err(c.line, "invalid constraint", f"constraint on {c.subject!r}: subject listed in its own set")
        if not (0 <= c.lower <= c.upper <= len(c.over)):
            err(c.line, "invalid constraint",
                f"constraint on {c.subject!r}: need 0 <= {c.lower} <= {c.upper} <= {len(c.over)}")

    # gradients
    for kind, g in model.gradients.items():
        what = f"{kind} gradients"
        declared = activities if kind == "activity" else modes
        for lab in g.labels:
            if lab not in declared:
                err(g.line, "unresolved reference", f"{what}: unknown {kind} {lab!r}")
        n = len(g.labels)
        if len(set(g.labels)) != n:
            err(g.line, "duplicate declaration", f"{what}: repeated label")
        if any(len(row) != n for row in g.entries) or len(g.entries) != n:
            err(g.line, "matrix shape", f"{what}: matrix must be {n}x{n}")
            continue
        for i in range(n):
            if g.entries[i][i] != 0:
                err(g.line, "nonzero diagonal", f"{what}: entry [{g.labels[i]}][{g.labels[i]}] = {g.entries[i][i]}")
            for j in range(i + 1, n):
                a, b = g.entries[i][j], g.entries[j][i]
                if abs(a + b) > 1e-12:
                    err(g.line, "matrix not skew-symmetric",
                        f"{what}: [{g.labels[i]}][{g.labels[j]}] = {a} but [{g.labels[j]}][{g.labels[i]}] = {b}")
                elif a == 0:
                    err(g.line, "zero gradient",
                        f"{what}: {g.labels[i]} and {g.labels[j]} are risk-equivalent", "warning")

    return sorted(diags)


def _cycle_members(graph: Mapping[str, list[str]]) -> set[str]:
    members = set()
    for start in graph:
        stack, seen = list(graph[start]), set()
        while stack:
            n = stack.pop()
            if n == start:
                members.add(start)
                break
            if n in seen:
                continue
            seen.add(n)
            stack.extend(graph.get(n, ()))
    return members
