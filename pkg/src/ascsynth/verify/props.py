"""Property formulas: syntax tree, textual parser and checker.

Supported shapes (one per line in a property file, ``//`` comments)::

    E [ F ("activeHC" & !"final") ]        qualitative, with E/A path quantifiers
    A [ G ("sensedHC" => A [ X "activeHC" ]) ]
    P>=0.99 [ G !"mishap" ]                 threshold; min for >=/>, max for <=/<
    Pmin=? [ !"mishap" W "safe" ]           numeric query
    R{"pot"}max=? [ C ]    Rmax{"prod"}=? [ F "final" ]    R{"sev"}<=3 [ C<=20 ]
    S<0.01 [ "mishap" ]    S=? [ "mishap" ]  (chains only)

A line may start with ``v:`` (expected to hold) or ``f:`` (expected to
fail); the checker reports a verdict against that expectation.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..pgcl import Mdp
from . import engine


class PropertyError(ValueError):
    pass


# ---------------------------------------------------------------- syntax tree

@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "State"


@dataclass(frozen=True)
class And:
    left: "State"
    right: "State"


@dataclass(frozen=True)
class Or:
    left: "State"
    right: "State"


@dataclass(frozen=True)
class Implies:
    left: "State"
    right: "State"


@dataclass(frozen=True)
class Next:
    arg: "State"


@dataclass(frozen=True)
class Until:
    left: "State"
    right: "State"
    bound: int | None = None


@dataclass(frozen=True)
class Eventually:
    arg: "State"
    bound: int | None = None


@dataclass(frozen=True)
class Always:
    arg: "State"
    bound: int | None = None


@dataclass(frozen=True)
class WeakUntil:
    left: "State"
    right: "State"
    bound: int | None = None


Path = Union[Next, Until, Eventually, Always, WeakUntil]


@dataclass(frozen=True)
class Exists:
    path: Path


@dataclass(frozen=True)
class Forall:
    path: Path


State = Union[Const, Atom, Not, And, Or, Implies, Exists, Forall]


@dataclass(frozen=True)
class ProbQuery:
    path: Path
    opt: str | None = None  # "min" | "max" | None
    op: str | None = None  # comparison, None for =?
    bound: float | None = None


@dataclass(frozen=True)
class RewardQuery:
    reward: str
    kind: str  # "C" (cumulative) or "F" (until target)
    target: State | None = None
    steps: int | None = None
    opt: str | None = "max"
    op: str | None = None
    bound: float | None = None


@dataclass(frozen=True)
class SteadyQuery:
    arg: State
    op: str | None = None
    bound: float | None = None


Formula = Union[State, ProbQuery, RewardQuery, SteadyQuery]


@dataclass(frozen=True)
class Query:
    formula: Formula
    expect: bool | None = None
    text: str = ""


# ---------------------------------------------------------------- parser

_TOK = re.compile(
    r"""\s*(?:(?P<str>"[^"]*")|(?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<op>=\?|<=|>=|=>|[<>=!&|()\[\]{}:]))""",
    re.VERBOSE,
)
_KEYWORDS = {"E", "A", "X", "F", "G", "U", "W", "C", "P", "R", "S", "true", "false"}
_CMP = {"<", "<=", ">", ">="}


class _P:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if not text[pos:].strip():
                break
            m = _TOK.match(text, pos)
            if m is None or m.end() == pos:
                raise PropertyError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
            self.toks.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
            pos = m.end()
        self.i = 0

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else (None, None, len(self.text))

    def at(self, *texts) -> bool:
        kind, t, _ = self.peek()
        return kind != "str" and t in texts

    def take(self):
        tok = self.peek()
        if tok[0] is None:
            raise PropertyError(f"unexpected end of property: {self.text!r}")
        self.i += 1
        return tok

    def expect(self, t: str):
        kind, got, pos = self.take()
        if got != t or kind == "str":
            raise PropertyError(f"expected {t!r} at {pos}, got {got!r}")

    def number(self) -> float:
        kind, t, pos = self.take()
        if kind != "num":
            raise PropertyError(f"expected number at {pos}, got {t!r}")
        return float(t)

    def done(self):
        if self.peek()[0] is not None:
            raise PropertyError(f"trailing input at {self.peek()[2]}: {self.peek()[1]!r}")

    # heads
    def query(self) -> Formula:
        kind, t, _ = self.peek()
        nxt = self.peek(1)[1]
        if kind == "id" and t in ("P", "Pmin", "Pmax") and nxt in ("=?", "<", "<=", ">", ">=", "["):
            self.take()
            opt = {"P": None, "Pmin": "min", "Pmax": "max"}[t]
            op, bound = self.relation()
            self.expect("[")
            path = self.path()
            self.expect("]")
            return ProbQuery(path, opt, op, bound)
        if kind == "id" and t in ("R", "Rmax", "Rmin") and nxt == "{":
            self.take()
            opt = {"R": None, "Rmax": "max", "Rmin": "min"}[t]
            self.expect("{")
            k, name, pos = self.take()
            if k != "str":
                raise PropertyError(f"expected quoted reward name at {pos}")
            self.expect("}")
            if self.at("max", "min"):
                opt = self.take()[1]
            op, bound = self.relation(optional=True)
            self.expect("[")
            if self.at("C"):
                self.take()
                steps = None
                if self.at("<="):
                    self.take()
                    steps = int(self.number())
                q = RewardQuery(name[1:-1], "C", None, steps, opt or "max", op, bound)
            elif self.at("F"):
                self.take()
                q = RewardQuery(name[1:-1], "F", self.state(), None, opt or "max", op, bound)
            else:
                raise PropertyError("reward queries take [ C ], [ C<=k ] or [ F phi ]")
            self.expect("]")
            return q
        if kind == "id" and t == "S" and nxt in ("=?", "<", "<=", ">", ">="):
            self.take()
            op, bound = self.relation()
            self.expect("[")
            arg = self.state()
            self.expect("]")
            return SteadyQuery(arg, op, bound)
        return self.state()

    def relation(self, optional: bool = False):
        if self.at("=?"):
            self.take()
            return None, None
        if self.at(*_CMP):
            op = self.take()[1]
            return op, self.number()
        if optional or self.at("["):
            return None, None
        raise PropertyError(f"expected '=?' or a comparison at {self.peek()[2]}")

    def bound(self) -> int | None:
        if self.at("<="):
            self.take()
            b = self.number()
            if b != int(b) or b < 0:
                raise PropertyError("step bounds must be natural numbers")
            return int(b)
        return None

    def path(self) -> Path:
        if self.at("X"):
            self.take()
            return Next(self.state())
        if self.at("F"):
            self.take()
            b = self.bound()
            return Eventually(self.state(), b)
        if self.at("G"):
            self.take()
            b = self.bound()
            return Always(self.state(), b)
        left = self.state()
        if self.at("U"):
            self.take()
            b = self.bound()
            return Until(left, self.state(), b)
        if self.at("W"):
            self.take()
            b = self.bound()
            return WeakUntil(left, self.state(), b)
        raise PropertyError(f"expected a path formula (X, F, G, U, W) at {self.peek()[2]}")

    def state(self) -> State:
        left = self.disj()
        if self.at("=>"):
            self.take()
            return Implies(left, self.state())
        return left

    def disj(self) -> State:
        left = self.conj()
        while self.at("|"):
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self) -> State:
        left = self.unary()
        while self.at("&"):
            self.take()
            left = And(left, self.unary())
        return left

    def unary(self) -> State:
        if self.at("!"):
            self.take()
            return Not(self.unary())
        kind, t, pos = self.take()
        if kind == "str":
            return Atom(t[1:-1])
        if t == "(":
            s = self.state()
            self.expect(")")
            return s
        if t in ("E", "A") and self.at("["):
            self.take()
            p = self.path()
            self.expect("]")
            return Exists(p) if t == "E" else Forall(p)
        if t == "true":
            return Const(True)
        if t == "false":
            return Const(False)
        if kind == "id" and t in ("P", "Pmin", "Pmax", "R", "Rmax", "Rmin", "S"):
            raise PropertyError("quantitative operators are only supported at the top level")
        if kind == "id" and t not in _KEYWORDS:
            return Atom(t)
        raise PropertyError(f"unexpected {t!r} at {pos}")


def parse_property(text: str) -> Query:
    text = text.strip()
    expect = None
    m = re.match(r"^([vf])\s*:\s*", text)
    if m:
        expect = m.group(1) == "v"
        body = text[m.end():]
    else:
        body = text
    p = _P(body)
    f = p.query()
    p.done()
    return Query(f, expect, text)


def parse_properties(text: str) -> list[Query]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("//", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_property(line))
        except PropertyError as exc:
            raise PropertyError(f"line {n}: {exc}") from None
    return out


def to_text(f) -> str:
    """Render a formula back to the textual syntax."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f'"{f.name}"'
    if isinstance(f, Not):
        return "!" + _wrap(f.arg)
    if isinstance(f, And):
        return f"{_wrap(f.left)} & {_wrap(f.right)}"
    if isinstance(f, Or):
        return f"{_wrap(f.left)} | {_wrap(f.right)}"
    if isinstance(f, Implies):
        return f"{_wrap(f.left)} => {_wrap(f.right)}"
    if isinstance(f, (Exists, Forall)):
        return f"{'E' if isinstance(f, Exists) else 'A'} [ {_path_text(f.path)} ]"
    if isinstance(f, ProbQuery):
        head = {None: "P", "min": "Pmin", "max": "Pmax"}[f.opt]
        rel = "=?" if f.op is None else f"{f.op}{f.bound:g}"
        return f"{head}{rel} [ {_path_text(f.path)} ]"
    if isinstance(f, RewardQuery):
        rel = "=?" if f.op is None else f"{f.op}{f.bound:g}"
        body = "C" if f.kind == "C" else f"F {to_text(f.target)}"
        if f.kind == "C" and f.steps is not None:
            body = f"C<={f.steps}"
        return f'R{{"{f.reward}"}}{f.opt}{rel} [ {body} ]'
    if isinstance(f, SteadyQuery):
        rel = "=?" if f.op is None else f"{f.op}{f.bound:g}"
        return f"S{rel} [ {to_text(f.arg)} ]"
    raise TypeError(f)


def _wrap(f) -> str:
    s = to_text(f)
    return s if isinstance(f, (Const, Atom, Not, Exists, Forall)) else f"({s})"


def _b(bound):
    return "" if bound is None else f"<={bound}"


def _path_text(p: Path) -> str:
    if isinstance(p, Next):
        return f"X {_wrap(p.arg)}"
    if isinstance(p, Eventually):
        return f"F{_b(p.bound)} {_wrap(p.arg)}"
    if isinstance(p, Always):
        return f"G{_b(p.bound)} {_wrap(p.arg)}"
    if isinstance(p, Until):
        return f"{_wrap(p.left)} U{_b(p.bound)} {_wrap(p.right)}"
    return f"{_wrap(p.left)} W{_b(p.bound)} {_wrap(p.right)}"


# ---------------------------------------------------------------- checking

@dataclass
class Result:
    query: Query
    value: float | bool
    holds: bool | None  # truth of a threshold/qualitative formula; None for =? queries
    verdict: bool | None  # agreement with the v/f annotation; None if unannotated
    witness: list[int] | None = None

    def line(self) -> str:
        v = self.value
        val = str(v).lower() if isinstance(v, (bool, np.bool_)) else f"{v:.12g}"
        tag = "" if self.verdict is None else ("PASS " if self.verdict else "FAIL ")
        wit = f"  witness={self.witness}" if self.witness else ""
        return f"{tag}{self.query.text}  ->  {val}{wit}"


def sat(mdp: Mdp, f: State) -> np.ndarray:
    """States satisfying a qualitative state formula."""
    n = mdp.num_states
    if isinstance(f, Const):
        return np.full(n, f.value, dtype=bool)
    if isinstance(f, Atom):
        if f.name not in mdp.labels:
            raise PropertyError(f"unknown label {f.name!r}")
        return mdp.labels[f.name].astype(bool)
    if isinstance(f, Not):
        return ~sat(mdp, f.arg)
    if isinstance(f, And):
        return sat(mdp, f.left) & sat(mdp, f.right)
    if isinstance(f, Or):
        return sat(mdp, f.left) | sat(mdp, f.right)
    if isinstance(f, Implies):
        return ~sat(mdp, f.left) | sat(mdp, f.right)
    if isinstance(f, Exists):
        return _exists(mdp, f.path)
    if isinstance(f, Forall):
        return _forall(mdp, f.path)
    raise PropertyError(f"not a state formula: {f!r}")


def _bounded_exists_until(mdp, phi, psi, k):
    R = psi.copy()
    for _ in range(k):
        R = R | (phi & engine.exists_next(mdp, R))
    return R


def _bounded_forall_until(mdp, phi, psi, k):
    R = psi.copy()
    for _ in range(k):
        R = R | (phi & engine.forall_next(mdp, R))
    return R


def _exists(mdp, p: Path) -> np.ndarray:
    T = np.ones(mdp.num_states, dtype=bool)
    if isinstance(p, Next):
        return engine.exists_next(mdp, sat(mdp, p.arg))
    if isinstance(p, Eventually):
        p = Until(Const(True), p.arg, p.bound)
    if isinstance(p, Until):
        a, b = sat(mdp, p.left), sat(mdp, p.right)
        if p.bound is None:
            return engine.exists_until(mdp, a, b)
        return _bounded_exists_until(mdp, a, b, p.bound)
    if isinstance(p, Always):
        a = sat(mdp, p.arg)
        if p.bound is None:
            return ~engine.forall_until(mdp, T, ~a)
        return ~_bounded_forall_until(mdp, T, ~a, p.bound)
    # E[a W b] = not A[!b U (!a & !b)]
    a, b = sat(mdp, p.left), sat(mdp, p.right)
    if p.bound is None:
        return ~engine.forall_until(mdp, ~b, ~a & ~b)
    return ~_bounded_forall_until(mdp, ~b, ~a & ~b, p.bound)


def _forall(mdp, p: Path) -> np.ndarray:
    T = np.ones(mdp.num_states, dtype=bool)
    if isinstance(p, Next):
        return engine.forall_next(mdp, sat(mdp, p.arg))
    if isinstance(p, Eventually):
        p = Until(Const(True), p.arg, p.bound)
    if isinstance(p, Until):
        a, b = sat(mdp, p.left), sat(mdp, p.right)
        if p.bound is None:
            return engine.forall_until(mdp, a, b)
        return _bounded_forall_until(mdp, a, b, p.bound)
    if isinstance(p, Always):
        a = sat(mdp, p.arg)
        if p.bound is None:
            return ~engine.exists_until(mdp, T, ~a)
        return ~_bounded_exists_until(mdp, T, ~a, p.bound)
    a, b = sat(mdp, p.left), sat(mdp, p.right)
    if p.bound is None:
        return ~engine.exists_until(mdp, ~b, ~a & ~b)
    return ~_bounded_exists_until(mdp, ~b, ~a & ~b, p.bound)


def _successors(mdp: Mdp, s: int) -> list[int]:
    out = []
    for c in mdp.choices(s):
        for t, p in mdp.distribution(c):
            if p > 0 and t not in out:
                out.append(t)
    return out or [s]


def find_path(mdp: Mdp, through: np.ndarray, goal: np.ndarray, start: int | None = None) -> list[int] | None:
    """Shortest path from ``start`` to a ``goal`` state via ``through`` states."""
    s0 = mdp.initial if start is None else start
    prev = {s0: None}
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        if goal[s]:
            path = [s]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        if not through[s]:
            continue
        for t in _successors(mdp, s):
            if t not in prev:
                prev[t] = s
                queue.append(t)
    return None


def lasso(mdp: Mdp, inside: np.ndarray, start: int | None = None) -> list[int]:
    """A path that stays in ``inside`` until it repeats a state or cannot continue."""
    s = mdp.initial if start is None else start
    path, seen = [s], {s}
    while True:
        nxt = [t for t in _successors(mdp, s) if inside[t]]
        if not nxt:
            return path
        s = nxt[0]
        path.append(s)
        if s in seen:
            return path
        seen.add(s)


def _witness(mdp: Mdp, f: State, holds: bool) -> list[int] | None:
    if isinstance(f, Exists) and holds:
        p = f.path
        if isinstance(p, Eventually) and p.bound is None:
            return find_path(mdp, np.ones(mdp.num_states, dtype=bool), sat(mdp, p.arg))
        if isinstance(p, Until) and p.bound is None:
            return find_path(mdp, sat(mdp, p.left), sat(mdp, p.right))
        if isinstance(p, Always) and p.bound is None:
            return lasso(mdp, sat(mdp, f))
    if isinstance(f, Forall) and not holds:
        p = f.path
        if isinstance(p, Always) and p.bound is None:
            return find_path(mdp, np.ones(mdp.num_states, dtype=bool), ~sat(mdp, p.arg))
        if isinstance(p, (Eventually, Until)) and p.bound is None:
            return lasso(mdp, ~sat(mdp, f))
    return None


def _compare(value: float, op: str, bound: float) -> bool:
    return {"<": value < bound, "<=": value <= bound, ">": value > bound, ">=": value >= bound}[op]


def _is_chain(mdp: Mdp) -> bool:
    return bool(np.all(np.diff(mdp.choice_start) <= 1))


def path_probabilities(mdp: Mdp, path: Path, opt: str) -> np.ndarray:
    """Optimal probability of ``path`` from every state."""
    if isinstance(path, Next):
        a = sat(mdp, path.arg).astype(float)
        aug = engine._aug(mdp)
        y = aug.A @ a
        return (engine._reduce_max if opt == "max" else engine._reduce_min)(aug, y)
    if isinstance(path, Eventually):
        path = Until(Const(True), path.arg, path.bound)
    if isinstance(path, Always):
        # P_opt[G a] = 1 - P_dual[F !a]
        dual = "min" if opt == "max" else "max"
        return 1.0 - path_probabilities(mdp, Eventually(Not(path.arg), path.bound), dual)
    a, b = sat(mdp, path.left), sat(mdp, path.right)
    if isinstance(path, Until):
        if path.bound is None:
            return engine.until_prob(mdp, a, b, opt).values
        return engine.bounded_until_prob(mdp, a, b, path.bound, opt)
    if path.bound is None:
        return engine.weak_until_prob(mdp, a, b, opt).values
    return engine.bounded_weak_until_prob(mdp, a, b, path.bound, opt)


def check(mdp: Mdp, query: Query | str) -> Result:
    """Evaluate one property at the initial state."""
    q = parse_property(query) if isinstance(query, str) else query
    f = q.formula
    s0 = mdp.initial
    witness = None
    if isinstance(f, ProbQuery):
        opt = f.opt
        if opt is None:
            if f.op is None:
                if not _is_chain(mdp):
                    raise PropertyError("P=? on a model with nondeterminism: use Pmin=? or Pmax=?")
                opt = "min"
            else:
                opt = "min" if f.op in (">", ">=") else "max"
        value = float(path_probabilities(mdp, f.path, opt)[s0])
        holds = None if f.op is None else _compare(value, f.op, f.bound)
    elif isinstance(f, RewardQuery):
        if f.opt == "min" and not _is_chain(mdp):
            raise PropertyError("reward minimisation is not supported; the engine maximises")
        if f.op in (">", ">=") and not _is_chain(mdp):
            raise PropertyError("lower reward bounds need minimisation; only upper bounds are supported")
        r = mdp.rewards.get(f.reward)
        if r is None:
            raise PropertyError(f"unknown reward structure {f.reward!r}")
        if f.kind == "C" and f.steps is not None:
            value = float(engine.cumulative_reward_bounded(mdp, r, f.steps)[s0])
        else:
            target = None if f.kind == "C" else sat(mdp, f.target)
            value = float(engine.total_reward(mdp, r, f.reward, target).values[s0])
        holds = None if f.op is None else _compare(value, f.op, f.bound)
    elif isinstance(f, SteadyQuery):
        if not _is_chain(mdp):
            raise PropertyError("steady-state queries need a chain (one choice per state)")
        pi = engine.steady_state_distribution(mdp)
        value = float(pi[sat(mdp, f.arg)].sum())
        holds = None if f.op is None else _compare(value, f.op, f.bound)
    else:
        S = sat(mdp, f)
        value = bool(S[s0])
        holds = value
        witness = _witness(mdp, f, value)
    verdict = None
    if q.expect is not None:
        if holds is None:
            raise PropertyError(f"a v/f annotation needs a qualitative or threshold property: {q.text!r}")
        verdict = holds == q.expect
    return Result(q, value, holds, verdict, witness)


def check_all(mdp: Mdp, queries: list[Query]) -> list[Result]:
    return [check(mdp, q) for q in queries]
