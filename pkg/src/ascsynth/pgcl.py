"""Probabilistic guarded-command programs and explicit-state MDPs.

A program is a list of modules, each a list of commands
``[label] guard -> p1:u1 + ... + pn:un``.  Commands of different modules
that share a label fire jointly (the product of their update
distributions); commands of one module sharing a label are alternatives.
``build_mdp`` explores the reachable state space breadth first.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .expr import TRUE, Expr, Lit, compile_expr, compile_source, evaluate, to_source

PROB_TOL = 1e-9
DEFAULT_CAP = 5_000_000


class ModelError(ValueError):
    """An ill-formed program or a run-time bound violation."""


class StateSpaceCapExceeded(RuntimeError):
    def __init__(self, states: int, transitions: int, cap: int):
        super().__init__(
            f"state-space cap exceeded: {transitions} transitions > {cap} (states explored: {states})"
        )
        self.states = states
        self.transitions = transitions
        self.cap = cap


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: str = "int"  # "bool" | "int"
    lo: int = 0
    hi: int = 1
    init: bool | int = 0

    def in_bounds(self, v) -> bool:
        if self.type == "bool":
            return isinstance(v, bool)
        return not isinstance(v, bool) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class Update:
    prob: float
    assigns: tuple[tuple[str, Expr], ...] = ()


@dataclass(frozen=True)
class Command:
    label: str
    guard: Expr = TRUE
    updates: tuple[Update, ...] = (Update(1.0),)
    owner: str = ""

    def render(self) -> str:
        if len(self.updates) == 1 and self.updates[0].prob == 1.0:
            rhs = _render_assigns(self.updates[0].assigns)
        else:
            rhs = " + ".join(f"{_fmt_p(u.prob)}:{_render_assigns(u.assigns)}" for u in self.updates)
        return f"[{self.label}] {to_source(self.guard)} -> {rhs};"


def _fmt_p(p: float) -> str:
    return f"{p:.12g}"


def _render_assigns(assigns) -> str:
    if not assigns:
        return "true"
    return " & ".join(f"({v}'={to_source(e)})" for v, e in assigns)


@dataclass(frozen=True)
class Module:
    name: str
    variables: tuple[VarDecl, ...] = ()
    commands: tuple[Command, ...] = ()


@dataclass(frozen=True)
class RewardStructure:
    """Action rewards: entries ``(state predicate, action label, value)``."""

    name: str
    entries: tuple[tuple[Expr, str, float], ...] = ()

    def __post_init__(self):
        for _, label, v in self.entries:
            if v < 0:
                raise ModelError(f"reward {self.name!r}: negative value {v} on {label!r}")


@dataclass(frozen=True)
class GuardedProgram:
    modules: tuple[Module, ...]
    constants: Mapping[str, int] = field(default_factory=dict)
    labels: tuple[tuple[str, Expr], ...] = ()
    rewards: tuple[RewardStructure, ...] = ()
    # label -> "process" | "hazard" | "controller"; used for presentation only
    action_kinds: Mapping[str, str] = field(default_factory=dict)

    @property
    def variables(self) -> tuple[VarDecl, ...]:
        return tuple(v for m in self.modules for v in m.variables)

    @property
    def initial(self) -> tuple:
        return tuple(v.init for v in self.variables)

    @property
    def commands(self) -> tuple[Command, ...]:
        return tuple(c for m in self.modules for c in m.commands)

    def label(self, name: str) -> Expr:
        return dict(self.labels)[name]

    def check(self, tol: float = PROB_TOL) -> None:
        """Raise ModelError on static problems."""
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable declaration")
        clash = set(names) & set(self.constants)
        if clash:
            raise ModelError(f"variables shadow constants: {sorted(clash)}")
        for v in self.variables:
            if not v.in_bounds(v.init):
                raise ModelError(f"initial value of {v.name} out of bounds")
        known = set(names)
        for c in self.commands:
            total = sum(u.prob for u in c.updates)
            if abs(total - 1.0) > tol:
                raise ModelError(f"[{c.label}] in {c.owner}: probabilities sum to {total}")
            if any(u.prob < 0 for u in c.updates):
                raise ModelError(f"[{c.label}] in {c.owner}: negative probability")
            for u in c.updates:
                for v, _ in u.assigns:
                    if v not in known:
                        raise ModelError(f"[{c.label}] in {c.owner}: unknown variable {v!r}")

    def render(self) -> str:
        """Human-readable listing, one command per line."""
        out = [f"const {name} = {val};" for name, val in self.constants.items()]
        for m in self.modules:
            out.append(f"module {m.name}")
            for v in m.variables:
                rng = "bool" if v.type == "bool" else f"[{v.lo}..{v.hi}]"
                init = str(v.init).lower() if isinstance(v.init, bool) else str(v.init)
                out.append(f"  {v.name} : {rng} init {init};")
            for c in m.commands:
                out.append("  " + c.render())
            out.append("endmodule")
        for name, e in self.labels:
            out.append(f'label "{name}" = {to_source(e)};')
        for r in self.rewards:
            out.append(f'rewards "{r.name}"')
            for pred, label, v in r.entries:
                out.append(f"  [{label}] {to_source(pred)} : {v:.12g};")
            out.append("endrewards")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------- MDP

@dataclass
class Mdp:
    """Explicit-state MDP in compressed-row layout.

    Choices of state ``s`` are ``choice_start[s]:choice_start[s+1]``;
    transitions of choice ``c`` are ``trans_start[c]:trans_start[c+1]``.
    """

    var_names: tuple[str, ...]
    states: list[tuple]
    initial: int
    choice_start: np.ndarray
    choice_label: list[str]
    trans_start: np.ndarray
    trans_target: np.ndarray
    trans_prob: np.ndarray
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    rewards: dict[str, np.ndarray] = field(default_factory=dict)  # per choice
    action_kinds: dict[str, str] = field(default_factory=dict)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_choices(self) -> int:
        return len(self.choice_label)

    @property
    def num_transitions(self) -> int:
        return int(self.trans_target.shape[0])

    @property
    def choice_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_states), np.diff(self.choice_start))

    def choices(self, s: int) -> range:
        return range(int(self.choice_start[s]), int(self.choice_start[s + 1]))

    def distribution(self, c: int) -> list[tuple[int, float]]:
        a, b = int(self.trans_start[c]), int(self.trans_start[c + 1])
        return list(zip(self.trans_target[a:b].tolist(), self.trans_prob[a:b].tolist()))

    def deadlocks(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.choice_start) == 0)

    def matrix(self) -> sp.csr_matrix:
        """Choice-by-state transition matrix."""
        return sp.csr_matrix(
            (self.trans_prob, self.trans_target, self.trans_start),
            shape=(self.num_choices, self.num_states),
        )

    def label(self, name: str) -> np.ndarray:
        if name not in self.labels:
            raise KeyError(f"unknown label {name!r}")
        return self.labels[name]

    def valuation(self, s: int) -> dict:
        return dict(zip(self.var_names, self.states[s]))

    def state_labels(self, s: int) -> list[str]:
        return [k for k, v in self.labels.items() if v[s]]

    def check_normalized(self, tol: float = PROB_TOL) -> None:
        sums = np.add.reduceat(self.trans_prob, self.trans_start[:-1]) if self.num_choices else []
        bad = np.flatnonzero(np.abs(np.asarray(sums) - 1.0) > tol)
        if bad.size:
            raise ModelError(f"choice {int(bad[0])} sums to {sums[bad[0]]}")

    def to_json(self) -> str:
        return json.dumps(_mdp_dict(self), indent=1)


def _mdp_dict(m: Mdp, choice_state: np.ndarray | None = None) -> dict:
    cs = m.choice_state if choice_state is None else choice_state
    states = [
        {
            "id": i,
            "vars": {k: v for k, v in zip(m.var_names, st)},
            "labels": m.state_labels(i),
        }
        for i, st in enumerate(m.states)
    ]
    choices = [
        {
            "state": int(cs[c]),
            "action": m.choice_label[c],
            "dist": [{"to": t, "p": float(f"{p:.12g}")} for t, p in m.distribution(c)],
        }
        for c in range(m.num_choices)
    ]
    return {"states": states, "choices": choices, "initial": m.initial}


@dataclass
class Dtmc(Mdp):
    """An MDP with at most one choice per state; ``mdp_index`` maps back."""

    mdp_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def matrix_square(self) -> sp.csr_matrix:
        """State-by-state matrix; deadlocks become self-loops."""
        n = self.num_states
        P = sp.lil_matrix((n, n))
        M = self.matrix().tocsr()
        cs = self.choice_state
        rows = sp.csr_matrix((np.ones(len(cs)), (cs, np.arange(len(cs)))), shape=(n, self.num_choices))
        P = (rows @ M).tolil()
        for s in self.deadlocks():
            P[s, s] = 1.0
        return P.tocsr()


@dataclass(frozen=True)
class Policy:
    """Deterministic memoryless policy: local choice offset per state, -1 if none."""

    index: tuple[int, ...]

    def choice(self, mdp: Mdp, s: int) -> int | None:
        k = self.index[s]
        return None if k < 0 else int(mdp.choice_start[s]) + k

    def action(self, mdp: Mdp, s: int) -> str | None:
        c = self.choice(mdp, s)
        return None if c is None else mdp.choice_label[c]

    def to_json(self, mdp: Mdp, value: float | None = None, objective: str = "") -> str:
        rows = [
            {"state": s, "action": mdp.choice_label[int(mdp.choice_start[s]) + k]}
            for s, k in enumerate(self.index)
            if k >= 0
        ]
        return json.dumps({"policy": rows, "value": value, "objective": objective}, indent=1)


def policy_from_choices(mdp: Mdp, global_choice: Sequence[int]) -> Policy:
    """Build a policy from a global choice index per state (-1 for none)."""
    idx = []
    for s, c in enumerate(global_choice):
        if c < 0:
            idx.append(-1)
        else:
            k = int(c) - int(mdp.choice_start[s])
            if not 0 <= k < mdp.choice_start[s + 1] - mdp.choice_start[s]:
                raise ModelError(f"choice {c} does not belong to state {s}")
            idx.append(k)
    return Policy(tuple(idx))


def induce_dtmc(mdp: Mdp, policy: Policy) -> Dtmc:
    """Keep the chosen distribution per state, pruned to states reachable from s0."""
    if len(policy.index) != mdp.num_states:
        raise ModelError("policy length does not match the MDP")
    for s in range(mdp.num_states):
        n = int(mdp.choice_start[s + 1] - mdp.choice_start[s])
        k = policy.index[s]
        if n > 0 and not 0 <= k < n:
            raise ModelError(f"policy selects a disabled action in state {s}")
        if n == 0 and k != -1:
            raise ModelError(f"policy selects an action in deadlock state {s}")
    order = [mdp.initial]
    new_id = {mdp.initial: 0}
    queue = deque(order)
    while queue:
        s = queue.popleft()
        c = policy.choice(mdp, s)
        if c is None:
            continue
        for t, _ in mdp.distribution(c):
            if t not in new_id:
                new_id[t] = len(order)
                order.append(t)
                queue.append(t)
    cstart, labels_c, tstart, tt, tp = [0], [], [0], [], []
    chosen = []
    for s in order:
        c = policy.choice(mdp, s)
        if c is not None:
            chosen.append(c)
            labels_c.append(mdp.choice_label[c])
            for t, p in mdp.distribution(c):
                tt.append(new_id[t])
                tp.append(p)
            tstart.append(len(tt))
        cstart.append(len(labels_c))
    idx = np.array(order, dtype=np.int64)
    chosen_arr = np.array(chosen, dtype=np.int64)
    return Dtmc(
        var_names=mdp.var_names,
        states=[mdp.states[s] for s in order],
        initial=0,
        choice_start=np.array(cstart, dtype=np.int64),
        choice_label=labels_c,
        trans_start=np.array(tstart, dtype=np.int64),
        trans_target=np.array(tt, dtype=np.int64),
        trans_prob=np.array(tp, dtype=float),
        labels={k: v[idx] for k, v in mdp.labels.items()},
        rewards={k: v[chosen_arr] for k, v in mdp.rewards.items()},
        action_kinds=dict(mdp.action_kinds),
        mdp_index=idx,
    )


# ---------------------------------------------------------------- exploration

class _Compiled:
    """Program compiled to closures over state tuples."""

    def __init__(self, program: GuardedProgram, tol: float = PROB_TOL):
        program.check(tol)
        self.program = program
        self.vars = program.variables
        self.index = {v.name: i for i, v in enumerate(self.vars)}
        consts = dict(program.constants)
        self.consts = consts
        # label -> list per module of [(guard_fn, [(p, update_fn, cmd)])]
        self.groups: list[tuple[str, list[list]]] = []
        by_label: dict[str, dict[str, list]] = {}
        order: list[str] = []
        for m in program.modules:
            for c in m.commands:
                if c.label not in by_label:
                    by_label[c.label] = {}
                    order.append(c.label)
                by_label[c.label].setdefault(m.name, []).append(self._cmd(c, m.name))
        for label in order:
            self.groups.append((label, list(by_label[label].values())))
        self.label_fns = [(n, compile_expr(e, self.index, consts)) for n, e in program.labels]
        self.reward_fns: list[tuple[str, dict[str, list]]] = []
        for r in program.rewards:
            per_label: dict[str, list] = {}
            for pred, label, v in r.entries:
                per_label.setdefault(label, []).append((compile_expr(pred, self.index, consts), v))
            self.reward_fns.append((r.name, per_label))

    def _cmd(self, c: Command, module: str):
        guard = compile_expr(c.guard, self.index, self.consts)
        ups = []
        for u in c.updates:
            written = {v for v, _ in u.assigns}
            if len(written) != len(u.assigns):
                raise ModelError(f"[{c.label}] in {module}: variable assigned twice")
            ups.append((u.prob, self._update_fn(u), written))
        return guard, ups, c, module

    def _update_fn(self, u: Update):
        if not u.assigns:
            return None
        parts = [(self.index[v], compile_source(e, self.index, self.consts)) for v, e in u.assigns]
        body = ", ".join(f"({i}, {src})" for i, src in parts)
        return eval(f"lambda s: ({body},)", {"__builtins__": {}})  # noqa: S307 - generated from AST

    def apply(self, state: tuple, writes: list[tuple[int, object]], cmds) -> tuple:
        new = list(state)
        for i, val in writes:
            v = self.vars[i]
            if not v.in_bounds(val):
                names = ", ".join(f"[{c.label}] in {m}" for c, m in cmds)
                raise ModelError(f"{names}: {v.name}={val!r} violates bounds of {v.name}")
            new[i] = val
        return tuple(new)

    def enabled(self, state: tuple) -> list[tuple[str, list[tuple[tuple, float]]]]:
        out = []
        for label, modules in self.groups:
            per_module = []
            for cmds in modules:
                live = [c for c in cmds if c[0](state)]
                if not live:
                    break
                per_module.append(live)
            else:
                for combo in _product(per_module):
                    out.append((label, self._joint(state, combo)))
        return out

    def _joint(self, state, combo) -> list[tuple[tuple, float]]:
        prob_cmds = [c for c in combo if len(c[1]) > 1]
        if len(prob_cmds) > 1:
            names = ", ".join(f"{c[3]}" for c in prob_cmds)
            raise ModelError(
                f"[{combo[0][2].label}]: probabilistic updates in more than one participant ({names})"
            )
        cmds = [(c[2], c[3]) for c in combo]
        dist: dict[tuple, float] = {}
        # every participant but at most one has a single update
        branches = [[]]
        probs = [1.0]
        for _, ups, cmd, module in combo:
            nb, np_ = [], []
            for (b, bp) in zip(branches, probs):
                for p, fn, written in ups:
                    nb.append(b + [(fn, written, cmd, module)])
                    np_.append(bp * p)
            branches, probs = nb, np_
        for branch, p in zip(branches, probs):
            if p == 0.0:
                continue
            writes: dict[int, object] = {}
            owner: dict[int, str] = {}
            for fn, written, cmd, module in branch:
                if fn is None:
                    continue
                for i, val in fn(state):
                    if i in writes and writes[i] != val:
                        raise ModelError(
                            f"[{cmd.label}]: conflicting writes to {self.vars[i].name} "
                            f"by {owner[i]} and {module}"
                        )
                    writes[i] = val
                    owner[i] = module
            succ = self.apply(state, list(writes.items()), cmds)
            dist[succ] = dist.get(succ, 0.0) + p
        return list(dist.items())


def _product(lists):
    if not lists:
        yield ()
        return
    head, *rest = lists
    for x in head:
        for tail in _product(rest):
            yield (x,) + tail


def enabled(state: Mapping[str, object] | tuple, program: GuardedProgram):
    """Enabled actions at ``state`` as ``(label, [(valuation, prob), ...])``."""
    comp = _Compiled(program)
    if isinstance(state, Mapping):
        state = tuple(state[v.name] for v in comp.vars)
    for v, val in zip(comp.vars, state):
        if not v.in_bounds(val):
            raise ModelError(f"state value {v.name}={val!r} out of bounds")
    return comp.enabled(state)


def eval_expr(state: Mapping[str, object], e: Expr, constants: Mapping[str, object] | None = None):
    env = dict(constants or {})
    env.update(state)
    return evaluate(e, env)


def build_mdp(program: GuardedProgram, cap: int = DEFAULT_CAP, tol: float = PROB_TOL) -> Mdp:
    """Breadth-first exploration from the initial state; numbering is discovery order.

    ``cap`` bounds the number of transitions and ``tol`` the deviation of a
    choice's probability mass from one.
    """
    comp = _Compiled(program, tol)
    init = program.initial
    index = {init: 0}
    states = [init]
    cstart, clabel, tstart, tt, tp = [0], [], [0], [], []
    queue = deque([init])
    while queue:
        s = queue.popleft()
        for label, dist in comp.enabled(s):
            clabel.append(label)
            for succ, p in dist:
                j = index.get(succ)
                if j is None:
                    j = index[succ] = len(states)
                    states.append(succ)
                    queue.append(succ)
                tt.append(j)
                tp.append(p)
            tstart.append(len(tt))
            if len(tt) > cap:
                raise StateSpaceCapExceeded(len(states), len(tt), cap)
        cstart.append(len(clabel))
    mdp = Mdp(
        var_names=tuple(v.name for v in comp.vars),
        states=states,
        initial=0,
        choice_start=np.array(cstart, dtype=np.int64),
        choice_label=clabel,
        trans_start=np.array(tstart, dtype=np.int64),
        trans_target=np.array(tt, dtype=np.int64),
        trans_prob=np.array(tp, dtype=float),
        action_kinds=dict(program.action_kinds),
    )
    for name, fn in comp.label_fns:
        mdp.labels[name] = np.fromiter((bool(fn(s)) for s in states), dtype=bool, count=len(states))
    if "init" not in mdp.labels:
        lab = np.zeros(len(states), dtype=bool)
        lab[0] = True
        mdp.labels["init"] = lab
    dl = np.zeros(len(states), dtype=bool)
    dl[mdp.deadlocks()] = True
    mdp.labels["deadlock"] = dl
    cs = mdp.choice_state
    for name, per_label in comp.reward_fns:
        r = np.zeros(len(clabel))
        for c, label in enumerate(clabel):
            for fn, v in per_label.get(label, ()):
                if fn(states[cs[c]]):
                    r[c] += v
        mdp.rewards[name] = r
    mdp.check_normalized(tol)
    return mdp


def mdp_from_lists(
    choices: Sequence[Sequence[tuple[str, Sequence[tuple[int, float]]]]],
    labels: Mapping[str, Iterable[int]] | None = None,
    rewards: Mapping[str, Sequence[Sequence[float]]] | None = None,
    initial: int = 0,
) -> Mdp:
    """Construct an MDP directly; ``choices[s]`` lists ``(label, [(target, p)])``.

    ``labels`` maps a proposition to the states where it holds and
    ``rewards[name][s][k]`` is the reward of the k-th choice of state s.
    """
    n = len(choices)
    cstart, clabel, tstart, tt, tp = [0], [], [0], [], []
    rew = {k: [] for k in (rewards or {})}
    for s, cs in enumerate(choices):
        for k, (label, dist) in enumerate(cs):
            clabel.append(label)
            for t, p in dist:
                tt.append(int(t))
                tp.append(float(p))
            tstart.append(len(tt))
            for name in rew:
                rew[name].append(float(rewards[name][s][k]))
        cstart.append(len(clabel))
    m = Mdp(
        var_names=("s",),
        states=[(i,) for i in range(n)],
        initial=initial,
        choice_start=np.array(cstart, dtype=np.int64),
        choice_label=clabel,
        trans_start=np.array(tstart, dtype=np.int64),
        trans_target=np.array(tt, dtype=np.int64),
        trans_prob=np.array(tp, dtype=float),
    )
    for name, members in (labels or {}).items():
        arr = np.zeros(n, dtype=bool)
        arr[list(members)] = True
        m.labels[name] = arr
    if "init" not in m.labels:
        arr = np.zeros(n, dtype=bool)
        arr[initial] = True
        m.labels["init"] = arr
    dl = np.zeros(n, dtype=bool)
    dl[m.deadlocks()] = True
    m.labels["deadlock"] = dl
    m.rewards = {k: np.array(v, dtype=float) for k, v in rew.items()}
    return m
