"""Policy synthesis, weighted-sum Pareto sweeps and checks on induced chains.

Objectives are maximised.  A two-objective query is scalarised as
``w * A + (1 - w) * B`` per choice; a reachability objective contributes the
probability mass that a choice moves into its target, and once any
reachability target is hit the accumulation stops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pgcl import Dtmc, Mdp, Policy, induce_dtmc, policy_from_choices
from .verify import engine
from .verify.props import (
    Always,
    Const,
    Eventually,
    ProbQuery,
    Query,
    Result,
    RewardQuery,
    State,
    Until,
    WeakUntil,
    check_all,
    parse_property,
    sat,
)

# the three optimisation queries of the evaluation, as (A, B) pairs
QUERIES = {
    "a": ('R{"pot"}max=? [ C ]', 'Pmax=? [ F "goal" ]'),
    "b": ('R{"prod"}max=? [ C ]', 'Pmax=? [ F "goal" ]'),
    "c": ('R{"eff"}max=? [ C ]', 'R{"nuis"}max=? [ C ]'),
}


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class Objective:
    """A maximisable quantity: a total reward or a reachability probability."""

    text: str
    reward: str | None = None  # reward structure for total-reward objectives
    phi: State | None = None  # reachability: phi U psi
    psi: State | None = None
    opt: str = "max"


def parse_objective(source: str | Objective) -> Objective:
    """``prod`` (a bare reward name), ``R{"r"}max=? [ C ]`` or ``Pmax=? [ F "goal" ]``."""
    if isinstance(source, Objective):
        return source
    text = source.strip()
    if text.isidentifier():
        return Objective(f'R{{"{text}"}}max=? [ C ]', reward=text)
    f = parse_property(text).formula
    if isinstance(f, RewardQuery):
        if f.kind != "C" or f.steps is not None or f.opt == "min":
            raise SynthesisError(f"only unbounded total rewards R{{..}}max=? [ C ] can be synthesised: {text!r}")
        return Objective(text, reward=f.reward)
    if isinstance(f, ProbQuery):
        path = f.path
        if getattr(path, "bound", None) is not None:
            raise SynthesisError(f"step-bounded objectives need memory; not supported: {text!r}")
        opt = f.opt or ("min" if f.op in (">", ">=") else "max")
        if isinstance(path, Eventually):
            return Objective(text, phi=Const(True), psi=path.arg, opt=opt)
        if isinstance(path, Until):
            return Objective(text, phi=path.left, psi=path.right, opt=opt)
        if isinstance(path, (Always, WeakUntil)):
            return Objective(text, phi=path, opt=opt)  # solved through the dual
    raise SynthesisError(f"not a synthesis objective: {text!r}")


def _complete(mdp: Mdp, choice: np.ndarray) -> Policy:
    """Policy from global choices; states left open take their first action."""
    counts = np.diff(mdp.choice_start)
    g = np.where((choice < 0) & (counts > 0), mdp.choice_start[:-1], choice)
    return policy_from_choices(mdp, g)


def synthesize(mdp: Mdp, objective: str | Objective) -> tuple[float, Policy]:
    """Optimal deterministic memoryless policy and its value at the initial state."""
    obj = parse_objective(objective)
    s0 = mdp.initial
    if obj.reward is not None:
        r = _reward(mdp, obj.reward)
        sol = engine.total_reward(mdp, r, obj.reward)
        return float(sol.values[s0]), _complete(mdp, sol.choice)
    if obj.psi is None:
        path = obj.phi
        if isinstance(path, Always):
            a, b = sat(mdp, path.arg), np.zeros(mdp.num_states, dtype=bool)
        else:
            a, b = sat(mdp, path.left), sat(mdp, path.right)
        sol = engine.weak_until_prob(mdp, a, b, obj.opt)
    else:
        sol = engine.until_prob(mdp, sat(mdp, obj.phi), sat(mdp, obj.psi), obj.opt)
    return float(sol.values[s0]), _complete(mdp, sol.choice)


def _reward(mdp: Mdp, name: str) -> np.ndarray:
    if name not in mdp.rewards:
        raise SynthesisError(f"unknown reward structure {name!r}")
    return mdp.rewards[name]


# ---------------------------------------------------------------- scalarisation

def _vector(mdp: Mdp, obj: Objective) -> tuple[np.ndarray, np.ndarray]:
    """Per-choice reward and the set of states where accumulation stops."""
    n = mdp.num_states
    if obj.reward is not None:
        return np.asarray(_reward(mdp, obj.reward), dtype=float), np.zeros(n, dtype=bool)
    if obj.psi is None or obj.opt != "max":
        raise SynthesisError(f"sweeps support total rewards and Pmax of until/eventually: {obj.text!r}")
    phi, psi = sat(mdp, obj.phi), sat(mdp, obj.psi)
    stop = psi | ~phi
    into = mdp.matrix() @ psi.astype(float)
    live = ~stop[mdp.choice_state]
    return np.where(live, into, 0.0), stop


def _absorbing(mdp: Mdp, stop: np.ndarray) -> tuple[Mdp, np.ndarray]:
    """Copy of ``mdp`` without the choices of ``stop`` states; returns kept choice ids."""
    keep = ~stop[mdp.choice_state]
    kept = np.flatnonzero(keep)
    counts = np.where(stop, 0, np.diff(mdp.choice_start))
    cstart = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    lens = np.diff(mdp.trans_start)[kept]
    tstart = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    idx = np.concatenate([np.arange(mdp.trans_start[c], mdp.trans_start[c + 1]) for c in kept]) if len(kept) else \
        np.zeros(0, dtype=np.int64)
    sub = Mdp(
        var_names=mdp.var_names,
        states=mdp.states,
        initial=mdp.initial,
        choice_start=cstart,
        choice_label=[mdp.choice_label[c] for c in kept],
        trans_start=tstart,
        trans_target=mdp.trans_target[idx],
        trans_prob=mdp.trans_prob[idx],
        labels=mdp.labels,
        rewards={k: v[kept] for k, v in mdp.rewards.items()},
        action_kinds=mdp.action_kinds,
    )
    return sub, kept


def _chain_value(mdp: Mdp, choice: np.ndarray, r: np.ndarray) -> float:
    """Expected total reward of a fixed choice per state (exact solve)."""
    live = choice >= 0
    counts = live.astype(np.int64)
    cstart = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    picked = choice[live]
    lens = np.diff(mdp.trans_start)[picked]
    tstart = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    idx = np.concatenate([np.arange(mdp.trans_start[c], mdp.trans_start[c + 1]) for c in picked]) if len(picked) \
        else np.zeros(0, dtype=np.int64)
    chain = Mdp(mdp.var_names, mdp.states, mdp.initial, cstart, [mdp.choice_label[c] for c in picked],
                tstart, mdp.trans_target[idx], mdp.trans_prob[idx])
    return float(engine.total_reward(chain, r[picked]).values[mdp.initial])


@dataclass
class ParetoPoint:
    weight: float
    value_a: float
    value_b: float
    policy: Policy = field(repr=False)


def scalarised(mdp: Mdp, obj_a, obj_b, weight: float) -> ParetoPoint:
    """Optimal policy for ``weight * A + (1 - weight) * B`` and its value on each objective."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    a, b = parse_objective(obj_a), parse_objective(obj_b)
    ra, stop_a = _vector(mdp, a)
    rb, stop_b = _vector(mdp, b)
    stop = stop_a | stop_b
    sub, kept = _absorbing(mdp, stop)
    r = weight * ra[kept] + (1.0 - weight) * rb[kept]
    name = f"{weight:g}*{a.text} + {1 - weight:g}*{b.text}"
    sol = engine.total_reward(sub, r, name)
    local = sol.choice
    g = np.where(local >= 0, kept[np.maximum(local, 0)], -1)
    va = _chain_value(sub, local, ra[kept])
    vb = _chain_value(sub, local, rb[kept])
    return ParetoPoint(weight, va, vb, _complete(mdp, g))


def _dominated(p: ParetoPoint, q: ParetoPoint, tol: float) -> bool:
    """q dominates p."""
    return q.value_a >= p.value_a - tol and q.value_b >= p.value_b - tol and (
        q.value_a > p.value_a + tol or q.value_b > p.value_b + tol
    )


def nondominated(points: list[ParetoPoint], tol: float = 1e-9) -> list[ParetoPoint]:
    """Drop dominated points and repeats of the same value pair (keeps the first by weight)."""
    out: list[ParetoPoint] = []
    for p in points:
        if any(_dominated(p, q, tol) for q in points):
            continue
        if any(abs(p.value_a - q.value_a) <= tol and abs(p.value_b - q.value_b) <= tol for q in out):
            continue
        out.append(p)
    return out


def sweep_weights(k: int) -> list[float]:
    if k < 2:
        raise ValueError("a sweep needs at least two weights")
    return [i / (k - 1) for i in range(k)]


def pareto_sweep(mdp: Mdp, obj_a, obj_b, k: int = 5) -> list[ParetoPoint]:
    """Nondominated frontier from ``k`` evenly spaced weights, ordered by weight."""
    return nondominated([scalarised(mdp, obj_a, obj_b, w) for w in sweep_weights(k)])


def constrained(mdp: Mdp, objective, constraint, bound: float, k: int = 9) -> ParetoPoint | None:
    """Best policy for ``objective`` among sweep points whose ``constraint`` value is at most ``bound``.

    An approximation: only policies found by the weighted sweep are
    candidates, so a feasible optimum between sweep points can be missed.
    """
    pts = [scalarised(mdp, objective, constraint, w) for w in sweep_weights(k)]
    feasible = [p for p in pts if p.value_b <= bound + 1e-12]
    if not feasible:
        return None
    return max(feasible, key=lambda p: (p.value_a, p.weight))


def query_policy(mdp: Mdp, query: str, weight: float = 0.5) -> ParetoPoint:
    """Policy for one of the named optimisation queries at a fixed weight."""
    if query not in QUERIES:
        raise KeyError(f"unknown query {query!r}; expected one of {sorted(QUERIES)}")
    a, b = QUERIES[query]
    return scalarised(mdp, a, b, weight)


# ---------------------------------------------------------------- induced chains

@dataclass
class PolicyReport:
    results: list[Result]

    @property
    def passed(self) -> bool:
        return all(r.verdict is not False and r.holds is not False for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]


def verify_policy(dtmc: Dtmc, properties: list[str | Query]) -> PolicyReport:
    """Evaluate properties on the chain induced by a policy."""
    qs = [parse_property(p) if isinstance(p, str) else p for p in properties]
    return PolicyReport(check_all(dtmc, qs))


def steady_state(dtmc: Dtmc, atom: str | State) -> float:
    """Long-run probability of the states satisfying ``atom`` (a label or formula)."""
    if isinstance(atom, str):
        mask = dtmc.label(atom) if atom in dtmc.labels else sat(dtmc, parse_property(atom).formula)
    else:
        mask = sat(dtmc, atom)
    pi = engine.steady_state_distribution(dtmc)
    return float(pi[mask].sum())


def accident_freedom_of(dtmc: Dtmc) -> tuple[tuple[float, float, float] | None, int]:
    """``(min, mean, max)`` of P[!mishap W safe] over unsafe states, and how many there are."""
    from .verify.wellformed import accident_freedom

    xi = dtmc.label("unsafe")
    if not xi.any():
        return None, 0
    return accident_freedom(dtmc, xi), int(xi.sum())


def policy_chain(mdp: Mdp, policy: Policy) -> Dtmc:
    return induce_dtmc(mdp, policy)
