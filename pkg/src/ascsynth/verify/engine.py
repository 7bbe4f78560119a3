"""Numerical core: reachability probabilities and expected total rewards.

All routines treat deadlock states as if they carried a zero-reward
self-loop.  Unbounded queries run qualitative graph precomputation, then
value iteration, then extract a deterministic memoryless policy and refine
it by exact policy evaluation (sparse linear solves) with strict-improvement
policy iteration, so the returned values are exact up to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from ..pgcl import Mdp

VI_TOL = 1e-8
VI_MAX_ITER = 1_000_000
IMPROVE_TOL = 1e-10


class NonConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"value iteration did not converge after {iterations} iterations (residual {residual:.3g})")
        self.iterations = iterations
        self.residual = residual


class PositiveRewardEndComponent(ValueError):
    """Some end component contains a positive-reward action."""

    def __init__(self, reward: str, states: list[int], actions: list[str]):
        shown = ", ".join(map(str, states[:20])) + (" ..." if len(states) > 20 else "")
        super().__init__(
            f"reward {reward!r}: end component with positive reward "
            f"(states {shown}; actions {sorted(set(actions))}) allows unbounded accumulation"
        )
        self.reward = reward
        self.states = states
        self.actions = actions


@dataclass
class Solution:
    values: np.ndarray
    choice: np.ndarray  # global MDP choice per state, -1 where there is none
    iterations: int = 0
    residual: float = 0.0

    def at(self, s: int) -> float:
        return float(self.values[s])


class _Aug:
    """MDP arrays with a self-loop choice added to every deadlock."""

    def __init__(self, mdp: Mdp):
        n = mdp.num_states
        counts = np.diff(mdp.choice_start)
        dead = counts == 0
        new_counts = np.where(dead, 1, counts)
        self.n = n
        self.cstart = np.concatenate([[0], np.cumsum(new_counts)]).astype(np.int64)
        m = int(self.cstart[-1])
        self.m = m
        orig = np.full(m, -1, dtype=np.int64)
        live_pos = np.flatnonzero(np.repeat(~dead, new_counts))
        orig[live_pos] = np.arange(mdp.num_choices)
        self.orig = orig
        self.cstate = np.repeat(np.arange(n), new_counts)
        M = mdp.matrix().tocoo()
        rows = live_pos[M.row] if M.nnz else M.row
        dead_states = np.flatnonzero(dead)
        dead_choices = self.cstart[dead_states]
        r = np.concatenate([rows, dead_choices]).astype(np.int64)
        c = np.concatenate([M.col, dead_states]).astype(np.int64)
        v = np.concatenate([M.data, np.ones(len(dead_states))])
        self.A = sp.csr_matrix((v, (r, c)), shape=(m, n))
        self.A.sum_duplicates()
        self.A.sort_indices()
        # boolean successor structure
        self.succ = self.A.copy()
        self.succ.data = np.ones_like(self.succ.data)

    def reward(self, mdp: Mdp, r: np.ndarray | None) -> np.ndarray:
        out = np.zeros(self.m)
        if r is not None:
            live = self.orig >= 0
            out[live] = r[self.orig[live]]
        return out

    def to_global(self, local_choice: np.ndarray) -> np.ndarray:
        g = self.orig[local_choice]
        return g


def _aug(mdp: Mdp) -> _Aug:
    cached = mdp.__dict__.get("_aug_cache")
    if cached is None or cached[0] != (mdp.num_states, mdp.num_choices, mdp.num_transitions):
        cached = ((mdp.num_states, mdp.num_choices, mdp.num_transitions), _Aug(mdp))
        mdp.__dict__["_aug_cache"] = cached
    return cached[1]


def _reduce_max(aug: _Aug, y: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(y, aug.cstart[:-1])


def _reduce_min(aug: _Aug, y: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(y, aug.cstart[:-1])


# ---------------------------------------------------------------- graph precomputation

def _some_succ_in(aug: _Aug, target: np.ndarray) -> np.ndarray:
    """Per choice: has a successor in ``target``."""
    return (aug.succ @ target.astype(np.float64)) > 0


def _all_succ_in(aug: _Aug, target: np.ndarray) -> np.ndarray:
    return (aug.succ @ (~target).astype(np.float64)) == 0


def _exists_choice(aug: _Aug, per_choice: np.ndarray) -> np.ndarray:
    return np.logical_or.reduceat(per_choice, aug.cstart[:-1])


def _forall_choice(aug: _Aug, per_choice: np.ndarray) -> np.ndarray:
    return np.logical_and.reduceat(per_choice, aug.cstart[:-1])


def exists_until(mdp: Mdp, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """E[phi U psi]: some resolution and path reach psi through phi."""
    aug = _aug(mdp)
    R = psi.copy()
    while True:
        new = R | (phi & _exists_choice(aug, _some_succ_in(aug, R)))
        if (new == R).all():
            return R
        R = new


def forall_until(mdp: Mdp, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """A[phi U psi]: every resolution and every path reach psi through phi."""
    aug = _aug(mdp)
    R = psi.copy()
    while True:
        new = R | (phi & _forall_choice(aug, _all_succ_in(aug, R)))
        if (new == R).all():
            return R
        R = new


def exists_next(mdp: Mdp, phi: np.ndarray) -> np.ndarray:
    aug = _aug(mdp)
    return _exists_choice(aug, _some_succ_in(aug, phi))


def forall_next(mdp: Mdp, phi: np.ndarray) -> np.ndarray:
    aug = _aug(mdp)
    return _forall_choice(aug, _all_succ_in(aug, phi))


def prob0_max(mdp: Mdp, phi, psi) -> np.ndarray:
    """States with Pmax[phi U psi] = 0."""
    return ~exists_until(mdp, phi, psi)


def prob0_min(mdp: Mdp, phi, psi) -> np.ndarray:
    """States with Pmin[phi U psi] = 0."""
    aug = _aug(mdp)
    R = psi.copy()
    # s has Pmin > 0 iff every choice can move into R (least fixpoint)
    while True:
        new = R | (phi & _forall_choice(aug, _some_succ_in(aug, R)))
        if (new == R).all():
            return ~R
        R = new


def prob1_max(mdp: Mdp, phi, psi, allowed: np.ndarray | None = None):
    """States with Pmax[phi U psi] = 1, and a choice per state achieving it.

    ``allowed`` optionally restricts the usable choices (augmented layout).
    Returns ``(states, local_choice)`` where local_choice is an augmented
    choice index or -1.
    """
    aug = _aug(mdp)
    ok = np.ones(aug.m, dtype=bool) if allowed is None else allowed
    U = np.ones(aug.n, dtype=bool)
    while True:
        stay = ok & _all_succ_in(aug, U)
        R = psi.copy()
        pick = np.full(aug.n, -1, dtype=np.int64)
        while True:
            good = stay & _some_succ_in(aug, R)
            cand = phi & ~R & _exists_choice(aug, good)
            if not cand.any():
                break
            for s in np.flatnonzero(cand):
                a, b = aug.cstart[s], aug.cstart[s + 1]
                pick[s] = a + int(np.flatnonzero(good[a:b])[0])
            R = R | cand
        if (R == U).all():
            return R, pick
        U = R


def prob1_min(mdp: Mdp, phi, psi, zero_min: np.ndarray | None = None) -> np.ndarray:
    """States with Pmin[phi U psi] = 1."""
    Z = prob0_min(mdp, phi, psi) if zero_min is None else zero_min
    return ~exists_until(mdp, phi & ~psi, Z)


# ---------------------------------------------------------------- end components

def maximal_end_components(mdp: Mdp, states: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """MECs as ``(states, augmented choices)``, optionally within a state subset."""
    aug = _aug(mdp)
    alive_s = np.ones(aug.n, dtype=bool) if states is None else np.asarray(states, dtype=bool).copy()
    alive_c = alive_s[aug.cstate].copy()
    coo = aug.succ.tocoo()
    src_state = aug.cstate[coo.row]
    while True:
        alive_c &= _all_succ_in(aug, alive_s)
        alive_s &= _exists_choice(aug, alive_c)
        alive_c &= alive_s[aug.cstate]
        keep = alive_c[coo.row]
        g = sp.csr_matrix(
            (np.ones(int(keep.sum())), (src_state[keep], coo.col[keep])), shape=(aug.n, aug.n)
        )
        _, comp = connected_components(g, directed=True, connection="strong")
        comp = np.where(alive_s, comp, -1)
        leaving = np.zeros(aug.m, dtype=bool)
        leaving[coo.row[comp[src_state] != comp[coo.col]]] = True
        new_c = alive_c & ~leaving
        new_s = alive_s & _exists_choice(aug, new_c)
        if (new_c == alive_c).all() and (new_s == alive_s).all():
            break
        alive_c, alive_s = new_c, new_s
    out = []
    for k in np.unique(comp[alive_s]):
        members = alive_s & (comp == k)
        out.append((np.flatnonzero(members), np.flatnonzero(alive_c & members[aug.cstate])))
    return out


def check_no_positive_end_component(mdp: Mdp, reward: np.ndarray, name: str = "",
                                    states: np.ndarray | None = None) -> None:
    aug = _aug(mdp)
    r = aug.reward(mdp, reward)
    for ss, cs in maximal_end_components(mdp, states):
        bad = cs[r[cs] > 0]
        if bad.size:
            labels = [mdp.choice_label[aug.orig[c]] for c in bad if aug.orig[c] >= 0]
            raise PositiveRewardEndComponent(name, ss.tolist(), labels)


# ---------------------------------------------------------------- value iteration

def _value_iteration(aug, r, fixed_mask, fixed_val, opt, tol, max_iter, x0=None):
    x = np.where(fixed_mask, fixed_val, 0.0) if x0 is None else x0.copy()
    reduce = _reduce_max if opt == "max" else _reduce_min
    free = ~fixed_mask
    it, res = 0, np.inf
    while it < max_iter:
        it += 1
        y = reduce(aug, r + aug.A @ x)
        new = np.where(free, y, x)
        res = float(np.max(np.abs(new - x))) if len(x) else 0.0
        x = new
        if res < tol:
            return x, it, res
    raise NonConvergence(it, res)


def _q(aug, r, x):
    return r + aug.A @ x


def _best_choices(aug, q, x, opt, tol):
    """Per state, mask of choices within ``tol`` of the optimum."""
    best = (_reduce_max if opt == "max" else _reduce_min)(aug, q)
    near = np.abs(q - best[aug.cstate]) <= tol
    return near, best


def _first_true(aug, mask) -> np.ndarray:
    out = np.full(aug.n, -1, dtype=np.int64)
    idx = np.flatnonzero(mask)
    st = aug.cstate[idx]
    first = np.unique(st, return_index=True)
    out[first[0]] = idx[first[1]]
    return out


def _evaluate(aug, pick, r, solve_mask, fixed_val):
    """Exact value of the policy ``pick`` on ``solve_mask`` states."""
    x = fixed_val.copy()
    S = np.flatnonzero(solve_mask)
    if S.size == 0:
        return x
    P = aug.A[pick[S]]
    b = r[pick[S]] + P[:, ~solve_mask] @ fixed_val[~solve_mask]
    Q = P[:, S]
    M = sp.identity(len(S), format="csr") - Q
    sol = spla.spsolve(M.tocsc(), b) if len(S) > 1 else np.array([b[0] / M.toarray()[0, 0]])
    x[S] = np.atleast_1d(sol)
    if not np.all(np.isfinite(x[S])):
        raise np.linalg.LinAlgError("policy evaluation failed: singular system")
    return x


def _improve(aug, pick, r, solve_mask, fixed_val, opt, max_rounds=10_000):
    x = _evaluate(aug, pick, r, solve_mask, fixed_val)
    sign = 1.0 if opt == "max" else -1.0
    for _ in range(max_rounds):
        q = _q(aug, r, x)
        cur = q[pick]
        near, best = _best_choices(aug, sign * q, None, "max", 1e-12)
        scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
        better = (best - sign * cur > IMPROVE_TOL * scale) & solve_mask
        if not better.any():
            return pick, x
        first = _first_true(aug, near)
        pick = np.where(better, first, pick)
        x = _evaluate(aug, pick, r, solve_mask, fixed_val)
    return pick, x


def _finish(mdp, aug, x, pick, it, res) -> Solution:
    x = np.where(np.isinf(x), x, np.clip(x, 0.0, None))
    g = np.where(pick >= 0, aug.orig[np.maximum(pick, 0)], -1)
    return Solution(values=x, choice=g, iterations=it, residual=res)


def until_prob(mdp: Mdp, phi: np.ndarray, psi: np.ndarray, opt: str = "max",
               tol: float = VI_TOL, max_iter: int = VI_MAX_ITER, exact: bool = True) -> Solution:
    """Pmax/Pmin of ``phi U psi`` in every state, with an optimal policy."""
    aug = _aug(mdp)
    phi = np.asarray(phi, dtype=bool)
    psi = np.asarray(psi, dtype=bool)
    n = aug.n
    if opt == "max":
        zero = prob0_max(mdp, phi, psi)
        one, pick1 = prob1_max(mdp, phi, psi)
    elif opt == "min":
        zero = prob0_min(mdp, phi, psi)
        one = prob1_min(mdp, phi, psi, zero)
    else:
        raise ValueError(f"opt must be 'min' or 'max', got {opt!r}")
    fixed = zero | one
    fixed_val = np.where(one, 1.0, 0.0)
    r = np.zeros(aug.m)
    x, it, res = _value_iteration(aug, r, fixed, fixed_val, opt, tol, max_iter)
    pick = _extract_policy(mdp, aug, x, r, phi, psi, zero, one, opt)
    if exact:
        pick, x = _improve(aug, pick, r, ~fixed, fixed_val, opt)
    x = np.where(fixed, fixed_val, x)
    return _finish(mdp, aug, np.clip(x, 0.0, 1.0), pick, it, res)


def _progress_policy(mdp, aug, near, target):
    """Choices reaching ``target`` almost surely, preferring ``near`` ones.

    Ties between optimal choices could otherwise select a stalling loop
    whose true value is below the optimum.
    """
    every = np.ones(aug.n, dtype=bool)
    pick = _first_true(aug, np.ones(aug.m, dtype=bool))
    _, p_all = prob1_max(mdp, every, target)
    _, p_near = prob1_max(mdp, every, target, allowed=near)
    pick = np.where(p_all >= 0, p_all, pick)
    return np.where(p_near >= 0, p_near, pick)


def _extract_policy(mdp, aug, x, r, phi, psi, zero, one, opt):
    q = _q(aug, r, x)
    near, _ = _best_choices(aug, q, x, opt, 1e-6)
    if opt == "max":
        pick = _progress_policy(mdp, aug, near, psi | zero)
        _, p1 = prob1_max(mdp, phi, psi)
        return np.where(one & (p1 >= 0), p1, pick)
    pick = _first_true(aug, near)
    # inside the zero region, stay inside it
    f0 = _first_true(aug, _all_succ_in(aug, zero) & zero[aug.cstate])
    return np.where(zero & phi & ~psi & (f0 >= 0), f0, pick)


def bounded_until_prob(mdp: Mdp, phi, psi, bound: int, opt: str = "max") -> np.ndarray:
    """Exactly ``bound`` backward Bellman steps."""
    aug = _aug(mdp)
    phi = np.asarray(phi, dtype=bool)
    psi = np.asarray(psi, dtype=bool)
    reduce = _reduce_max if opt == "max" else _reduce_min
    x = psi.astype(float)
    live = phi & ~psi
    for _ in range(int(bound)):
        y = reduce(aug, aug.A @ x)
        x = np.where(psi, 1.0, np.where(live, y, 0.0))
    return x


def weak_until_prob(mdp: Mdp, phi, psi, opt: str = "min", **kw) -> Solution:
    """P[phi W psi] via 1 - P_dual[(phi & !psi) U (!phi & !psi)]."""
    phi = np.asarray(phi, dtype=bool)
    psi = np.asarray(psi, dtype=bool)
    dual = "max" if opt == "min" else "min"
    sol = until_prob(mdp, phi & ~psi, ~phi & ~psi, dual, **kw)
    return Solution(1.0 - sol.values, sol.choice, sol.iterations, sol.residual)


def bounded_weak_until_prob(mdp: Mdp, phi, psi, bound: int, opt: str = "min") -> np.ndarray:
    phi = np.asarray(phi, dtype=bool)
    psi = np.asarray(psi, dtype=bool)
    dual = "max" if opt == "min" else "min"
    return 1.0 - bounded_until_prob(mdp, phi & ~psi, ~phi & ~psi, bound, dual)


# ---------------------------------------------------------------- rewards

def total_reward(mdp: Mdp, reward: np.ndarray, name: str = "", target: np.ndarray | None = None,
                 tol: float = VI_TOL, max_iter: int = VI_MAX_ITER, exact: bool = True) -> Solution:
    """Maximal expected reward accumulated forever (``target`` None) or until ``target``.

    For a target, states from which some resolution misses it with positive
    probability get value +inf.  Raises PositiveRewardEndComponent if the
    accumulation could be unbounded.
    """
    aug = _aug(mdp)
    n = aug.n
    if target is None:
        stop = np.zeros(n, dtype=bool)
        inf = np.zeros(n, dtype=bool)
    else:
        stop = np.asarray(target, dtype=bool)
        inf = ~prob1_min(mdp, np.ones(n, dtype=bool), stop)
    region = ~stop & ~inf
    check_no_positive_end_component(mdp, reward, name, states=region)
    # from a finite state every choice stays among finite or target states
    r = np.where(region[aug.cstate], aug.reward(mdp, reward), 0.0)
    earning = _exists_choice(aug, r > 0)
    zero = ~exists_until(mdp, region, earning) | ~region
    base = np.zeros(n)
    x, it, res = _value_iteration(aug, r, zero, base, "max", tol, max_iter)
    q = _q(aug, r, x)
    scale = max(1.0, float(np.max(x, initial=0.0)))
    near, _ = _best_choices(aug, q, x, "max", 1e-6 * scale)
    pick = _progress_policy(mdp, aug, near, zero)
    if exact:
        pick, x = _improve(aug, pick, r, ~zero, base, "max")
    x = np.where(zero, 0.0, x)
    x = np.where(inf, np.inf, x)
    return _finish(mdp, aug, x, pick, it, res)


def cumulative_reward_bounded(mdp: Mdp, reward: np.ndarray, bound: int) -> np.ndarray:
    aug = _aug(mdp)
    r = aug.reward(mdp, reward)
    x = np.zeros(aug.n)
    for _ in range(int(bound)):
        x = _reduce_max(aug, r + aug.A @ x)
    return x


# ---------------------------------------------------------------- DTMC steady state

def _square(mdp: Mdp) -> sp.csr_matrix:
    """State-to-state matrix of a model with at most one choice per state."""
    aug = _aug(mdp)
    if aug.m != aug.n:
        raise ValueError("steady-state analysis needs a model with one choice per state")
    return aug.A


def bsccs(mdp: Mdp) -> list[np.ndarray]:
    P = _square(mdp)
    k, comp = connected_components(P, directed=True, connection="strong")
    out = []
    for c in range(k):
        members = np.flatnonzero(comp == c)
        rows = P[members]
        if np.all(np.isin(rows.indices, members)):
            out.append(members)
    return out


def steady_state_distribution(mdp: Mdp) -> np.ndarray:
    """Long-run state distribution from the initial state."""
    P = _square(mdp)
    n = P.shape[0]
    pi = np.zeros(n)
    for members in bsccs(mdp):
        target = np.zeros(n, dtype=bool)
        target[members] = True
        reach = _reach_prob_dtmc(mdp, target)[mdp.initial]
        if reach <= 0:
            continue
        k = len(members)
        Q = P[members][:, members].toarray()
        # pi (Q - I) = 0, sum pi = 1
        A = np.vstack([(Q - np.eye(k)).T, np.ones((1, k))])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        local, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = float(np.max(np.abs(A @ local - b)))
        if resid > 1e-10:
            raise np.linalg.LinAlgError(f"stationary solve residual {resid:.3g}")
        pi[members] = reach * np.clip(local, 0.0, None)
    return pi


def _reach_prob_dtmc(mdp: Mdp, target: np.ndarray) -> np.ndarray:
    return until_prob(mdp, np.ones(mdp.num_states, dtype=bool), target, "max").values
