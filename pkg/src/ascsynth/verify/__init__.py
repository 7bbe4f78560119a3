"""Qualitative and quantitative property checking on explicit models."""

from .engine import (
    NonConvergence,
    PositiveRewardEndComponent,
    Solution,
    bounded_until_prob,
    bounded_weak_until_prob,
    maximal_end_components,
    steady_state_distribution,
    total_reward,
    until_prob,
    weak_until_prob,
)
from .props import PropertyError, Query, Result, check, check_all, parse_properties, parse_property, sat
from .wellformed import accident_freedom, check_deadlocks, check_wellformed, classify_deadlocks


def prob_until(mdp, phi, psi, opt="max", mode="until", bound=None):
    """Per-state optimal probability of ``phi U psi`` or ``phi W psi``."""
    if mode == "until":
        return until_prob(mdp, phi, psi, opt).values if bound is None else bounded_until_prob(mdp, phi, psi, bound, opt)
    if mode == "weak_until":
        if bound is None:
            return weak_until_prob(mdp, phi, psi, opt).values
        return bounded_weak_until_prob(mdp, phi, psi, bound, opt)
    raise ValueError(f"mode must be 'until' or 'weak_until', got {mode!r}")


def expected_total_reward(mdp, reward, target=None):
    """Maximal expected total reward and maximising choices (see ``total_reward``)."""
    name = reward if isinstance(reward, str) else ""
    r = mdp.rewards[reward] if isinstance(reward, str) else reward
    return total_reward(mdp, r, name, target)


def check_qualitative(mdp, formula):
    """Truth at the initial state plus a witness or counterexample path when available."""
    res = check(mdp, formula)
    return bool(res.value), res.witness


__all__ = [
    "NonConvergence", "PositiveRewardEndComponent", "PropertyError", "Query", "Result", "Solution",
    "accident_freedom", "bounded_until_prob", "check", "check_all", "check_deadlocks",
    "check_qualitative", "check_wellformed", "classify_deadlocks", "expected_total_reward",
    "maximal_end_components", "parse_properties", "parse_property", "prob_until", "sat",
    "steady_state_distribution", "total_reward", "until_prob", "weak_until_prob",
]
