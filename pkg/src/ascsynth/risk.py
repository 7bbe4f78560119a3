"""Risk-factor phases, the per-factor phase graph and the risk space."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping

from .dsl import Constraint, FactorDecl


class Phase(IntEnum):
    INACTIVE = 0
    ACTIVE = 1
    ACTIVE_UNDETECTED = 2
    MITIGATED = 3
    MITIGATED_PARTIAL = 4
    MISHAP = 5


CORE_PHASES = (Phase.INACTIVE, Phase.ACTIVE, Phase.MITIGATED)
SAFE_PHASES = frozenset({Phase.INACTIVE, Phase.MITIGATED, Phase.MITIGATED_PARTIAL})
ACTIVE_PHASES = frozenset({Phase.ACTIVE, Phase.ACTIVE_UNDETECTED})


@dataclass(frozen=True)
class Transition:
    source: Phase
    label: str
    target: Phase
    kind: str  # endangerment | mitigation | resumption | mishap | alleviation


@dataclass(frozen=True)
class PhaseLts:
    factor: str
    phases: frozenset[Phase]
    initial: Phase
    transitions: tuple[Transition, ...]

    def successors(self, phase: Phase) -> set[Phase]:
        return {t.target for t in self.transitions if t.source == phase}

    def allows(self, source: Phase, target: Phase) -> bool:
        return source == target or target in self.successors(source)


def factor_lts(factor: FactorDecl) -> PhaseLts:
    """Phase graph of one factor.

    Sequential mitigation chains pass through ``MITIGATED_PARTIAL`` after
    every step but the last.  ``MITIGATED_PARTIAL`` is always part of the
    phase set (unreachable without a chain); ``MISHAP`` only when the factor
    declares a mishap action with positive probability.
    """
    F = factor.name
    ts = [
        Transition(Phase.INACTIVE, f"e_{F}", Phase.ACTIVE, "endangerment"),
        Transition(Phase.INACTIVE, f"e_{F}'", Phase.ACTIVE_UNDETECTED, "endangerment"),
        Transition(Phase.MITIGATED, f"e_{F}", Phase.ACTIVE, "endangerment"),
    ]
    phases = set(Phase) - {Phase.MISHAP}
    for chain in factor.mitigations:
        src = Phase.ACTIVE
        for k, action in enumerate(chain):
            last = k == len(chain) - 1
            dst = Phase.MITIGATED if last else Phase.MITIGATED_PARTIAL
            ts.append(Transition(src, action, dst, "mitigation"))
            src = dst
    for action in factor.resumptions:
        ts.append(Transition(Phase.MITIGATED, action, Phase.INACTIVE, "resumption"))
    if factor.mishap_action is not None and factor.mishap_prob > 0:
        phases.add(Phase.MISHAP)
        for src in (Phase.ACTIVE, Phase.ACTIVE_UNDETECTED):
            ts.append(Transition(src, factor.mishap_action, Phase.MISHAP, "mishap"))
        ts.append(Transition(Phase.MISHAP, f"al_{F}", Phase.MISHAP, "alleviation"))
    # keep declaration order but drop exact repeats (shared chain prefixes)
    unique = tuple(dict.fromkeys(ts))
    return PhaseLts(F, frozenset(phases), Phase.INACTIVE, unique)


def occurred(phase: Phase) -> bool:
    return phase != Phase.INACTIVE


def constraint_satisfied(state: Mapping[str, Phase], c: Constraint) -> bool:
    """True iff the subject has not occurred or the occurred count lies in [n, m]."""
    if not occurred(state[c.subject]):
        return True
    count = sum(occurred(state[f]) for f in c.over)
    return c.lower <= count <= c.upper


def risk_space(
    factors: Iterable[FactorDecl | str], constraints: Iterable[Constraint] = ()
) -> list[dict[str, Phase]]:
    """All core-phase assignments satisfying every constraint.

    Constraints naming factors outside ``factors`` are ignored.
    """
    names = [f if isinstance(f, str) else f.name for f in factors]
    known = set(names)
    active = [c for c in constraints if c.subject in known and set(c.over) <= known]
    out = []
    for combo in itertools.product(CORE_PHASES, repeat=len(names)):
        state = dict(zip(names, combo))
        if all(constraint_satisfied(state, c) for c in active):
            out.append(state)
    return out
