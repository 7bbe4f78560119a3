"""Well-formedness battery, deadlock analysis and accident freedom."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pgcl import Mdp
from . import engine
from .props import Result, check, parse_property


def check_deadlocks(mdp: Mdp) -> list[int]:
    """States without any enabled action."""
    return mdp.deadlocks().tolist()


def classify_deadlocks(mdp: Mdp, final: str = "final") -> dict[str, list[int]]:
    fin = mdp.label(final)
    dl = check_deadlocks(mdp)
    return {"final": [s for s in dl if fin[s]], "nonfinal": [s for s in dl if not fin[s]]}


@dataclass
class WellformedReport:
    results: list[Result] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]


def wellformedness_properties(factors: list[str]) -> list[str]:
    """The battery as annotated property text (v: must hold, f: must fail)."""
    props = []
    for f in factors:
        props.append(f'v: E [ F ("active{f}" & !"final") ]')
    props.append('f: E [ F ("deadlock" & !"final") ]')
    for f in factors:
        props.append(f'f: A [ F "active{f}" ]')
    props.append('f: E [ F ("final" & "init") ]')
    props.append('v: E [ F "final" ]')
    return props


def check_wellformed(mdp: Mdp, factors: list[str] | None = None) -> WellformedReport:
    """Run the battery; ``factors`` defaults to every ``active<F>`` label."""
    if factors is None:
        factors = [k[len("active"):] for k in mdp.labels if k.startswith("active")]
    return WellformedReport([check(mdp, parse_property(p)) for p in wellformedness_properties(factors)])


def accident_freedom(model: Mdp, xi: np.ndarray | None = None, safe: str = "safe",
                     mishap: str = "mishap") -> tuple[float, float, float]:
    """``(min, mean, max)`` over ``xi`` of P_min[!mishap W safe].

    ``xi`` defaults to the states labelled ``unsafe``.  On a chain the
    minimum is the unique probability.
    """
    xi = model.label("unsafe") if xi is None else np.asarray(xi, dtype=bool)
    if not xi.any():
        raise ValueError("accident freedom needs a nonempty set of unsafe states")
    vals = engine.weak_until_prob(model, ~model.label(mishap), model.label(safe), "min").values[xi]
    return float(vals.min()), float(vals.mean()), float(vals.max())
