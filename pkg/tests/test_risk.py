import itertools
import time

import pytest
from hypothesis import given, settings, strategies as st

from ascsynth.dsl import Constraint, FactorDecl
from ascsynth.risk import (
    CORE_PHASES, SAFE_PHASES, Phase, constraint_satisfied, factor_lts, risk_space,
)

RC_RULE = Constraint("RC", lower=2, upper=2, over=("HRW", "HS", "HC"))


def test_hc_lts_has_six_phases_and_resumption(cell_model):
    lts = factor_lts(cell_model.factor("HC"))
    assert lts.phases == frozenset(Phase)
    assert len(lts.transitions) >= 6
    assert any(t.source == Phase.MITIGATED and t.target == Phase.INACTIVE and t.label == "HCres"
               for t in lts.transitions)
    # re-activation of a mitigated factor
    assert lts.allows(Phase.MITIGATED, Phase.ACTIVE)
    assert lts.successors(Phase.MISHAP) == {Phase.MISHAP}


def test_factor_without_mishap_has_five_phases():
    lts = factor_lts(FactorDecl("X", mitigations=(("m",),), resumptions=("r",)))
    assert len(lts.phases) == 5 and Phase.MISHAP not in lts.phases


def test_two_mitigations_give_two_edges():
    lts = factor_lts(FactorDecl("X", mitigations=(("m1",), ("m2",)), resumptions=("r",)))
    edges = [t for t in lts.transitions if t.source == Phase.ACTIVE and t.target == Phase.MITIGATED]
    assert sorted(t.label for t in edges) == ["m1", "m2"]


def test_sequential_chain_passes_through_partial():
    lts = factor_lts(FactorDecl("X", mitigations=(("a", "b"),)))
    assert lts.allows(Phase.ACTIVE, Phase.MITIGATED_PARTIAL)
    assert lts.allows(Phase.MITIGATED_PARTIAL, Phase.MITIGATED)
    assert not lts.allows(Phase.ACTIVE, Phase.MITIGATED)


def test_single_factor_risk_space_has_three_states():
    assert len(risk_space(["HC"])) == 3


def test_two_factor_risk_space():
    assert len(risk_space(["A", "B"])) == 9


def test_constrained_risk_space_matches_enumeration():
    names = ["RC", "HRW", "HS", "HC"]
    brute = 0
    for combo in itertools.product(CORE_PHASES, repeat=4):
        occurred = [p != Phase.INACTIVE for p in combo]
        if not occurred[0] or sum(occurred[1:]) == 2:
            brute += 1
    assert brute == 27 + 2 * 12  # RC inactive, or RC occurred with exactly two of three
    assert len(risk_space(names, [RC_RULE])) == brute


@pytest.mark.parametrize("state, expected", [
    ({"RC": Phase.INACTIVE, "HRW": Phase.ACTIVE, "HS": Phase.ACTIVE, "HC": Phase.ACTIVE}, True),
    ({"RC": Phase.ACTIVE, "HRW": Phase.ACTIVE, "HS": Phase.ACTIVE, "HC": Phase.INACTIVE}, True),
    ({"RC": Phase.ACTIVE, "HRW": Phase.INACTIVE, "HS": Phase.ACTIVE, "HC": Phase.INACTIVE}, False),
    ({"RC": Phase.MITIGATED, "HRW": Phase.MITIGATED, "HS": Phase.MISHAP, "HC": Phase.INACTIVE}, True),
])
def test_constraint_examples(state, expected):
    assert constraint_satisfied(state, RC_RULE) is expected


def test_bundled_risk_space(cell_model):
    t = time.perf_counter()
    n = len(risk_space(cell_model.factors, cell_model.constraints))
    assert time.perf_counter() - t < 1.0
    assert 0 < n < 3 ** 7


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 7))
def test_unconstrained_space_is_power_of_three(n):
    assert len(risk_space([f"F{i}" for i in range(n)])) == 3 ** n


@st.composite
def constraints(draw, names):
    subject = draw(st.sampled_from(names))
    over = draw(st.lists(st.sampled_from([n for n in names if n != subject]), min_size=1, unique=True))
    lo = draw(st.integers(0, len(over)))
    hi = draw(st.integers(lo, len(over)))
    return Constraint(subject, lower=lo, upper=hi, over=tuple(over))


NAMES = ["A", "B", "C", "D"]


@settings(max_examples=200, deadline=None)
@given(st.lists(constraints(NAMES), max_size=3), constraints(NAMES))
def test_adding_a_constraint_never_grows_the_space(cs, extra):
    assert len(risk_space(NAMES, cs + [extra])) <= len(risk_space(NAMES, cs))


@settings(max_examples=200, deadline=None)
@given(st.lists(constraints(NAMES), max_size=3))
def test_risk_space_equals_filtered_product(cs):
    expected = [dict(zip(NAMES, combo)) for combo in itertools.product(CORE_PHASES, repeat=len(NAMES))
                if all(constraint_satisfied(dict(zip(NAMES, combo)), c) for c in cs)]
    assert risk_space(NAMES, cs) == expected


@st.composite
def factors(draw):
    chains = draw(st.lists(st.lists(st.sampled_from(["m1", "m2", "m3"]), min_size=1, max_size=3).map(tuple),
                           max_size=3))
    res = tuple(draw(st.lists(st.sampled_from(["r1", "r2"]), max_size=2, unique=True)))
    mishap = draw(st.one_of(st.none(), st.just("act")))
    return FactorDecl("X", mitigations=tuple(chains), resumptions=res, mishap_action=mishap,
                      mishap_prob=0.2 if mishap else 0.0)


@settings(max_examples=300, deadline=None)
@given(factors())
def test_safe_region_closed_under_mitigation_and_resumption(f):
    for t in factor_lts(f).transitions:
        if t.kind in ("mitigation", "resumption") and t.source in SAFE_PHASES:
            assert t.target in SAFE_PHASES
        if t.kind in ("mitigation", "resumption"):
            assert t.target in SAFE_PHASES


@settings(max_examples=300, deadline=None)
@given(factors())
def test_undetected_phase_only_entered_by_endangerment(f):
    into = [t for t in factor_lts(f).transitions if t.target == Phase.ACTIVE_UNDETECTED]
    assert into and all(t.kind == "endangerment" and t.source == Phase.INACTIVE for t in into)
