import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ascsynth.expr import parse_expr as E
from ascsynth.pgcl import (
    Command, GuardedProgram, ModelError, Module, Policy, StateSpaceCapExceeded, Update, VarDecl, build_mdp,
    enabled, eval_expr, induce_dtmc, mdp_from_lists, policy_from_choices,
)


def upd(p, **assigns):
    return Update(p, tuple((k, E(v)) for k, v in assigns.items()))


def prog(*modules, **kw):
    return GuardedProgram(tuple(modules), **kw)


def one_var(*commands, hi=1):
    return prog(Module("m", (VarDecl("x", "int", 0, hi, 0),), tuple(commands)))


@pytest.mark.parametrize("env, text, expected", [
    ({"x": 3}, "x <= 3", True),
    ({"a": True, "b": False}, "a & !b", True),
    ({"m": 2}, "m = 1 | m = 2", True),
])
def test_eval_expr(env, text, expected):
    assert eval_expr(env, E(text)) is expected


def test_single_dirac_command():
    p = one_var(Command("set", E("x = 0"), (upd(1.0, x="1"),)))
    [(label, dist)] = enabled({"x": 0}, p)
    assert label == "set" and dist == [((1,), 1.0)]


def test_two_point_distribution():
    p = one_var(Command("sense", E("x = 0"), (upd(0.95, x="1"), upd(0.05, x="0"))))
    [(_, dist)] = enabled({"x": 0}, p)
    assert sorted(pr for _, pr in dist) == [0.05, 0.95]
    assert sum(pr for _, pr in dist) == pytest.approx(1.0, abs=1e-12)


def test_shared_label_needs_every_participant():
    robot = Module("robotArm", (VarDecl("r", "bool", init=True),), (Command("stop", E("r"), (upd(1.0, r="false"),)),))
    welder = Module("welder", (VarDecl("w", "bool", init=False),), (Command("stop", E("w"), (upd(1.0, w="false"),)),))
    p = prog(robot, welder)
    assert [lab for lab, _ in enabled({"r": True, "w": False}, p)] == []
    assert [lab for lab, _ in enabled({"r": True, "w": True}, p)] == ["stop"]


def test_joint_product_of_participants():
    a = Module("a", (VarDecl("u", "int", 0, 2, 0),), (Command("go", E("u = 0"), (upd(0.5, u="1"), upd(0.5, u="2"))),))
    b = Module("b", (VarDecl("v", "bool", init=False),), (Command("go", E("!v"), (upd(1.0, v="true"),)),))
    [(label, dist)] = enabled({"u": 0, "v": False}, prog(a, b))
    assert sorted(dist) == [((1, True), 0.5), ((2, True), 0.5)]


def test_two_probabilistic_participants_rejected():
    a = Module("a", (VarDecl("u", "bool", init=False),), (Command("go", E("!u"), (upd(0.5, u="true"), upd(0.5))),))
    b = Module("b", (VarDecl("v", "bool", init=False),), (Command("go", E("!v"), (upd(0.5, v="true"), upd(0.5))),))
    with pytest.raises(ModelError):
        enabled({"u": False, "v": False}, prog(a, b))


def test_bound_violation_names_command_and_variable():
    p = one_var(Command("inc", E("true"), (upd(1.0, x="x + 1"),)))
    with pytest.raises(ModelError, match=r"inc.*x|x.*inc"):
        build_mdp(p)


def test_build_two_states_one_transition():
    m = build_mdp(one_var(Command("set", E("x = 0"), (upd(1.0, x="1"),))))
    assert (m.num_states, m.num_transitions) == (2, 1)


def test_build_dead_initial_state():
    m = build_mdp(one_var(Command("never", E("false"), (upd(1.0, x="1"),))))
    assert (m.num_states, m.num_transitions) == (1, 0)
    assert m.label("deadlock")[0]


def test_cap_exceeded_reports_partial_statistics():
    p = one_var(Command("inc", E("x < 50"), (upd(1.0, x="x + 1"),)), hi=50)
    with pytest.raises(StateSpaceCapExceeded) as info:
        build_mdp(p, cap=10)
    assert info.value.transitions > 10 and info.value.states > 0


def test_probability_tolerance_is_configurable():
    p = one_var(Command("c", E("x = 0"), (upd(0.5, x="1"), upd(0.5 + 1e-7))))
    with pytest.raises(ModelError):
        build_mdp(p)
    assert build_mdp(p, tol=1e-6).num_states == 2


def test_bundled_build_is_deterministic(cell_mdp):
    from ascsynth import bundled
    again = bundled.build()
    assert again.states == cell_mdp.states
    assert np.array_equal(again.trans_target, cell_mdp.trans_target)
    assert np.array_equal(again.trans_prob, cell_mdp.trans_prob)
    assert again.choice_label == cell_mdp.choice_label


def test_bundled_size(cell_mdp):
    assert 10 ** 3 <= cell_mdp.num_states and cell_mdp.num_transitions <= 10 ** 5


def test_identity_policy_keeps_transitions():
    m = mdp_from_lists([[("a", [(1, 1.0)])], [("b", [(0, 0.5), (1, 0.5)])]])
    d = induce_dtmc(m, Policy((0, 0)))
    assert d.num_states == 2 and list(d.trans_target) == list(m.trans_target)
    assert list(d.trans_prob) == list(m.trans_prob)


def test_policy_picks_second_action():
    m = mdp_from_lists([[("stay", [(0, 1.0)]), ("go", [(1, 1.0)])], []])
    d = induce_dtmc(m, Policy((1, -1)))
    assert d.choice_label == ["go"] and d.distribution(0) == [(1, 1.0)]
    assert list(d.mdp_index) == [0, 1]


def test_disabled_action_is_a_contract_violation():
    m = mdp_from_lists([[("a", [(0, 1.0)])]])
    with pytest.raises(ModelError):
        induce_dtmc(m, Policy((3,)))


def test_unreachable_states_pruned():
    m = mdp_from_lists([[("a", [(0, 1.0)])], [("b", [(0, 1.0)])]])
    assert induce_dtmc(m, Policy((0, 0))).num_states == 1


def test_json_layout():
    m = mdp_from_lists([[("a", [(1, 1 / 3), (0, 2 / 3)])], []], labels={"goal": [1]})
    doc = json.loads(m.to_json())
    assert list(doc) == ["states", "choices", "initial"]
    assert doc["states"][1] == {"id": 1, "vars": {"s": 1}, "labels": ["goal", "deadlock"]}
    assert doc["choices"][0]["dist"][0] == {"to": 1, "p": 0.333333333333}


def test_program_render_lists_commands():
    p = one_var(Command("sense", E("x = 0"), (upd(0.95, x="1"), upd(0.05))))
    assert "[sense] x = 0 -> 0.95:(x'=1) + 0.05:true;" in p.render()


# generated corpora

SEEDS = st.integers(0, 2 ** 32 - 1)


def _policy(m, rng):
    counts = np.diff(m.choice_start)
    return Policy(tuple(int(rng.integers(c)) if c else -1 for c in counts))


@settings(max_examples=1000, deadline=None)
@given(SEEDS)
def test_generated_distributions_are_normalised(seed):
    rng = np.random.default_rng(seed)
    m = oracles.random_mdp(rng)
    d = induce_dtmc(m, _policy(m, rng))
    for model in (m, d):
        sums = [sum(p for _, p in model.distribution(c)) for c in range(model.num_choices)]
        assert np.allclose(sums, 1.0, atol=1e-9)


@settings(max_examples=1000, deadline=None)
@given(SEEDS)
def test_policies_are_deterministic(seed):
    rng = np.random.default_rng(seed)
    m = oracles.random_mdp(rng)
    pol = _policy(m, rng)
    for s in range(m.num_states):
        has = m.choice_start[s + 1] > m.choice_start[s]
        assert (pol.choice(m, s) is not None) == bool(has)
        if has:
            assert pol.choice(m, s) in m.choices(s)
    d = induce_dtmc(m, pol)
    assert all(len(d.choices(s)) <= 1 for s in range(d.num_states))


@settings(max_examples=1000, deadline=None)
@given(SEEDS)
def test_chain_edges_are_mdp_edges_under_chosen_action(seed):
    rng = np.random.default_rng(seed)
    m = oracles.random_mdp(rng)
    pol = _policy(m, rng)
    d = induce_dtmc(m, pol)
    for s in range(d.num_states):
        src = int(d.mdp_index[s])
        for c in d.choices(s):
            chosen = pol.choice(m, src)
            assert d.choice_label[c] == m.choice_label[chosen]
            mdp_edges = {(t, p) for t, p in m.distribution(chosen)}
            for t, p in d.distribution(c):
                assert (int(d.mdp_index[t]), p) in mdp_edges


@settings(max_examples=50, deadline=None)
@given(SEEDS)
def test_policy_round_trip_through_global_choices(seed):
    rng = np.random.default_rng(seed)
    m = oracles.random_mdp(rng)
    pol = _policy(m, rng)
    g = [pol.choice(m, s) if pol.choice(m, s) is not None else -1 for s in range(m.num_states)]
    assert policy_from_choices(m, g) == pol
