import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ascsynth.dsl import ParseError, parse_risk_model, pretty_print, restrict, validate
from modelgen import MODES, TINY, model_sources, skew_matrix

SLOW = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def errors_of(src: str):
    return [d for d in validate(parse_risk_model(src, check=False)) if d.severity == "error"]


def test_minimal_model():
    m = parse_risk_model(TINY)
    assert len(m.factors) == 1 and len(m.activities) == 1
    assert validate(m) == []


def test_bundled_model_counts(cell_model):
    # seven factors, fifteen mitigation and resumption actions, fifteen constraints
    assert [f.name for f in cell_model.factors] == ["HC", "HS", "WS", "HRW", "HW", "RT", "RC"]
    assert cell_model.handler_count == 15
    assert len(cell_model.constraints) == 15


def test_bundled_model_has_no_errors(cell_model):
    assert not [d for d in validate(cell_model) if d.severity == "error"]


def test_unresolved_mitigation_is_rejected():
    src = TINY.replace('detectedBy false; }', 'detectedBy false; mitigatedBy HCmitX; }')
    with pytest.raises(ParseError, match="unresolved reference"):
        parse_risk_model(src)


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as info:
        parse_risk_model("model m;\nvar x : [0..1 init 0;\n")
    assert info.value.line == 2


def test_gradient_not_skew_symmetric():
    src = TINY.replace("modes normal;", "modes normal slow;") + \
        "Gradients mode { normal: 0 2; slow: -1 0; }\n"
    assert any(d.rule == "matrix not skew-symmetric" for d in errors_of(src))


def test_nonzero_diagonal():
    src = TINY.replace("modes normal;", "modes normal slow;") + \
        "Gradients mode { normal: 1 2; slow: -2 0; }\n"
    assert any(d.rule == "nonzero diagonal" for d in errors_of(src))


def test_exactly_two_of_three_constraint_is_accepted(cell_model):
    rc = [c for c in cell_model.constraints if c.subject == "RC" and c.over == ("HRW", "HS", "HC")]
    assert rc and (rc[0].lower, rc[0].upper) == (2, 2)
    assert not [d for d in validate(cell_model) if d.rule == "invalid constraint"]


def test_mishap_probability_out_of_range():
    src = TINY.replace("detectedBy false; }", "detectedBy false; mishap step prob 1.3 sev 1; }")
    assert any(d.rule == "probability out of range" for d in errors_of(src))


def test_distribution_must_sum_to_one():
    src = TINY.replace("update (x'=1);", "update 0.5: (x'=1) + 0.4: (x'=0);")
    assert any(d.rule == "distribution does not sum to 1" for d in errors_of(src))


def test_constraint_subject_in_own_set():
    src = TINY + "constraint F requiresNOf (1|F|1);\n"
    assert any(d.rule == "invalid constraint" for d in errors_of(src))


def test_constraint_bounds_exceed_set():
    src = TINY.replace("Factor F ", 'Factor G { desc "g"; guard false; detectedBy false; }\nFactor F ') + \
        "constraint F requiresNOf (1|G|2);\n"
    assert any(d.rule == "invalid constraint" for d in errors_of(src))


def test_duplicate_declaration():
    src = TINY + "Command step @ worker { guard x = 1; update (x'=0); }\n"
    assert any(d.rule == "duplicate declaration" for d in errors_of(src))


def test_resumption_must_be_resume_kind():
    src = TINY.replace("detectedBy false; }", "detectedBy false; mitigatedBy M; resumedBy M; }") + \
        "Action M : MODE_SWITCH { cost effort=1; }\n"
    assert any(d.rule == "kind mismatch" for d in errors_of(src))


def test_probabilistic_mishap_action_is_rejected():
    src = TINY.replace("update (x'=1);", "update 0.5: (x'=1) + 0.5: (x'=0);").replace(
        "detectedBy false; }", "detectedBy false; mishap step prob 0.2 sev 1; }")
    assert any(d.rule == "probabilistic mishap action" for d in errors_of(src))


def test_bundled_round_trip(cell_model):
    assert parse_risk_model(pretty_print(cell_model)) == cell_model


def test_restrict_keeps_named_factors_and_their_constraints(cell_model):
    sub = restrict(cell_model, ["HC", "HS"])
    assert [f.name for f in sub.factors] == ["HC", "HS"]
    assert all({c.subject, *c.over} <= {"HC", "HS"} for c in sub.constraints)
    assert not [d for d in validate(sub) if d.severity == "error"]


@SLOW
@given(model_sources())
def test_generated_round_trip(src):
    m = parse_risk_model(src)
    assert parse_risk_model(pretty_print(m)) == m


@SLOW
@given(model_sources())
def test_accepted_models_satisfy_type_invariants(src):
    m = parse_risk_model(src)
    names = [v.name for v in m.variables] + [f.name for f in m.factors] + [a.name for a in m.actions]
    assert len(names) == len(set(names))
    actions = {a.name for a in m.actions}
    for f in m.factors:
        assert 0 <= f.detection_fault_prob <= 1 and 0 <= f.mishap_prob <= 1 and f.severity >= 0
        assert set(f.mitigation_actions) | set(f.resumptions) <= actions
    for c in m.constraints:
        assert 0 <= c.lower <= c.upper <= len(c.over) and c.subject not in c.over
    for g in m.gradients.values():
        n = len(g.labels)
        assert all(g.entries[i][j] == -g.entries[j][i] for i in range(n) for j in range(n))
    for a in m.actions:
        assert all(v >= 0 for _, v in a.costs)


@SLOW
@given(model_sources(), st.randoms(use_true_random=False))
def test_validation_is_order_independent(src, rnd: random.Random):
    blocks = src.strip().split("\n")
    head, body = blocks[:5], blocks[5:]
    rnd.shuffle(body)
    shuffled = "\n".join(head + body) + "\n"
    d1 = {(d.severity, d.rule, d.message) for d in validate(parse_risk_model(src, check=False))}
    d2 = {(d.severity, d.rule, d.message) for d in validate(parse_risk_model(shuffled, check=False))}
    assert d1 == d2


@settings(max_examples=1000, deadline=None)
@given(skew_matrix(len(MODES), nonzero=False), st.integers(0, 2), st.integers(0, 2), st.integers(-3, 3))
def test_gradient_validation_accepts_exactly_skew_matrices(m, i, j, delta):
    m = [row[:] for row in m]
    m[i][j] += delta
    rows = " ".join(f"{lab}: {' '.join(map(str, row))};" for lab, row in zip(MODES, m))
    src = TINY.replace("modes normal;", f"modes {' '.join(MODES)};") + f"Gradients mode {{ {rows} }}\n"
    skew = all(m[a][b] == -m[b][a] for a in range(3) for b in range(3))
    errs = {d.rule for d in errors_of(src)}
    assert skew == (not errs & {"matrix not skew-symmetric", "nonzero diagonal"})
