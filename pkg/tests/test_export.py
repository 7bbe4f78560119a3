import json

from ascsynth.export import export_dot, frontier_csv, node_class, policy_json
from ascsynth.pgcl import mdp_from_lists
from ascsynth.synth import policy_chain, query_policy, synthesize


def two_safe():
    return mdp_from_lists([[("go", [(1, 1.0)])], []], labels={"safe": [0, 1]})


def test_safe_chain_has_green_nodes_and_one_edge():
    dot = export_dot(two_safe())
    assert dot.count("fillcolor=green") == 2
    assert dot.count("->") == 1


def test_mishap_node_is_red():
    m = mdp_from_lists([[("hit", [(1, 1.0)])], [("stay", [(1, 1.0)])]],
                       labels={"mishap": [1], "unsafe": [0], "safe": [1]})
    assert node_class(m, 1) == "mishap"
    assert "1 [fillcolor=red]" in export_dot(m)
    assert "0 [fillcolor=orange, penwidth=2]" in export_dot(m)


def test_edge_colours_by_actor():
    m = mdp_from_lists([[("fix", [(1, 1.0)])], [("hit", [(2, 1.0)])], [("done", [(3, 1.0)])], []],
                       labels={"final": [3]})
    m.action_kinds.update({"fix": "controller", "hit": "hazard", "done": "process"})
    dot = export_dot(m)
    assert '0 -> 1 [label="fix", color=green]' in dot
    assert '1 -> 2 [label="hit", color=red]' in dot
    assert '2 -> 3 [label="done", color=blue]' in dot


def test_final_self_loops_are_omitted():
    m = mdp_from_lists([[("go", [(1, 1.0)])], [("idle", [(1, 1.0)])]], labels={"final": [1]})
    assert export_dot(m).count("->") == 1


def test_probabilities_on_edge_labels():
    m = mdp_from_lists([[("e", [(1, 0.95), (2, 0.05)])], [], []])
    dot = export_dot(m)
    assert 'label="e 0.95"' in dot and 'label="e 0.05"' in dot


def test_frontier_csv_layout():
    text = frontier_csv([(0.0, 1.5, 2.0, "policy_0.json"), (1.0, 1 / 3, 0.0, "policy_1.json")])
    assert text.splitlines() == ["w,valueA,valueB,policyFile", "0,1.5,2,policy_0.json",
                                 "1,0.333333333333,0,policy_1.json"]


def test_policy_json_fields():
    m = two_safe()
    value, pol = synthesize(m, 'Pmax=? [ F "safe" ]')
    data = json.loads(policy_json(m, pol, value, "reach"))
    assert data["objective"] == "reach" and data["value"] == 1.0


def test_bundled_policy_graph_is_stable(cell_mdp):
    pol = query_policy(cell_mdp, "c").policy
    chain = policy_chain(cell_mdp, pol)
    a = export_dot(chain, show_vars=True)
    assert a == export_dot(policy_chain(cell_mdp, pol), show_vars=True)
    nodes = [line for line in a.splitlines() if line.startswith("  ") and "->" not in line and "node [" not in line]
    assert len(nodes) == chain.num_states
