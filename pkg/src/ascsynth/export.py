"""Exporters: Graphviz DOT policy graphs, policy JSON and frontier CSV.

Every writer is deterministic: states appear in index order, choices in
choice order and floats carry at most twelve significant digits.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence

from .pgcl import Dtmc, Mdp, Policy

NODE_FILL = {"mishap": "red", "unsafe": "orange", "safe": "green"}
EDGE_COLOR = {"hazard": "red", "process": "black", "controller": "green"}
TERMINATION_COLOR = "blue"


def fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def node_class(m: Mdp, s: int) -> str | None:
    """``mishap``, ``unsafe`` or ``safe`` by labelling; mishap takes precedence."""
    for name in ("mishap", "unsafe", "safe"):
        lab = m.labels.get(name)
        if lab is not None and lab[s]:
            return name
    return None


def edge_color(m: Mdp, action: str, target: int) -> str:
    """Blue into final states, otherwise by the kind of actor behind the action."""
    fin = m.labels.get("final")
    if fin is not None and fin[target]:
        return TERMINATION_COLOR
    return EDGE_COLOR.get(m.action_kinds.get(action, "process"), "black")


def export_dot(chain: Mdp, name: str = "policy", show_vars: bool = False) -> str:
    """DOT digraph of a chain (or any MDP) with safety colouring.

    Nodes are filled green, orange or red for safe, unsafe and mishap
    states.  Edges are coloured by actor: environment and hazard actions red,
    process actions black, controller actions green, edges into a final
    state blue.  Self-loops of final states are omitted.
    """
    out = [f"digraph {_quote(name)} {{", "  node [shape=circle, style=filled, fillcolor=white];"]
    fin = chain.labels.get("final")
    for s in range(chain.num_states):
        attrs = []
        cls = node_class(chain, s)
        if cls is not None:
            attrs.append(f"fillcolor={NODE_FILL[cls]}")
        if s == chain.initial:
            attrs.append("penwidth=2")
        if show_vars:
            text = ", ".join(f"{k}={v}" for k, v in chain.valuation(s).items())
            attrs.append(f"tooltip={_quote(text)}")
        out.append(f"  {s}" + (f" [{', '.join(attrs)}]" if attrs else "") + ";")
    cs = chain.choice_state
    for c in range(chain.num_choices):
        s = int(cs[c])
        action = chain.choice_label[c]
        for t, p in chain.distribution(c):
            if t == s and fin is not None and fin[s]:
                continue
            label = action if p == 1.0 else f"{action} {fmt(p)}"
            out.append(f"  {s} -> {t} [label={_quote(label)}, color={edge_color(chain, action, t)}];")
    out.append("}")
    return "\n".join(out) + "\n"


def policy_json(mdp: Mdp, policy: Policy, value: float | None, objective: str) -> str:
    v = None if value is None else float(fmt(value))
    return policy.to_json(mdp, v, objective) + "\n"


def chain_json(chain: Dtmc | Mdp) -> str:
    return chain.to_json() + "\n"


def frontier_csv(rows: Sequence[tuple[float, float, float, str]]) -> str:
    """``w,valueA,valueB,policyFile`` with a header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["w", "valueA", "valueB", "policyFile"])
    for weight, a, b, path in rows:
        w.writerow([fmt(weight), fmt(a), fmt(b), path])
    return buf.getvalue()

