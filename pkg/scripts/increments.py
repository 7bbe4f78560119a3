"""Table of the bundled increments: model size and accident freedom under each query.

Usage: python scripts/increments.py [--weight W]
"""

from __future__ import annotations

import argparse
import time

from ascsynth import bundled
from ascsynth.export import fmt
from ascsynth.pgcl import build_mdp
from ascsynth.risk import risk_space
from ascsynth.synth import QUERIES, accident_freedom_of, policy_chain, query_policy
from ascsynth.translate import compile_model


def triple(t) -> str:
    return "-" if t is None else "[" + ", ".join(f"{v:.4f}" for v in t) + "]"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weight", type=float, default=0.5, help="weight of the first objective")
    args = ap.parse_args()
    model = bundled.load()
    head = ["k", "factors", "states", "transitions", "risk", "build_s"] + [f"query_{q}" for q in sorted(QUERIES)]
    print(" | ".join(head))
    for k in range(1, len(bundled.INCREMENT_ORDER) + 1):
        inc = bundled.increment(k, model)
        t0 = time.perf_counter()
        mdp = build_mdp(compile_model(inc))
        dt = time.perf_counter() - t0
        row = [str(k), ",".join(bundled.INCREMENT_ORDER[:k]), str(mdp.num_states), str(mdp.num_transitions),
               str(len(risk_space(inc.factors, inc.constraints))), f"{dt:.2f}"]
        for q in sorted(QUERIES):
            pt = query_policy(mdp, q, args.weight)
            row.append(triple(accident_freedom_of(policy_chain(mdp, pt.policy))[0]) +
                       f" ({fmt(pt.value_a)}, {fmt(pt.value_b)})")
        print(" | ".join(row))


if __name__ == "__main__":
    main()
