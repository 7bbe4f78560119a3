"""Weighted Pareto sweep of a named query on a bundled increment.

Usage: python scripts/pareto.py [--query c] [--points 9] [--increment 7]
"""

from __future__ import annotations

import argparse

from ascsynth import bundled
from ascsynth.export import fmt
from ascsynth.synth import QUERIES, accident_freedom_of, nondominated, policy_chain, scalarised, sweep_weights


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--query", choices=sorted(QUERIES), default="c")
    ap.add_argument("--points", type=int, default=9, help="number of evenly spaced weights")
    ap.add_argument("--increment", type=int, default=len(bundled.INCREMENT_ORDER))
    args = ap.parse_args()
    mdp = bundled.build(args.increment)
    a, b = QUERIES[args.query]
    print(f"A = {a}\nB = {b}")
    points = [scalarised(mdp, a, b, w) for w in sweep_weights(args.points)]
    front = {id(p) for p in nondominated(points)}
    print("w | valueA | valueB | frontier | accident_freedom")
    for p in points:
        triple, _ = accident_freedom_of(policy_chain(mdp, p.policy))
        shown = "-" if triple is None else "[" + ", ".join(f"{v:.4f}" for v in triple) + "]"
        print(f"{fmt(p.weight)} | {fmt(p.value_a)} | {fmt(p.value_b)} | {'yes' if id(p) in front else 'no'} | {shown}")


if __name__ == "__main__":
    main()
