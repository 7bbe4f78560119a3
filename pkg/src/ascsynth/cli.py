"""Command-line front end: validate, build, check, synth and export.

Exit codes: 0 success, 1 model/property errors or failed checks, 2 I/O
failures, 3 state-space cap exceeded, 4 positive-reward end component.
A model path of ``-`` selects the bundled welding cell.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bundled, export
from .dsl import ParseError, RiskModel, parse_risk_model, restrict, validate
from .expr import ExprError
from .pgcl import DEFAULT_CAP, PROB_TOL, Mdp, ModelError, StateSpaceCapExceeded, build_mdp
from .risk import risk_space
from .synth import QUERIES, SynthesisError, accident_freedom_of, policy_chain, scalarised, synthesize, sweep_weights
from .translate import compile_model
from .verify import PositiveRewardEndComponent, PropertyError, check, parse_properties

EXIT_OK, EXIT_ERROR, EXIT_IO, EXIT_CAP, EXIT_EC = 0, 1, 2, 3, 4


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    if path == "-":
        return bundled.model_text()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: str, text: str) -> None:
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _load(args) -> RiskModel:
    try:
        model = parse_risk_model(_read(args.model))
    except (ParseError, ExprError) as exc:
        raise CliFailure(EXIT_ERROR, f"{args.model}: {exc}") from None
    if getattr(args, "factors", None):
        names = [f.strip() for f in args.factors.split(",") if f.strip()]
        unknown = sorted(set(names) - {f.name for f in model.factors})
        if unknown:
            raise CliFailure(EXIT_ERROR, f"unknown factors: {', '.join(unknown)}")
        model = restrict(model, names)
    return model


def _build(args, model: RiskModel | None = None) -> tuple[RiskModel, Mdp]:
    model = model or _load(args)
    try:
        program = compile_model(model)
        mdp = build_mdp(program, cap=args.cap, tol=args.tol)
    except StateSpaceCapExceeded as exc:
        raise CliFailure(EXIT_CAP, str(exc)) from None
    except (ModelError, ExprError) as exc:
        raise CliFailure(EXIT_ERROR, str(exc)) from None
    return model, mdp


def cmd_validate(args) -> int:
    try:
        model = parse_risk_model(_read(args.model), check=False)
    except (ParseError, ExprError) as exc:
        print(f"{args.model}: {exc}")
        return EXIT_ERROR
    diags = validate(model)
    for d in diags:
        print(d)
    errors = sum(d.severity == "error" for d in diags)
    print(f"{len(model.factors)} factors, {errors} errors, {len(diags) - errors} warnings")
    return EXIT_ERROR if errors else EXIT_OK


def cmd_build(args) -> int:
    model, mdp = _build(args)
    if args.emit_pgcl:
        _write(args.emit_pgcl, compile_model(model).render())
    if args.emit_mdp:
        _write(args.emit_mdp, export.chain_json(mdp))
    k = len(risk_space(model.factors, model.constraints))
    print(f"states={mdp.num_states} transitions={mdp.num_transitions} risk_space={k}")
    return EXIT_OK


def cmd_check(args) -> int:
    text = _read(args.props)
    try:
        queries = parse_properties(text)
    except PropertyError as exc:
        print(f"{args.props}: {exc}")
        return EXIT_ERROR
    if not queries:
        print(f"warning: {args.props} contains no properties", file=sys.stderr)
        return EXIT_OK
    _, mdp = _build(args)
    failed = 0
    for q in queries:
        try:
            res = check(mdp, q)
        except PropertyError as exc:
            print(f"ERROR {q.text}  ->  {exc}")
            failed += 1
            continue
        print(res.line())
        failed += res.verdict is False
    print(f"{len(queries)} properties, {failed} failed")
    return EXIT_ERROR if failed else EXIT_OK


def _objectives(args) -> list[str]:
    if args.query:
        return list(QUERIES[args.query])
    if not args.objective:
        raise CliFailure(EXIT_ERROR, "give --query or one or two --objective")
    if len(args.objective) > 2:
        raise CliFailure(EXIT_ERROR, "at most two objectives")
    return args.objective


def _freedom_line(mdp: Mdp, policy) -> str:
    triple, n = accident_freedom_of(policy_chain(mdp, policy))
    if triple is None:
        return "accident_freedom=none unsafe_states=0"
    return f"accident_freedom=[{','.join(export.fmt(v) for v in triple)}] unsafe_states={n}"


def _emit_policy(args, mdp: Mdp, policy, value, objective: str, stem: str) -> str:
    path = os.path.join(args.out_dir, f"{stem}.json")
    _write(path, export.policy_json(mdp, policy, value, objective))
    if args.dot:
        _write(os.path.join(args.out_dir, f"{stem}.dot"), export.export_dot(policy_chain(mdp, policy), stem))
    return path


def cmd_synth(args) -> int:
    objs = _objectives(args)
    _, mdp = _build(args)
    try:
        if len(objs) == 1:
            if args.pareto:
                raise CliFailure(EXIT_ERROR, "--pareto needs two objectives")
            value, policy = synthesize(mdp, objs[0])
            _emit_policy(args, mdp, policy, value, objs[0], "policy")
            print(f"objective={objs[0]} value={export.fmt(value)}")
            print(_freedom_line(mdp, policy))
            return EXIT_OK
        weights = sweep_weights(args.pareto) if args.pareto else [args.weight]
        rows = []
        for i, w in enumerate(weights):
            pt = scalarised(mdp, objs[0], objs[1], w)
            stem = f"policy_{i}" if args.pareto else "policy"
            text = f"{export.fmt(w)}*({objs[0]}) + {export.fmt(1 - w)}*({objs[1]})"
            path = _emit_policy(args, mdp, pt.policy, w * pt.value_a + (1 - w) * pt.value_b, text, stem)
            rows.append((w, pt.value_a, pt.value_b, os.path.basename(path)))
            print(f"w={export.fmt(w)} valueA={export.fmt(pt.value_a)} valueB={export.fmt(pt.value_b)} "
                  + _freedom_line(mdp, pt.policy))
        if args.pareto:
            _write(os.path.join(args.out_dir, "frontier.csv"), export.frontier_csv(rows))
        return EXIT_OK
    except PositiveRewardEndComponent as exc:
        print(f"end component error: {exc}")
        print(f"component states: {' '.join(map(str, exc.states))}")
        print(f"component actions: {' '.join(sorted(set(exc.actions)))}")
        return EXIT_EC
    except (SynthesisError, PropertyError) as exc:
        raise CliFailure(EXIT_ERROR, str(exc)) from None


def cmd_export(args) -> int:
    model, mdp = _build(args)
    if args.format == "pgcl":
        text = compile_model(model).render()
    elif args.format == "mdp-json":
        text = export.chain_json(mdp)
    elif args.format == "mdp-dot":
        text = export.export_dot(mdp, "mdp")
    else:
        objs = _objectives(args)
        try:
            if len(objs) == 1:
                _, policy = synthesize(mdp, objs[0])
            else:
                policy = scalarised(mdp, objs[0], objs[1], args.weight).policy
        except PositiveRewardEndComponent as exc:
            print(f"end component error: {exc}")
            return EXIT_EC
        chain = policy_chain(mdp, policy)
        text = export.export_dot(chain, "policy") if args.format == "policy-dot" else export.chain_json(chain)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_model(p: argparse.ArgumentParser, factors: bool = True) -> None:
    p.add_argument("model", help="risk model file (.riskm); '-' for the bundled welding cell")
    if factors:
        p.add_argument("--factors", help="comma-separated factors to keep (an increment)")


def _add_objectives(p: argparse.ArgumentParser) -> None:
    p.add_argument("--query", choices=sorted(QUERIES), help="named two-objective query")
    p.add_argument("--objective", action="append", help="reward name or property; repeat for two")
    p.add_argument("--weight", type=float, default=0.5, help="weight of the first objective (default 0.5)")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the flags with suppressed defaults so that a value
    # given before the subcommand is not overwritten
    def d(v):
        return argparse.SUPPRESS if suppress else v

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--cap", type=int, default=d(DEFAULT_CAP), help="maximum number of transitions")
    p.add_argument("--tol", type=float, default=d(PROB_TOL), help="tolerance on probability sums")
    p.add_argument("--seed", type=int, default=d(0), help="seed for random test models; unused by the pipeline")
    return p


def parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    ap = argparse.ArgumentParser(prog="ascsynth", description=__doc__.splitlines()[0],
                                 parents=[_global_flags(suppress=False)])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="parse and validate a model")
    _add_model(p, factors=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", parents=[common], help="compile and explore the MDP")
    _add_model(p)
    p.add_argument("--emit-mdp", metavar="FILE", help="write the MDP as JSON")
    p.add_argument("--emit-pgcl", metavar="FILE", help="write the guarded-command program")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", parents=[common], help="check an annotated property file")
    _add_model(p)
    p.add_argument("props", help="property file; '-' for the bundled battery")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", parents=[common], help="synthesise policies")
    _add_model(p)
    _add_objectives(p)
    p.add_argument("--pareto", type=int, metavar="K", help="sweep K evenly spaced weights and write frontier.csv")
    p.add_argument("--out-dir", default=".", help="directory for policy files (default .)")
    p.add_argument("--dot", action="store_true", help="also write the policy graph as DOT")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export", parents=[common], help="export the program, MDP or a policy")
    _add_model(p)
    _add_objectives(p)
    p.add_argument("--format", choices=["pgcl", "mdp-json", "mdp-dot", "policy-dot", "policy-json"],
                   default="policy-dot")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    if getattr(args, "props", None) == "-":
        args.props = bundled.props_path()
    if getattr(args, "pareto", None) is not None and args.pareto < 2:
        print("error: --pareto needs at least 2 points", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
