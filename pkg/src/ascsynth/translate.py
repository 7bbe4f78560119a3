"""Compile a risk model into a probabilistic guarded-command program.

Layout of the generated program:

* one module per actor holding its variables and nominal commands; every
  nominal guard is ``live & mode-filter & activity-filter & guard &
  !pending`` where *live* excludes final and accident states and *pending*
  holds while some endangerment is due, so hazards activate before the
  process moves on;
* a ``cell`` module with the current activity ``act``, safety mode ``mode``
  and the activity successor steps;
* an ``asc`` controller module with one phase variable ``ph_F`` per factor
  and the endangerment, mishap, alleviation, mitigation and resumption
  commands.

Mitigations and resumptions are staged: separate commands switch the safety
mode, switch the activity and apply the safety function (each only where the
gradient-resolved target differs from the current value), and a closing
command, labelled with the action name, moves the phase once all three
post-conditions hold.  After an accident only the alleviation self-loop
remains enabled.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .dsl import ActionDecl, FactorDecl, GradientMatrix, RiskModel, validate
from .expr import TRUE, Binary, Expr, Lit, Var, conj, disj, eq, neg, one_of, substitute
from .pgcl import Command, GuardedProgram, Module, ModelError, RewardStructure, Update, VarDecl
from .risk import Phase

CONTROLLER = "asc"
CELL = "cell"

PH_ACTIVE = (int(Phase.ACTIVE), int(Phase.ACTIVE_UNDETECTED))
PH_MITIGATED = (int(Phase.MITIGATED), int(Phase.MITIGATED_PARTIAL))
# a critical event the controller knows about and has not finished handling
PH_SENSED = (int(Phase.ACTIVE), int(Phase.MITIGATED_PARTIAL))


def ph(factor: str) -> str:
    return f"ph_{factor}"


def any_mishap(model: RiskModel) -> Expr:
    return disj(*(eq(ph(f.name), int(Phase.MISHAP)) for f in model.factors))


def live(model: RiskModel) -> Expr:
    """Neither finished nor halted by an accident."""
    return conj(neg(model.final), neg(any_mishap(model)))


@dataclass(frozen=True)
class MonitorPredicates:
    actual: Expr  # the real hazard condition
    sensed: Expr  # what the monitor observes, strengthened by constraints


def constraint_term(model: RiskModel, factor: str) -> Expr:
    """Constraints on ``factor`` as a predicate over the other phases."""
    terms = []
    for c in model.constraints:
        if c.subject != factor:
            continue
        options = []
        for k in range(c.lower, c.upper + 1):
            for occurred in itertools.combinations(c.over, k):
                options.append(
                    conj(*(
                        neg(eq(ph(g), int(Phase.INACTIVE))) if g in occurred else eq(ph(g), int(Phase.INACTIVE))
                        for g in c.over
                    ))
                )
        terms.append(disj(*options))
    return conj(*terms)


def monitor_predicates(model: RiskModel, factor: FactorDecl) -> MonitorPredicates:
    return MonitorPredicates(factor.guard, conj(factor.detected_by, constraint_term(model, factor.name)))


def _ph_in(factor: str, phases) -> Expr:
    return one_of(ph(factor), phases)


def _set(var: str, value) -> tuple[str, Expr]:
    return (var, Lit(value))


def _dist(branches: list[tuple[float, tuple]]) -> tuple[Update, ...]:
    """Drop zero-probability branches; merge to a Dirac update when only one remains."""
    kept = [(p, a) for p, a in branches if p > 0]
    return tuple(Update(float(p), tuple(a)) for p, a in kept)


# ---------------------------------------------------------------- endangerment and mishap

def gen_endangerments(factor: FactorDecl, model: RiskModel) -> list[Command]:
    """Undetected activation, sensed activation with sensor fault, and re-activation."""
    F = factor.name
    mon = monitor_predicates(model, factor)
    cterm = constraint_term(model, F)
    omega = live(model)
    p = float(factor.detection_fault_prob)
    out = [
        Command(
            f"e_{F}'",
            conj(omega, eq(ph(F), int(Phase.INACTIVE)), factor.guard, neg(factor.detected_by), cterm),
            (Update(1.0, (_set(ph(F), int(Phase.ACTIVE_UNDETECTED)),)),),
            CONTROLLER,
        ),
        Command(
            f"e_{F}",
            conj(omega, eq(ph(F), int(Phase.INACTIVE)), mon.sensed),
            _dist([
                (1.0 - p, (_set(ph(F), int(Phase.ACTIVE)),)),
                (p, (_set(ph(F), int(Phase.ACTIVE_UNDETECTED)),)),
            ]),
            CONTROLLER,
        ),
        Command(
            f"e_{F}",
            conj(omega, eq(ph(F), int(Phase.MITIGATED)), mon.sensed),
            (Update(1.0, (_set(ph(F), int(Phase.ACTIVE)),)),),
            CONTROLLER,
        ),
    ]
    return out


def endangerment_due(model: RiskModel) -> Expr:
    """Some endangerment command is enabled (the *pending* predicate)."""
    parts = []
    for f in model.factors:
        mon = monitor_predicates(model, f)
        cterm = constraint_term(model, f.name)
        parts.append(conj(eq(ph(f.name), int(Phase.INACTIVE)), disj(conj(f.guard, cterm), mon.sensed)))
        parts.append(conj(eq(ph(f.name), int(Phase.MITIGATED)), mon.sensed))
    return disj(*parts)


def gen_mishap(factors: list[FactorDecl], label: str) -> list[Command]:
    """Controller participants for the environment action ``label``.

    One command per combination of which factors are hazardous, so that the
    joint mishap distribution lives in a single participant.  Factors with
    probability 0 contribute nothing.
    """
    factors = [f for f in factors if f.mishap_action == label and f.mishap_prob > 0]
    if not factors:
        return []
    out = []
    for pattern in itertools.product((True, False), repeat=len(factors)):
        guard_parts, branches = [], [(1.0, ())]
        for f, hot in zip(factors, pattern):
            hazard = conj(_ph_in(f.name, PH_ACTIVE), f.guard)
            guard_parts.append(hazard if hot else neg(hazard))
            if hot:
                q = float(f.mishap_prob)
                branches = [
                    (bp * pp, ba + aa)
                    for bp, ba in branches
                    for pp, aa in ((q, (_set(ph(f.name), int(Phase.MISHAP)),)), (1.0 - q, ()))
                ]
        out.append(Command(label, conj(*guard_parts), _dist(branches), CONTROLLER))
    return out


def gen_alleviation(factor: FactorDecl, model: RiskModel) -> list[Command]:
    if factor.mishap_action is None or factor.mishap_prob <= 0:
        return []
    return [Command(f"al_{factor.name}", conj(eq(ph(factor.name), int(Phase.MISHAP)), neg(model.final)),
                    (Update(1.0),), CONTROLLER)]


# ---------------------------------------------------------------- gradients

def resolve_target(matrix: GradientMatrix, current: str, target: str, kind: str) -> str:
    """Mitigations may only raise safety (gradient >= 0), resumptions only relax it (<= 0)."""
    if current not in matrix.labels or target not in matrix.labels:
        missing = current if current not in matrix.labels else target
        raise ModelError(f"{missing!r} is not a label of the gradient matrix")
    g = matrix[current, target]
    if kind == "mitigation":
        return target if g >= 0 else current
    if kind == "resumption":
        return target if g <= 0 else current
    raise ValueError(f"kind must be 'mitigation' or 'resumption', got {kind!r}")


def _switch_sets(model: RiskModel, which: str, target: str | None, kind: str) -> tuple[list[int], list[int]]:
    """Values from which the switch moves to ``target``, and values where it is already resolved."""
    names = [a.name for a in model.activities] if which == "activity" else list(model.safety_modes)
    if target is None:
        return [], list(range(len(names)))
    matrix = model.gradients.get(which)
    movers, settled = [], []
    for i, cur in enumerate(names):
        res = target if matrix is None else resolve_target(matrix, cur, target, kind)
        if res == cur:
            settled.append(i)
        else:
            if res != target:
                raise ModelError("gradient resolution must return the current value or the target")
            movers.append(i)
    return movers, settled


def _sf_holds(update) -> Expr:
    return conj(*(Binary("=", Var(v), e) for v, e in update))


def _reexposes(model: RiskModel, var: str, value: int) -> Expr:
    """Some mitigated factor would be sensed again once ``var`` takes ``value``."""
    parts = []
    for f in model.factors:
        zeta = substitute(monitor_predicates(model, f).sensed, {var: Lit(value)})
        parts.append(conj(eq(ph(f.name), int(Phase.MITIGATED)), zeta))
    return disj(*parts)


def _stages(model: RiskModel, action: ActionDecl, kind: str, pre: Expr) -> list[Command]:
    """Commands moving the safety mode, the activity and the safety function.

    A resumption stage stays disabled while it would re-expose another
    mitigated factor, so two factors cannot undo each other forever.
    """
    out = []
    enabling = conj(live(model), pre, action.guard)
    for which, var, target, names in (
        ("mode", "mode", action.target_mode, list(model.safety_modes)),
        ("activity", "act", action.target_activity, [a.name for a in model.activities]),
    ):
        movers, _ = _switch_sets(model, which, target, kind)
        if not movers:
            continue
        t = names.index(target)
        guard = conj(enabling, one_of(var, movers))
        if kind == "resumption":
            guard = conj(guard, neg(_reexposes(model, var, t)))
        suffix = "sm" if which == "mode" else "a"
        out.append(Command(f"{action.name}_{suffix}", guard, (Update(1.0, (_set(var, t),)),), CONTROLLER))
    if action.update:
        out.append(Command(
            action.sync_event or f"{action.name}_sf", conj(enabling, neg(_sf_holds(action.update))),
            (Update(1.0, tuple(action.update)),), CONTROLLER,
        ))
    return out


def _post(model: RiskModel, action: ActionDecl, kind: str) -> Expr:
    """All three effects of ``action`` are in place (or nothing is left to move)."""
    _, sm_ok = _switch_sets(model, "mode", action.target_mode, kind)
    _, a_ok = _switch_sets(model, "activity", action.target_activity, kind)
    return conj(
        one_of("mode", sm_ok) if action.target_mode is not None else TRUE,
        one_of("act", a_ok) if action.target_activity is not None else TRUE,
        _sf_holds(action.update) if action.update else TRUE,
    )


def _action_pre(model: RiskModel, name: str) -> Expr:
    """Phases in which some factor may start ``name``."""
    parts = []
    for f in model.factors:
        for chain in f.mitigations:
            for k, a in enumerate(chain):
                if a == name:
                    pre = int(Phase.ACTIVE) if k == 0 else int(Phase.MITIGATED_PARTIAL)
                    parts.append(eq(ph(f.name), pre))
        if name in f.resumptions:
            parts.append(eq(ph(f.name), int(Phase.MITIGATED)))
    return disj(*dict.fromkeys(parts))


def _users(model: RiskModel) -> dict[str, list[str]]:
    users: dict[str, list[str]] = {}
    for f in model.factors:
        for a in dict.fromkeys(f.mitigation_actions + f.resumptions):
            users.setdefault(a, []).append(f.name)
    return users


def closing_label(model: RiskModel, action: str, factor: str) -> str:
    """The action name, qualified by the factor when several factors share it."""
    return action if len(_users(model).get(action, [])) <= 1 else f"{action}_{factor}"


def gen_mitigations(factor: FactorDecl, model: RiskModel) -> list[Command]:
    out: list[Command] = []
    F = factor.name
    seen = set()
    for chain in factor.mitigations:
        for k, name in enumerate(chain):
            pre_phase = int(Phase.ACTIVE) if k == 0 else int(Phase.MITIGATED_PARTIAL)
            post_phase = int(Phase.MITIGATED) if k == len(chain) - 1 else int(Phase.MITIGATED_PARTIAL)
            key = (name, pre_phase, post_phase)
            if key in seen:
                continue
            seen.add(key)
            action = model.action(name)
            out += _stages(model, action, "mitigation", _action_pre(model, name))
            out.append(Command(
                closing_label(model, name, F),
                conj(live(model), eq(ph(F), pre_phase), action.guard, _post(model, action, "mitigation")),
                (Update(1.0, (_set(ph(F), post_phase),)),), CONTROLLER,
            ))
    return _dedupe(out)


def gen_resumptions(factor: FactorDecl, model: RiskModel) -> list[Command]:
    out: list[Command] = []
    F = factor.name
    for name in factor.resumptions:
        action = model.action(name)
        out += _stages(model, action, "resumption", _action_pre(model, name))
        out.append(Command(
            closing_label(model, name, F),
            conj(live(model), eq(ph(F), int(Phase.MITIGATED)), action.guard, _post(model, action, "resumption")),
            (Update(1.0, (_set(ph(F), int(Phase.INACTIVE)),)),), CONTROLLER,
        ))
    return _dedupe(out)


def _dedupe(cmds: list[Command]) -> list[Command]:
    return list(dict.fromkeys(cmds))


# ---------------------------------------------------------------- rewards

REWARD_NAMES = ("prod", "time", "risk", "pot", "nuis", "eff", "disr", "sev")


def gen_rewards(model: RiskModel) -> list[RewardStructure]:
    entries: dict[str, list] = {k: [] for k in REWARD_NAMES}
    quantity = {"value": "prod", "time": "time", "nuisance": "nuis", "effort": "eff", "disruption": "disr"}
    for c in model.commands:
        if c.event is not None:
            continue
        for q, v in c.costs:
            if q in quantity and v > 0:
                entries[quantity[q]].append((TRUE, c.name, float(v)))
        for f in model.factors:
            if f.severity > 0:
                entries["risk"].append((_ph_in(f.name, PH_ACTIVE), c.name, float(f.severity)))
    users = _users(model)
    for a in model.actions:
        for F in users.get(a.name, []):
            f = model.factor(F)
            label = closing_label(model, a.name, F)
            pot = a.cost("pot", f.severity)
            if pot > 0:
                entries["pot"].append((TRUE, label, float(pot)))
            for q, v in a.costs:
                if q in quantity and q != "value" and v > 0:
                    entries[quantity[q]].append((TRUE, label, float(v)))
    for f in model.factors:
        if f.mishap_action is not None and f.mishap_prob > 0 and f.severity > 0:
            entries["sev"].append((conj(_ph_in(f.name, PH_ACTIVE), f.guard), f.mishap_action, float(f.severity)))
    return [RewardStructure(k, tuple(v)) for k, v in entries.items()]


# ---------------------------------------------------------------- labels

def gen_labels(model: RiskModel) -> list[tuple[str, Expr]]:
    labels: list[tuple[str, Expr]] = []
    for f in model.factors:
        F = f.name
        mon = monitor_predicates(model, f)
        labels += [
            (f"inactive{F}", eq(ph(F), int(Phase.INACTIVE))),
            (f"active{F}", _ph_in(F, PH_ACTIVE)),
            (f"mitigated{F}", _ph_in(F, PH_MITIGATED)),
            (f"mishap{F}", eq(ph(F), int(Phase.MISHAP))),
            (f"hazard{F}", mon.actual),
            (f"sensed{F}", mon.sensed),
        ]
    mishap = any_mishap(model)
    sensed = disj(*(_ph_in(f.name, PH_SENSED) for f in model.factors))
    labels += [
        ("final", model.final),
        ("goal", model.goal if model.goal is not None else model.final),
        ("mishap", mishap),
        ("unsafe", conj(neg(mishap), sensed)),
        ("safe", conj(neg(mishap), neg(sensed))),
    ]
    return labels


# ---------------------------------------------------------------- compile

def nominal_filters(model: RiskModel, name: str) -> tuple[Expr, Expr, Expr]:
    """``(!final, mode filter, activity filter)`` of a nominal command."""
    c = next(c for c in model.commands if c.name == name)
    phi_sm = one_of("mode", [model.safety_modes.index(m) for m in c.modes]) if c.modes else TRUE
    owners = [i for i, a in enumerate(model.activities) if name in model.expanded_actions(a.name)]
    phi_a = one_of("act", owners) if owners else TRUE
    return neg(model.final), phi_sm, phi_a


def compile_model(model: RiskModel) -> GuardedProgram:
    """Translate a validated risk model into a guarded-command program."""
    errors = [d for d in validate(model) if d.severity == "error"]
    if errors:
        raise ModelError("; ".join(str(d) for d in errors))
    pending = endangerment_due(model)
    kinds: dict[str, str] = {}

    # actor modules in order of first appearance
    actors: dict[str, list] = {}
    var_owner = {}
    for v in model.variables:
        owner = v.owner or CELL
        var_owner[v.name] = owner
        actors.setdefault(owner, [])
    for c in model.commands:
        actors.setdefault(c.actor, [])
    order = [k for k in actors if k not in (CELL, CONTROLLER)] + [CELL, CONTROLLER]
    module_vars: dict[str, list[VarDecl]] = {k: [] for k in order}
    for v in model.variables:
        init = model.initial.get(v.name, False if v.type == "bool" else v.lo)
        module_vars[var_owner[v.name]].append(VarDecl(v.name, v.type, v.lo, v.hi, init))
    module_cmds: dict[str, list[Command]] = {k: [] for k in module_vars}

    for c in model.commands:
        ups = tuple(Update(b.prob, b.assigns) for b in c.branches)
        if c.event is not None:
            module_cmds[c.actor].append(Command(c.event, c.guard, ups, c.actor))
            continue
        _, phi_sm, phi_a = nominal_filters(model, c.name)
        guard = conj(live(model), phi_sm, phi_a, c.guard, neg(pending))
        module_cmds[c.actor].append(Command(c.name, guard, ups, c.actor))
        kinds[c.name] = "process"

    # cell: activity and mode plus successor steps
    if model.activities:
        module_vars[CELL].insert(0, VarDecl("act", "int", 0, len(model.activities) - 1, 0))
    if model.safety_modes:
        module_vars[CELL].insert(1 if model.activities else 0,
                                 VarDecl("mode", "int", 0, len(model.safety_modes) - 1, 0))
    names_a = [a.name for a in model.activities]
    for i, a in enumerate(model.activities):
        for succ in a.successors:
            label = f"{a.name}_to_{succ}"
            guard = conj(live(model), eq("act", i), a.done if a.done is not None else TRUE, neg(pending))
            module_cmds[CELL].append(Command(label, guard, (Update(1.0, (_set("act", names_a.index(succ)),)),), CELL))
            kinds[label] = "process"

    # controller
    for f in model.factors:
        module_vars[CONTROLLER].append(VarDecl(ph(f.name), "int", 0, int(Phase.MISHAP), int(Phase.INACTIVE)))
    ctl: list[Command] = []
    for f in model.factors:
        ctl += gen_endangerments(f, model)
    for label in dict.fromkeys(f.mishap_action for f in model.factors if f.mishap_action):
        ctl += gen_mishap(list(model.factors), label)
    for f in model.factors:
        ctl += gen_alleviation(f, model)
    hazard_labels = {c.label for c in ctl}
    for f in model.factors:
        ctl += gen_mitigations(f, model)
    for f in model.factors:
        ctl += gen_resumptions(f, model)
    for c in _dedupe(ctl):
        module_cmds[CONTROLLER].append(c)
        if c.label in hazard_labels:
            kinds.setdefault(c.label, "hazard")
        else:
            kinds[c.label] = "controller"
    for c in model.commands:
        if c.event is not None:
            kinds[c.event] = "controller"

    modules = tuple(
        Module(name, tuple(module_vars[name]), tuple(module_cmds[name]))
        for name in module_vars
        if module_vars[name] or module_cmds[name]
    )
    program = GuardedProgram(
        modules=modules,
        constants=model.constants(),
        labels=tuple(gen_labels(model)),
        rewards=tuple(gen_rewards(model)),
        action_kinds=kinds,
    )
    program.check()
    return program


compile = compile_model  # noqa: A001 - public name used by the pipeline
