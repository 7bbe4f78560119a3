"""Hypothesis strategies producing small, valid risk-model sources."""

from __future__ import annotations

from hypothesis import strategies as st

MODES = ("normal", "reduced", "stopped")

TINY = """model tiny;
modes normal;
var x : [0..1] init 0 owner worker;
final x = 1;
Activity off { done true; }
Command step @ worker { guard x = 0; update (x'=1); }
Factor F { desc "never"; guard false; detectedBy false; }
"""


@st.composite
def skew_matrix(draw, n: int, low: int = -3, high: int = 3, nonzero: bool = True):
    """Integer skew-symmetric ``n x n`` matrix; off-diagonal entries nonzero if asked."""
    m = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            vals = st.integers(low, high).filter(lambda v: v != 0) if nonzero else st.integers(low, high)
            v = draw(vals)
            m[i][j], m[j][i] = v, -v
    return m


def _rows(labels, m) -> str:
    return " ".join(f"{lab}: {' '.join(str(v) for v in row)};" for lab, row in zip(labels, m))


@st.composite
def model_sources(draw, max_factors: int = 3, probabilistic: bool = True):
    """Source text of a valid two-actor model with up to ``max_factors`` factors.

    The process moves a counter ``x`` through 0..3 while a machine toggles
    ``on``; factors watch conditions on both and are mitigated by mode
    switches or by switching the machine off.
    """
    nf = draw(st.integers(1, max_factors))
    names = [f"F{i}" for i in range(nf)]
    out = ["model gen;", f"modes {' '.join(MODES)};",
           "var x : [0..3] init 0 owner proc;", "var on : bool init false owner mach;",
           "final x = 3 & !on;"]
    out.append("Activity idle { successor work; done true; }")
    out.append("Activity work { successor idle; actions advance; done x = 3; }")
    p = draw(st.sampled_from([0.5, 0.75, 0.9, 1.0])) if probabilistic else 1.0
    upd = f"{p}: (x'=x + 1) + {round(1 - p, 10)}: (x'=x)" if p < 1 else "(x'=x + 1)"
    out.append(f"Command advance @ proc {{ guard x < 3; update {upd}; cost value=1; }}")
    out.append("Command start @ mach { guard !on & x < 3; update (on'=true); modes normal reduced; }")
    out.append("Command finish @ mach { guard on; update (on'=false); }")
    out.append("Command touch @ proc { guard on & x < 3; update (x'=x); }")
    actions = []
    for i, f in enumerate(names):
        lhs = draw(st.sampled_from(["x >= 1", "x = 2", "x <= 2", "on", "x >= 1 & on"]))
        fault = draw(st.sampled_from([0, 0, 0.05, 0.2]))
        body = [f'desc "factor {i}";', f"guard {lhs} & mode = normal;", f"detectedBy {lhs} & mode = normal;",
                f"faultProb {fault};"]
        if draw(st.booleans()):
            body.append(f"mishap touch prob {draw(st.sampled_from([0.1, 0.2, 0.5]))} "
                        f"sev {draw(st.integers(1, 9))};")
        else:
            body.append(f"severity {draw(st.integers(0, 9))};")
        n_mit = draw(st.integers(1, 2))
        mits = [f"{f}m{j}" for j in range(n_mit)]
        body.append(f"mitigatedBy {', '.join(mits)};")
        body.append(f"resumedBy {f}r;")
        out.append(f"Factor {f} {{ {' '.join(body)} }}")
        for m in mits:
            kind = draw(st.sampled_from(["MODE_SWITCH", "SHUTDOWN", "SAFETY_FUNCTION"]))
            parts = []
            if kind != "MODE_SWITCH":
                parts.append("update (on'=false);")
            if kind != "SAFETY_FUNCTION":
                parts.append(f"target mode {draw(st.sampled_from(['reduced', 'stopped']))};")
            parts.append(f"cost nuisance={draw(st.integers(0, 3))}, effort={draw(st.integers(0, 3))};")
            actions.append(f"Action {m} : {kind} {{ {' '.join(parts)} }}")
        actions.append(f"Action {f}r : RESUME {{ target mode normal; cost effort={draw(st.integers(0, 2))}; }}")
    out.extend(actions)
    if nf >= 2 and draw(st.booleans()):
        subject = names[-1]
        over = names[:-1]
        lo = draw(st.integers(0, len(over)))
        hi = draw(st.integers(lo, len(over)))
        out.append(f"constraint {subject} requiresNOf ({lo}|{','.join(over)}|{hi});")
    mm = draw(skew_matrix(len(MODES)))
    out.append(f"Gradients mode {{ {_rows(MODES, mm)} }}")
    return "\n".join(out) + "\n"
