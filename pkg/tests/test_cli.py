import csv
import json

import pytest

from ascsynth import bundled
from ascsynth.cli import EXIT_CAP, EXIT_EC, EXIT_ERROR, EXIT_IO, EXIT_OK, main

TRAP = """model trap;
modes normal;
var x : [0..1] init 0 owner proc;
final x = 1;
Activity run { done true; }
Command spin @ proc { guard x = 0; update (x'=x); cost value=1; }
Command step @ proc { guard x = 0; update (x'=1); }
Factor F { desc "never"; guard false; detectedBy false; }
"""


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def bad_prob(tmp_path):
    text = bundled.model_text().replace("faultProb 0.05", "faultProb 1.3", 1)
    p = tmp_path / "bad.riskm"
    p.write_text(text)
    return str(p)


def test_validate_bundled(capsys):
    code, out, _ = run(capsys, "validate", "-")
    assert code == EXIT_OK and "7 factors, 0 errors" in out


def test_validate_bad_probability(capsys, bad_prob):
    code, out, _ = run(capsys, "validate", bad_prob)
    assert code == EXIT_ERROR and "1.3" in out


def test_validate_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", str(tmp_path / "none.riskm"))
    assert code == EXIT_IO and "cannot read" in err


def test_build_summary(capsys):
    code, out, _ = run(capsys, "build", "-")
    assert code == EXIT_OK
    assert out.strip() == "states=9858 transitions=29759 risk_space=123"


def test_build_single_factor(capsys):
    code, out, _ = run(capsys, "build", "-", "--factors", "HC")
    assert code == EXIT_OK and out.strip().endswith("risk_space=3")


def test_build_unknown_factor(capsys):
    assert run(capsys, "build", "-", "--factors", "XX")[0] == EXIT_ERROR


def test_build_cap(capsys):
    code, _, err = run(capsys, "--cap", "10", "build", "-")
    assert code == EXIT_CAP and "cap" in err
    assert run(capsys, "build", "-", "--cap", "10")[0] == EXIT_CAP


def test_build_emits_files(capsys, tmp_path):
    mdp, prog = tmp_path / "m.json", tmp_path / "p.pm"
    assert run(capsys, "build", "-", "--factors", "HC", "--emit-mdp", str(mdp), "--emit-pgcl", str(prog))[0] == 0
    data = json.loads(mdp.read_text())
    assert len(data["states"]) == 247 and data["initial"] == 0
    assert "module asc" in prog.read_text()


def test_build_is_deterministic(capsys, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"m{i}.json"
        run(capsys, "build", "-", "--factors", "HC,HS", "--emit-mdp", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_check_bundled_props(capsys):
    code, out, _ = run(capsys, "check", "-", "-")
    assert code == EXIT_OK
    assert out.strip().splitlines()[-1] == "24 properties, 0 failed"


def test_check_unknown_label(capsys, tmp_path):
    p = tmp_path / "bad.props"
    p.write_text('v: E [ F "nonsense" ]\n')
    assert run(capsys, "check", "-", str(p))[0] == EXIT_ERROR


def test_check_failing_annotation(capsys, tmp_path):
    p = tmp_path / "wrong.props"
    p.write_text('v: A [ F "activeHC" ]\n')
    code, out, _ = run(capsys, "check", "-", str(p), "--factors", "HC")
    assert code == EXIT_ERROR and out.startswith("FAIL")


def test_check_empty_file(capsys, tmp_path):
    p = tmp_path / "empty.props"
    p.write_text("// nothing here\n")
    code, _, err = run(capsys, "check", "-", str(p))
    assert code == EXIT_OK and "no properties" in err


def test_synth_query_c(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "-", "--query", "c", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    assert "accident_freedom=[1,1,1]" in out
    pol = json.loads((tmp_path / "policy.json").read_text())
    assert pol["objective"].startswith("0.5*")


def test_synth_single_objective(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "-", "--factors", "HC", "--objective", 'Pmax=? [ F "goal" ]',
                       "--out-dir", str(tmp_path), "--dot")
    assert code == EXIT_OK and out.startswith("objective=")
    assert (tmp_path / "policy.dot").read_text().startswith('digraph "policy"')


def test_synth_trap_reports_end_component(capsys, tmp_path):
    p = tmp_path / "trap.riskm"
    p.write_text(TRAP)
    code, out, _ = run(capsys, "synth", str(p), "--objective", "prod", "--out-dir", str(tmp_path))
    assert code == EXIT_EC
    assert "component states: 0" in out and "spin" in out


def test_synth_pareto_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "synth", "-", "--factors", "HC,HS", "--query", "c", "--pareto", "5",
                     "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    rows = list(csv.reader((tmp_path / "frontier.csv").open()))
    assert rows[0] == ["w", "valueA", "valueB", "policyFile"] and len(rows) == 6
    assert all((tmp_path / r[3]).exists() for r in rows[1:])


def test_synth_needs_objectives(capsys):
    assert run(capsys, "synth", "-")[0] == EXIT_ERROR
    assert run(capsys, "synth", "-", "--objective", "prod", "--pareto", "3")[0] == EXIT_ERROR


def test_synth_outputs_byte_identical(capsys, tmp_path):
    texts = []
    for i in range(2):
        d = tmp_path / str(i)
        code, out, _ = run(capsys, "synth", "-", "--factors", "HC,HS,WS", "--query", "a", "--out-dir", str(d), "--dot")
        texts.append((out, (d / "policy.json").read_bytes(), (d / "policy.dot").read_bytes()))
    assert texts[0] == texts[1]


@pytest.mark.parametrize("fmt, head", [
    ("pgcl", "const "), ("mdp-json", "{"), ("mdp-dot", "digraph"), ("policy-dot", "digraph"), ("policy-json", "{"),
])
def test_export_formats(capsys, fmt, head):
    extra = ["--query", "c"] if fmt.startswith("policy") else []
    code, out, _ = run(capsys, "export", "-", "--factors", "HC", "--format", fmt, *extra)
    assert code == EXIT_OK and out.startswith(head)
