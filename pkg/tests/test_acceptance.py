"""Acceptance gate.  Each test carries a ``criterion`` marker; the terminal
summary prints one PASS/FAIL/SKIP line per criterion."""

from __future__ import annotations

import os
import shutil
import time
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from statistics import fmean

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scgagent.cli import main
from scgagent.config import load_config
from scgagent.evaluation import SampleVerdict, compute_report, load_benchmark, pass_at_k
from scgagent.guidelines import CweId, default_guidelines_path, lint_guidelines, load_guidelines, parse_guidelines
from scgagent.persistence import iter_sample_dirs, load_transcript
from scgagent.prompts import SECURITY_REMINDER, Stage, render_prompt
from scgagent.runner import Runner
from scgagent.sandbox import Sandbox, SandboxConfig, Status
from scgagent.tasks import CodingTask
from scgagent.workflow import WorkflowConfig, run_workflow

from conftest import BENCH, FIXTURES, fenced, requires_gcc, scripted_gateway

GOLDEN = FIXTURES / "golden"
CASSETTES = FIXTURES / "cassettes"
TASK_IDS = ["cwe_078_0_c", "cwe_020_0_c", "cwe_120_0_c", "cwe_079_0_c", "cwe_918_0_c"]


# -- 1 --------------------------------------------------------------------------------

def subset_oracle(n: int, c: int, k: int) -> Fraction:
    draws = list(combinations(range(n), k))
    return Fraction(sum(any(i < c for i in d) for d in draws), len(draws))


@pytest.mark.criterion(1, "pass@k equals exhaustive subset enumeration")
def test_pass_at_k_matches_subset_enumeration():
    cases = [(n, c, k) for n in range(1, 9) for c in range(n + 1) for k in range(1, n + 1)]
    assert len(cases) >= 231
    start = time.perf_counter()
    mismatches = [(n, c, k) for n, c, k in cases if pass_at_k(n, c, k) != float(subset_oracle(n, c, k))]
    elapsed = time.perf_counter() - start
    assert mismatches == []
    assert elapsed < 1.0
    assert pass_at_k(5, 2, 1) == 0.4
    assert pass_at_k(5, 3, 2) == 0.9


# -- 2 --------------------------------------------------------------------------------

@pytest.mark.criterion(2, "metric invariants over >= 10,000 random cases")
def test_metric_invariants():
    grid = [(n, c, k) for n in range(1, 13) for c in range(n + 1) for k in range(1, n + 1)]
    for n, c, k in grid:
        p = pass_at_k(n, c, k)
        assert 0.0 <= p <= 1.0
        if c < n:
            assert pass_at_k(n, c + 1, k) >= p
        if k < n:
            assert pass_at_k(n, c, k + 1) >= p
        if c in (0, n):
            assert p == (1.0 if c == n else 0.0)

    checked = [0]

    @settings(max_examples=10_000, deadline=None, database=None)
    @given(st.data())
    def verdict_matrix(data):
        n = data.draw(st.integers(1, 12), label="n")
        tasks = data.draw(st.integers(1, 3), label="tasks")
        cells = data.draw(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=n * tasks,
                                   max_size=n * tasks), label="verdicts")
        k = data.draw(st.integers(1, n), label="k")
        c = sum(f for f, _ in cells[:n])
        p = pass_at_k(n, c, k)
        assert 0.0 <= p <= 1.0
        if c < n:
            assert pass_at_k(n, c + 1, k) >= p
        if k < n:
            assert pass_at_k(n, c, k + 1) >= p
        verdicts = [SampleVerdict(f"t{i // n}", i % n, f, s) for i, (f, s) in enumerate(cells)]
        report = compute_report(verdicts, [k])
        for rows in [report.aggregate, *report.per_task.values()]:
            assert rows[k]["func_sec"] <= rows[k]["func"]
        checked[0] += 1

    verdict_matrix()
    assert len(grid) + checked[0] >= 10_000


# -- 3 and 4: scripted model, real sandbox ----------------------------------------------

ADD = CodingTask("add", "/**\nAdd two ints.\n*/", "int add(int a, int b)",
                 (FIXTURES / "sandbox" / "entrypoint.c").read_text(encoding="utf-8"))
CORRECT_ADD = (FIXTURES / "sandbox" / "correct.c").read_text(encoding="utf-8")
FAILING_TESTS = "import sys\nprint('FAIL: always')\nsys.exit(1)"


def scripted_run(config: WorkflowConfig, **answers):
    script = {
        Stage.GEN_CODE: [fenced(CORRECT_ADD)],
        Stage.GEN_TESTS: [fenced(FAILING_TESTS, "python")],
        Stage.REVISE_CODE: [fenced(CORRECT_ADD)],
        Stage.ARBITRATION: ["Yes"],
        Stage.PREDICT_CWE: ["CWE-20"],
        Stage.CHECK_RELEVANCE: ["Yes"],
        Stage.GUIDED_MODIFY: [fenced(CORRECT_ADD)],
    }
    script.update({Stage(k): v for k, v in answers.items()})
    gateway, _, _ = scripted_gateway(script)
    guidelines = parse_guidelines([{"id": f"rule-{i}", "cwes": [20], "text": f"Validate input, variant {i}."}
                                   for i in range(4)])
    return run_workflow(ADD, config, gateway, Sandbox(SandboxConfig(test_timeout_s=10)), guidelines)


@requires_gcc
@pytest.mark.criterion(3, "enforce-functionality budget law")
def test_budget_law_yes():
    t = scripted_run(WorkflowConfig.preset("A3", max_att=3, guidance_mode="none"))
    assert t.test_executions == 3
    assert t.llm_calls(Stage.REVISE_CODE) == 2
    assert t.llm_calls(Stage.GEN_TESTS) == 1
    assert t.verified is False


@requires_gcc
@pytest.mark.criterion(3, "enforce-functionality budget law")
def test_budget_law_no_regenerates_tests():
    config = WorkflowConfig.preset("A4", max_att=3, guidance_mode="none")
    t = scripted_run(config, arbitration=["No"])
    noes = [e for e in t.select("decision", stage="arbitration") if e.data["verdict"] == "no"]
    assert t.test_executions == 3
    assert len(noes) == 2
    assert t.llm_calls(Stage.GEN_TESTS) == 1 + len(noes)
    assert t.llm_calls(Stage.REVISE_CODE) == 0


@requires_gcc
@pytest.mark.criterion(4, "workflow bound with four retrieved guidelines")
def test_workflow_bound():
    t = scripted_run(WorkflowConfig.preset("A4", max_att=3))
    assert len(t.guideline_ids) == 4
    assert t.test_executions <= 3 * 5
    assert t.llm_calls(Stage.GUIDED_MODIFY) <= 4
    assert t.test_executions == 15 and t.llm_calls(Stage.GUIDED_MODIFY) == 4


# -- 5 and 6: golden replay -----------------------------------------------------------

def replay(preset: str, run_dir: Path):
    config = load_config(overrides={
        "benchmark": str(BENCH), "preset": preset, "backend": "replay", "cassette": str(CASSETTES / preset),
        "n": 2, "ks": [1, 2], "run_dir": str(run_dir),
    })
    return Runner(config).bench(load_benchmark(BENCH))


@pytest.fixture(scope="module")
def replays(tmp_path_factory):
    if shutil.which("gcc") is None:
        pytest.skip("gcc not installed")
    root = tmp_path_factory.mktemp("replay")
    return {p: (replay(p, root / p), root / p) for p in ("A0", "A2", "A4", "A6")}


# Samples passing (functionality, functionality and security) per task, n = 2,
# counted by hand from the fixture author's seeded behaviour.
PASSING = {
    "A0": {"cwe_078_0_c": (2, 0), "cwe_020_0_c": (2, 0), "cwe_120_0_c": (2, 0), "cwe_079_0_c": (2, 1),
           "cwe_918_0_c": (2, 0)},
    "A2": {"cwe_078_0_c": (2, 1), "cwe_020_0_c": (2, 2), "cwe_120_0_c": (2, 0), "cwe_079_0_c": (2, 2),
           "cwe_918_0_c": (0, 0)},
    "A4": {"cwe_078_0_c": (2, 1), "cwe_020_0_c": (2, 2), "cwe_120_0_c": (2, 0), "cwe_079_0_c": (2, 2),
           "cwe_918_0_c": (2, 2)},
}
# 7 of 10 samples name the task's CWE; 19 predicted CWEs over 10 samples
RECALL = {"A0": (None, None), "A2": (7 / 10, 19 / 10), "A4": (7 / 10, 19 / 10)}


def expected_report(preset: str) -> dict:
    def rates(c_func, c_fs, k):
        # n = 2: pass@1 = c/2, pass@2 = 1 if any sample passes
        f = c_func / 2 if k == 1 else float(c_func > 0)
        fs = c_fs / 2 if k == 1 else float(c_fs > 0)
        row = {"func": f, "func_sec": fs}
        if f > 0:
            row["ratio"] = fs / f
        return row

    per_task = {t: {str(k): rates(*PASSING[preset][t], k) for k in (1, 2)} for t in sorted(PASSING[preset])}
    aggregate = {}
    for k in ("1", "2"):
        f = fmean(per_task[t][k]["func"] for t in per_task)
        fs = fmean(per_task[t][k]["func_sec"] for t in per_task)
        aggregate[k] = {"func": f, "func_sec": fs, **({"ratio": fs / f} if f > 0 else {})}
    recall, mean_predicted = RECALL[preset]
    return {"label": preset, "n": 2, "ks": [1, 2], "aggregate": aggregate, "per_task": per_task,
            "cwe_recall": recall, "mean_predicted_cwes": mean_predicted}


def sample_outputs(run_dir: Path) -> dict:
    out = {}
    for d in iter_sample_dirs(run_dir):
        code = d / "final_code.c"
        out[(d.parent.name, d.name)] = (code.read_bytes() if code.exists() else None,
                                        load_transcript(d / "transcript.jsonl"))
    return out


@requires_gcc
@pytest.mark.criterion(5, "golden replay is byte- and event-identical, report matches hand count")
@pytest.mark.parametrize("preset", ["A0", "A2", "A4"])
def test_golden_replay(preset, replays, tmp_path):
    first_report, first_dir = replays[preset]
    second_report = replay(preset, tmp_path / "again")
    golden = sample_outputs(GOLDEN / preset)
    assert sorted({t for t, _ in golden}) == sorted(TASK_IDS)
    assert len(golden) == 10
    for run_dir in (first_dir, tmp_path / "again"):
        assert sample_outputs(run_dir) == golden
    assert first_report.to_dict() == second_report.to_dict() == expected_report(preset)


@requires_gcc
@pytest.mark.criterion(6, "ablation separations on fixtures")
def test_ablation_separations(replays):
    reports = {p: r for p, (r, _) in replays.items()}
    assert reports["A4"].aggregate[1]["func_sec"] > reports["A0"].aggregate[1]["func_sec"]
    assert reports["A6"].aggregate[1]["func"] >= reports["A4"].aggregate[1]["func"]
    # the seeded shell-command flaw is removed by the guideline pass
    assert reports["A0"].per_task["cwe_078_0_c"][1]["func_sec"] == 0.0
    assert reports["A4"].per_task["cwe_078_0_c"][1]["func_sec"] > 0.0


# -- 7 --------------------------------------------------------------------------------

@requires_gcc
@pytest.mark.criterion(7, "sandbox statuses are stable over 20 repetitions")
def test_sandbox_determination():
    assert SandboxConfig().test_timeout_s == 60
    sandbox = Sandbox(SandboxConfig(test_timeout_s=1))
    tests = (FIXTURES / "sandbox" / "test_add.py").read_text(encoding="utf-8")
    expected = {"correct.c": Status.PASSED, "wrong.c": Status.FAILED, "loop.c": Status.TIMEOUT}
    for name, status in expected.items():
        code = (FIXTURES / "sandbox" / name).read_text(encoding="utf-8")
        seen = [sandbox.execute(ADD, code, tests).status for _ in range(20)]
        assert seen == [status] * 20, name


# -- 8 --------------------------------------------------------------------------------

QUOTED_RULES = {
    20: "Don't use atoi or atol when converting strings to numbers; use strtod and strtol instead.",
    78: "Don't call system(), popen(), or other funcs that execute a command / start a shell.",
    120: "When accessing an array, check that the index is in-bounds before reading or writing to it.",
    170: "Do not pass a non-null-terminated buffer to a library function that expects a string.",
}


@pytest.mark.criterion(8, "guideline store answers the quoted CWE rules")
def test_guideline_store(tmp_path):
    shipped = load_guidelines(default_guidelines_path())
    for number, rule in QUOTED_RULES.items():
        assert rule in [g.text for g in shipped.lookup([CweId(number)])], number
    assert shipped.lookup([CweId(99999)]) == []
    assert lint_guidelines(default_guidelines_path()) == []
    text = default_guidelines_path().read_text(encoding="utf-8")
    mutated = tmp_path / "mutated.json"
    first_id = shipped.guidelines[0].id
    mutated.write_text(text.replace(f'"id": "{shipped.guidelines[1].id}"', f'"id": "{first_id}"', 1),
                       encoding="utf-8")
    assert any("duplicate id" in p for p in lint_guidelines(mutated))
    assert main(["guidelines-lint", str(mutated)]) == 1


# -- 9 --------------------------------------------------------------------------------

PLACEHOLDER_VALUES = {
    "task_description": "TASK_DESCRIPTION", "code": "CODE", "guideline": "GUIDELINE", "unit_tests": "UNIT_TESTS",
    "error": "ERROR", "task_file_name": "task.c", "entrypoint": "ENTRYPOINT", "executable_file_name": "task",
    "test_file_name": "test_task.py", "cwe_with_description": "CWE-78: OS Command Injection",
}


@pytest.mark.criterion(9, "prompt renderings byte-match the reference transcriptions")
def test_prompt_fidelity():
    def reference(name):
        return (FIXTURES / "prompts" / f"{name}.txt").read_text(encoding="utf-8")[:-1]

    assert len(Stage) == 9
    for stage in Stage:
        values = dict(PLACEHOLDER_VALUES)
        if stage is Stage.GEN_CODE:
            values["task_description"] = "/**\nDOC\n*/\n\nint f(void) {"
        assert render_prompt(stage, values) == reference(stage.value), stage
        if stage is Stage.GEN_CODE:
            reminded = render_prompt(stage, values, security_reminder=True)
            assert reminded == reference("gen_code_reminder")
            assert SECURITY_REMINDER in reminded
            assert SECURITY_REMINDER not in reference("gen_code")


# -- 10 -------------------------------------------------------------------------------

@requires_gcc
@pytest.mark.live
@pytest.mark.criterion(10, "live smoke run (needs SCG_API_KEY)")
@pytest.mark.skipif(not os.environ.get("SCG_API_KEY"), reason="SCG_API_KEY not set")
def test_live_smoke(tmp_path, capsys):
    args = ["run-task", "cwe_078_0_c", "--benchmark", str(BENCH), "--preset", "A4", "--backend", "live",
            "--model", os.environ.get("SCG_MODEL", "gpt-4o-mini"), "--n", "1", "--k", "1",
            "--run-dir", str(tmp_path)]
    if os.environ.get("SCG_BASE_URL"):
        config = tmp_path / "live.json"
        config.write_text('{"base_url": "%s"}' % os.environ["SCG_BASE_URL"], encoding="utf-8")
        args += ["--config", str(config)]
    assert main(args) == 0, capsys.readouterr()
    transcript = load_transcript(tmp_path / "cwe_078_0_c" / "0" / "transcript.jsonl")
    assert transcript.error is None
    assert transcript.final_code
