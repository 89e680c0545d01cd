"""The secure code generation workflow.

One :class:`WorkflowRun` produces one code sample for one task:

1. preparation: draft code, draft unit tests, enforce functionality;
2. guideline retrieval: predict CWEs, look up their guidelines;
3. improvement: for each guideline the model judges relevant, modify the
   code to follow it and enforce functionality again.

Everything the run does is appended to a :class:`WorkflowTranscript`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from .gateway import ChatRequest, ChatResponse, Gateway, GatewayError, LLMSettings, Message
from .guidelines import CweId, Guideline, GuidelineSet, describe_cwe
from .prompts import (ParseError, PromptError, Stage, extract_code_block, extract_cwe_list, extract_yes_no,
                      render_prompt)
from .sandbox import Sandbox, SandboxError, TestRunOutcome
from .tasks import LLM_GENERATED, REFERENCE, CodeSample, CodingTask, TestSuite

log = logging.getLogger(__name__)


class GuidanceMode(str, Enum):
    NONE = "none"
    CWE_DESCRIPTION = "cwe_description"
    GUIDELINES = "guidelines"


class WorkflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorkflowConfig:
    guidance_mode: GuidanceMode = GuidanceMode.GUIDELINES
    revise_code: bool = True
    revise_tests: bool = True
    oracle_cwes: bool = False
    oracle_unit_tests: bool = False
    max_att: int = 3
    security_reminder: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "guidance_mode", GuidanceMode(self.guidance_mode))
        if self.revise_tests and not self.revise_code:
            raise ValueError("revise_tests requires revise_code")
        if isinstance(self.max_att, bool) or not isinstance(self.max_att, int) or self.max_att < 1:
            raise ValueError("max_att must be an integer >= 1")

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "WorkflowConfig":
        try:
            fields = PRESETS[name.upper()]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
        return cls(**{**fields, **overrides})

    def to_dict(self) -> dict[str, Any]:
        return {
            "guidance_mode": self.guidance_mode.value,
            "revise_code": self.revise_code,
            "revise_tests": self.revise_tests,
            "oracle_cwes": self.oracle_cwes,
            "oracle_unit_tests": self.oracle_unit_tests,
            "max_att": self.max_att,
            "security_reminder": self.security_reminder,
        }


# ablation rows: guidance / revise code / revise tests, then oracle CWEs / oracle tests
PRESETS: dict[str, dict[str, Any]] = {
    "A0": dict(guidance_mode="none", revise_code=False, revise_tests=False),
    "A1": dict(guidance_mode="cwe_description", revise_code=False, revise_tests=False),
    "A2": dict(guidance_mode="guidelines", revise_code=False, revise_tests=False),
    "A3": dict(guidance_mode="guidelines", revise_code=True, revise_tests=False),
    "A4": dict(guidance_mode="guidelines", revise_code=True, revise_tests=True),
    "A5": dict(guidance_mode="guidelines", revise_code=True, revise_tests=True, oracle_cwes=True),
    "A6": dict(guidance_mode="guidelines", revise_code=True, revise_tests=True, oracle_cwes=True,
               oracle_unit_tests=True),
}


@dataclass
class Event:
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {"event": self.kind, **self.data}


@dataclass
class WorkflowTranscript:
    task_id: str
    sample_idx: int = 0
    events: list[Event] = field(default_factory=list)
    final_code: str | None = None
    final_tests: str | None = None
    predicted_cwes: list[int] | None = None
    guideline_ids: list[str] = field(default_factory=list)
    verified: bool | None = None
    error: str | None = None

    def add(self, kind: str, **data: Any) -> Event:
        event = Event(kind, data)
        self.events.append(event)
        return event

    def select(self, kind: str, **match: Any) -> list[Event]:
        return [e for e in self.events if e.kind == kind and all(e.data.get(k) == v for k, v in match.items())]

    def count(self, kind: str, **match: Any) -> int:
        return len(self.select(kind, **match))

    def llm_calls(self, stage: Stage | str | None = None) -> int:
        if stage is None:
            return self.count("llm")
        return self.count("llm", stage=str(stage))

    @property
    def test_executions(self) -> int:
        return self.count("sandbox")

    def to_records(self) -> list[dict[str, Any]]:
        records = [{"event": "run", "task_id": self.task_id, "sample_idx": self.sample_idx}]
        records.extend(e.to_record() for e in self.events)
        records.append({
            "event": "result",
            "final_code": self.final_code,
            "final_tests": self.final_tests,
            "predicted_cwes": self.predicted_cwes,
            "guideline_ids": self.guideline_ids,
            "verified": self.verified,
            "error": self.error,
        })
        return records

    @classmethod
    def from_records(cls, records: Iterable[dict[str, Any]]) -> "WorkflowTranscript":
        records = list(records)
        if not records or records[0].get("event") != "run" or records[-1].get("event") != "result":
            raise ValueError("transcript must start with a run record and end with a result record")
        head, tail = records[0], records[-1]
        events = []
        for record in records[1:-1]:
            data = dict(record)
            events.append(Event(data.pop("event"), data))
        return cls(
            task_id=head["task_id"],
            sample_idx=head["sample_idx"],
            events=events,
            final_code=tail["final_code"],
            final_tests=tail["final_tests"],
            predicted_cwes=tail["predicted_cwes"],
            guideline_ids=list(tail["guideline_ids"]),
            verified=tail["verified"],
            error=tail["error"],
        )


class WorkflowRun:
    """State of one workflow execution for one (task, sample) pair."""

    def __init__(
        self,
        task: CodingTask,
        config: WorkflowConfig,
        gateway: Gateway,
        sandbox: Sandbox,
        guidelines: GuidelineSet | None = None,
        llm: LLMSettings | None = None,
        sample_idx: int = 0,
        keep_dir: str | Path | None = None,
    ):
        if config.guidance_mode is GuidanceMode.GUIDELINES and guidelines is None:
            raise WorkflowError("guideline mode needs a loaded guideline set")
        if config.oracle_unit_tests and task.reference_func_tests is None:
            raise WorkflowError(f"task {task.id}: oracle unit tests requested but no reference suite")
        self.task = task
        self.config = config
        self.gateway = gateway
        self.sandbox = sandbox
        self.guidelines = guidelines
        self.llm = llm or LLMSettings()
        self.keep_dir = keep_dir
        self.transcript = WorkflowTranscript(task.id, sample_idx)
        self._revision = -1
        self._generation = -1

    # -- model plumbing ------------------------------------------------------

    def _on_exchange(self, request: ChatRequest, response: ChatResponse, attempt: int) -> None:
        self.transcript.add(
            "llm",
            stage=request.stage.value,
            prompt_digest=request.digest,
            response=response.text,
            finish_state=response.finish_state.value,
            attempt=attempt,
        )

    def _ask(self, stage: Stage, bindings: dict[str, str], parse: Callable[[str], Any],
             history: tuple[Message, ...] = ()) -> Any:
        prompt = render_prompt(stage, bindings, self.config.security_reminder)
        request = self.llm.request(stage, prompt, history)
        return self.gateway.ask(
            request, parse, self._on_exchange,
            on_parse_error=lambda exc: self.transcript.add("parse_failure", stage=stage.value, reason=str(exc)),
        )

    def _bindings(self, code: CodeSample | None = None, **extra: str) -> dict[str, str]:
        bindings = {"task_description": self.task.code_stub}
        if code is not None:
            bindings["code"] = code.source
        bindings.update(extra)
        return bindings

    def _code(self, source: str, origin: Stage) -> CodeSample:
        self._revision += 1
        sample = CodeSample(source, origin.value, self._revision)
        self.transcript.add("code", origin=origin.value, revision_index=sample.revision_index, source=source)
        return sample

    def _tests(self, script: str, origin: str) -> TestSuite:
        self._generation += 1
        suite = TestSuite(script, origin, self._generation)
        self.transcript.add("tests", origin=origin, generation_index=suite.generation_index, script=script)
        return suite

    def _decision(self, stage: Stage, verdict: bool | None, subject: str | None = None) -> None:
        label = {True: "yes", False: "no", None: "undecidable"}[verdict]
        self.transcript.add("decision", stage=stage.value, subject=subject, verdict=label)

    def _warn(self, message: str) -> None:
        log.warning("%s[%d]: %s", self.task.id, self.transcript.sample_idx, message)
        self.transcript.add("warning", message=message)

    # -- stages ----------------------------------------------------------------

    def gen_code(self) -> CodeSample:
        source = self._ask(Stage.GEN_CODE, self._bindings(), extract_code_block)
        return self._code(source, Stage.GEN_CODE)

    def gen_tests(self) -> TestSuite:
        cfg = self.sandbox.config
        bindings = self._bindings(
            task_file_name=cfg.task_file_name,
            entrypoint=self.task.entrypoint,
            executable_file_name=cfg.executable_file_name,
            test_file_name=cfg.test_file_name,
        )
        script = self._ask(Stage.GEN_TESTS, bindings, extract_code_block)
        return self._tests(script, LLM_GENERATED)

    def predict_cwe(self, code: CodeSample) -> list[CweId]:
        if self.config.oracle_cwes:
            truth = self.task.ground_truth_cwe
            cwes = [truth] if truth is not None else []
            if truth is None:
                self._warn("oracle CWE mode but the task has no ground-truth CWE")
        else:
            cwes = self._ask(Stage.PREDICT_CWE, self._bindings(code), extract_cwe_list)
        self.transcript.predicted_cwes = [c.number for c in cwes]
        self.transcript.add("cwes", predicted=[c.number for c in cwes], oracle=self.config.oracle_cwes)
        return cwes

    def _yes_no(self, stage: Stage, bindings: dict[str, str], subject: str | None) -> bool | None:
        try:
            verdict = self._ask(stage, bindings, extract_yes_no)
        except ParseError:
            verdict = None
        self._decision(stage, verdict, subject)
        return verdict

    def check_relevance(self, code: CodeSample, guideline: Guideline) -> bool:
        verdict = self._yes_no(Stage.CHECK_RELEVANCE, self._bindings(code, guideline=guideline.text), guideline.id)
        if verdict is None:
            self._warn(f"no firm relevance verdict for guideline {guideline.id}; skipping it")
        return bool(verdict)

    def _modify(self, stage: Stage, code: CodeSample, bindings: dict[str, str], subject: str) -> CodeSample:
        try:
            source = self._ask(stage, bindings, extract_code_block)
        except ParseError:
            self._warn(f"{stage.value} for {subject} returned no code; keeping the previous code")
            return code
        return self._code(source, stage)

    def guided_modify(self, code: CodeSample, guideline: Guideline) -> CodeSample:
        return self._modify(Stage.GUIDED_MODIFY, code, self._bindings(code, guideline=guideline.text), guideline.id)

    def cwe_vulnerable(self, code: CodeSample, cwe: CweId) -> bool:
        bindings = self._bindings(code, cwe_with_description=describe_cwe(cwe))
        verdict = self._yes_no(Stage.CWE_DESC_CHECK, bindings, str(cwe))
        if verdict is None:
            self._warn(f"no firm vulnerability verdict for {cwe}; skipping it")
        return bool(verdict)

    def cwe_modify(self, code: CodeSample, cwe: CweId) -> CodeSample:
        bindings = self._bindings(code, cwe_with_description=describe_cwe(cwe))
        return self._modify(Stage.CWE_DESC_MODIFY, code, bindings, str(cwe))

    def arbitrate(self, tests: TestSuite, error: str) -> bool:
        """True when the failing tests must pass (revise code), False when the tests are at fault."""
        verdict = self._yes_no(Stage.ARBITRATION, self._bindings(unit_tests=tests.script, error=error), None)
        if verdict is None:
            self._warn("no firm arbitration verdict; revising the code")
            return True
        return verdict

    def revise_code(self, code: CodeSample, tests: TestSuite, error: str,
                    history: list[Message]) -> CodeSample:
        bindings = {"unit_tests": tests.script, "error": error}
        prompt = render_prompt(Stage.REVISE_CODE, bindings)
        replies: list[str] = []

        def parse(text: str) -> str:
            replies.append(text)
            return extract_code_block(text)

        try:
            source = self._ask(Stage.REVISE_CODE, bindings, parse, tuple(history))
        except ParseError:
            self._warn("revise_code returned no code; keeping the previous code")
            return code
        history.extend([Message("user", prompt), Message("assistant", replies[-1])])
        return self._code(source, Stage.REVISE_CODE)

    def _execute(self, code: CodeSample, tests: TestSuite, attempt: int) -> TestRunOutcome:
        outcome = self.sandbox.execute(self.task, code.source, tests, keep_dir=self.keep_dir)
        self.transcript.add(
            "sandbox",
            attempt=attempt,
            revision_index=code.revision_index,
            generation_index=tests.generation_index,
            status=outcome.status.value,
            diagnostics=outcome.diagnostics,
        )
        return outcome

    def enforce_func(self, code: CodeSample, tests: TestSuite) -> tuple[CodeSample, TestSuite, bool]:
        """Run the tests; on failure let the model decide whether code or tests get revised.

        At most ``max_att`` test executions.  No revision follows the last
        one, since its result could not be checked.
        """
        max_att = self.config.max_att
        gen_prompt = render_prompt(Stage.GEN_CODE, self._bindings(), self.config.security_reminder)
        history = [Message("user", gen_prompt), Message("assistant", f"```c\n{code.source}\n```")]
        for attempt in range(1, max_att + 1):
            outcome = self._execute(code, tests, attempt)
            if outcome.passed:
                self.transcript.add("enforce", passed=True, attempts=attempt)
                return code, tests, True
            if attempt == max_att:
                break
            must_pass = self.arbitrate(tests, outcome.diagnostics)
            if must_pass or not self.config.revise_tests or tests.origin == REFERENCE:
                code = self.revise_code(code, tests, outcome.diagnostics, history)
            else:
                try:
                    tests = self.gen_tests()
                except ParseError:
                    self._warn("gen_tests returned no script; keeping the previous tests")
        self.transcript.add("enforce", passed=False, attempts=max_att)
        return code, tests, False

    # -- main ----------------------------------------------------------------

    def run(self) -> WorkflowTranscript:
        t = self.transcript
        cfg = self.config
        code: CodeSample | None = None
        tests: TestSuite | None = None
        try:
            code = self.gen_code()
            if cfg.revise_code:
                if cfg.oracle_unit_tests:
                    tests = self._tests(self.task.reference_func_tests.script, REFERENCE)
                else:
                    tests = self.gen_tests()
                code, tests, t.verified = self.enforce_func(code, tests)

            if cfg.guidance_mode is GuidanceMode.GUIDELINES:
                cwes = self.predict_cwe(code)
                selected = self.guidelines.lookup(cwes)
                t.guideline_ids = [g.id for g in selected]
                t.add("guidelines", ids=t.guideline_ids)
                if not selected:
                    self._warn("no guidelines retrieved; keeping the prepared code")
                for guideline in selected:
                    if self.check_relevance(code, guideline):
                        code = self.guided_modify(code, guideline)
                        if cfg.revise_code:
                            code, tests, t.verified = self.enforce_func(code, tests)
            elif cfg.guidance_mode is GuidanceMode.CWE_DESCRIPTION:
                for cwe in self.predict_cwe(code):
                    if self.cwe_vulnerable(code, cwe):
                        code = self.cwe_modify(code, cwe)
                        if cfg.revise_code:
                            code, tests, t.verified = self.enforce_func(code, tests)
        except (GatewayError, SandboxError, ParseError, PromptError) as exc:
            t.error = f"{type(exc).__name__}: {exc}"
            t.add("error", message=t.error)
            log.error("%s[%d] aborted: %s", self.task.id, t.sample_idx, t.error)
            return t
        t.final_code = code.source
        t.final_tests = tests.script if tests is not None else None
        t.add("final", revision_index=code.revision_index, verified=t.verified)
        return t


def run_workflow(
    task: CodingTask,
    config: WorkflowConfig,
    gateway: Gateway,
    sandbox: Sandbox,
    guidelines: GuidelineSet | None = None,
    llm: LLMSettings | None = None,
    sample_idx: int = 0,
    keep_dir: str | Path | None = None,
) -> WorkflowTranscript:
    return WorkflowRun(task, config, gateway, sandbox, guidelines, llm, sample_idx, keep_dir).run()


__all__ = [
    "Event",
    "GuidanceMode",
    "PRESETS",
    "WorkflowConfig",
    "WorkflowError",
    "WorkflowRun",
    "WorkflowTranscript",
    "run_workflow",
]
