"""Fan workflow runs out over tasks and samples, persist them, and evaluate them."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .config import RunConfig
from .evaluation import (MetricsReport, PredictionRecord, SampleVerdict, compute_report, evaluate_sample,
                         format_report)
from .gateway import (Backend, CassetteError, Gateway, GatewayError, HttpBackend, RateLimiter, RecordingBackend,
                      ReplayBackend, load_cassette)
from .guidelines import GuidelineSet, default_guidelines, load_guidelines
from .persistence import (VERDICT, atomic_write_text, cassette_file, persist_transcript, sample_dir, write_json)
from .sandbox import Sandbox
from .tasks import CodingTask
from .workflow import WorkflowTranscript, run_workflow

log = logging.getLogger(__name__)

BackendFactory = Callable[[str, int], Backend]


@dataclass
class SampleResult:
    transcript: WorkflowTranscript
    verdict: SampleVerdict | None = None


class Runner:
    """Executes the configured workflow for (task, sample) pairs.

    ``live_backend`` replaces the HTTP client for live and record runs;
    it is either one backend or a ``(task_id, sample_idx) -> Backend``
    factory.  Tests and fixture authoring pass scripted backends here.
    """

    def __init__(self, config: RunConfig, live_backend: Backend | BackendFactory | None = None,
                 guidelines: GuidelineSet | None = None):
        self.config = config
        self.run_dir = Path(config.run_dir)
        self.workflow = config.workflow_config()
        self.llm = config.llm_settings()
        self.sandbox = Sandbox(config.sandbox)
        if guidelines is None:
            guidelines = load_guidelines(config.guidelines) if config.guidelines else default_guidelines()
        self.guidelines = guidelines
        self.rate_limiter = RateLimiter(config.requests_per_minute) if config.requests_per_minute else None
        self._live = live_backend

    @property
    def cassette_root(self) -> Path:
        if self.config.cassette:
            return Path(self.config.cassette)
        return self.run_dir / "cassettes"

    def _live_backend(self, task_id: str, sample_idx: int) -> Backend:
        if self._live is None:
            if not self.config.model:
                raise GatewayError("live backend needs a model id (--model)")
            self._live = HttpBackend(self.config.base_url, self.config.model)
        if hasattr(self._live, "send"):
            return self._live
        return self._live(task_id, sample_idx)

    def backend_for(self, task_id: str, sample_idx: int) -> Backend:
        path = cassette_file(self.cassette_root, task_id, sample_idx)
        if self.config.backend == "replay":
            try:
                return ReplayBackend(load_cassette(path))
            except FileNotFoundError:
                raise CassetteError(f"no cassette for {task_id} sample {sample_idx} at {path}") from None
        if self.config.backend == "record":
            return RecordingBackend(self._live_backend(task_id, sample_idx), path)
        return self._live_backend(task_id, sample_idx)

    def run_sample(self, task: CodingTask, sample_idx: int) -> SampleResult:
        try:
            backend = self.backend_for(task.id, sample_idx)
        except GatewayError as exc:
            transcript = WorkflowTranscript(task.id, sample_idx)
            transcript.error = f"{type(exc).__name__}: {exc}"
            transcript.add("error", message=transcript.error)
        else:
            gateway = Gateway(backend, self.config.max_retries, self.rate_limiter)
            keep = sample_dir(self.run_dir, task.id, sample_idx) / "workspaces" if self.config.keep_workspaces else None
            transcript = run_workflow(task, self.workflow, gateway, self.sandbox, self.guidelines, self.llm,
                                      sample_idx, keep)
        persist_transcript(transcript, self.run_dir)
        verdict = None
        if task.reference_func_tests is not None and task.reference_sec_tests is not None:
            verdict = evaluate_sample(task, transcript.final_code, self.sandbox, sample_idx)
            write_json(sample_dir(self.run_dir, task.id, sample_idx) / VERDICT, verdict.to_dict())
        return SampleResult(transcript, verdict)

    def run_all(self, tasks: Sequence[CodingTask]) -> list[SampleResult]:
        jobs = [(task, i) for task in tasks for i in range(self.config.n)]
        if self.config.parallel == 1:
            return [self.run_sample(task, i) for task, i in jobs]
        with ThreadPoolExecutor(max_workers=self.config.parallel) as pool:
            return list(pool.map(lambda job: self.run_sample(*job), jobs))

    def write_config(self) -> Path:
        return write_json(self.run_dir / "config.json", self.config.to_dict())

    def bench(self, tasks: Sequence[CodingTask]) -> MetricsReport:
        self.write_config()
        results = self.run_all(tasks)
        truth = {t.id: t.ground_truth_cwe.number if t.ground_truth_cwe else None for t in tasks}
        report = report_from_results(results, self.config.ks, truth, label=self.config.preset)
        write_report(report, self.run_dir)
        return report


def predictions_from(transcripts: Sequence[WorkflowTranscript], truth: dict[str, int | None]) -> list[PredictionRecord]:
    return [
        PredictionRecord(t.task_id, t.sample_idx, tuple(t.predicted_cwes), truth.get(t.task_id))
        for t in transcripts
        if t.predicted_cwes is not None
    ]


def report_from_results(results: Sequence[SampleResult], ks: Sequence[int], truth: dict[str, int | None],
                        label: str = "") -> MetricsReport:
    verdicts = [r.verdict for r in results if r.verdict is not None]
    predictions = predictions_from([r.transcript for r in results], truth)
    return compute_report(verdicts, ks, predictions, label=label)


def write_report(report: MetricsReport, run_dir: str | Path) -> None:
    write_json(Path(run_dir) / "report.json", report.to_dict())
    atomic_write_text(Path(run_dir) / "report.txt", format_report(report, per_task=True))
