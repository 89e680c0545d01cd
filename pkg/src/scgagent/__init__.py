"""Secure C code generation: guideline-driven revision checked by generated unit tests."""

from .evaluation import MetricsReport, SampleVerdict, compute_report, evaluate_sample, load_benchmark, pass_at_k
from .gateway import ChatRequest, ChatResponse, Gateway, LLMSettings, load_cassette
from .guidelines import CweId, Guideline, GuidelineSet, load_guidelines, lookup_guidelines
from .prompts import Stage, extract_code_block, extract_cwe_list, extract_yes_no, render_prompt
from .sandbox import Sandbox, SandboxConfig, Status
from .tasks import CodeSample, CodingTask, TestSuite
from .workflow import PRESETS, WorkflowConfig, WorkflowRun, WorkflowTranscript, run_workflow

__version__ = "0.1.0"
