"""Benchmark task, code sample and test suite records."""

from __future__ import annotations

from dataclasses import dataclass

from .guidelines import CweId

LLM_GENERATED = "llm_generated"
REFERENCE = "reference"


@dataclass(frozen=True)
class TestSuite:
    script: str
    origin: str = LLM_GENERATED
    generation_index: int = 0

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        if not self.script.strip():
            raise ValueError("test script is empty")
        if self.origin not in (LLM_GENERATED, REFERENCE):
            raise ValueError(f"unknown test suite origin {self.origin!r}")
        if self.generation_index < 0:
            raise ValueError("generation_index must be >= 0")


@dataclass(frozen=True)
class CodeSample:
    source: str
    origin: str
    revision_index: int = 0

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValueError("code sample is empty")
        if self.revision_index < 0:
            raise ValueError("revision_index must be >= 0")


@dataclass(frozen=True)
class CodingTask:
    id: str
    description: str
    signature: str
    entrypoint: str
    ground_truth_cwe: CweId | None = None
    reference_func_tests: TestSuite | None = None
    reference_sec_tests: TestSuite | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("task id is empty")
        if not self.description.strip() or not self.signature.strip():
            raise ValueError(f"task {self.id!r}: description and signature must be non-empty")

    @property
    def code_stub(self) -> str:
        """Docstring comment followed by the opening line of the function."""
        return f"{self.description.rstrip()}\n\n{self.signature.strip()} {{"
