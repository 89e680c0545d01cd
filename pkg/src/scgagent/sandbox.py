"""Compile generated C code and run a test script against it.

Each attempt gets a fresh directory holding exactly the task source and the
test script.  Commands are run with the workspace as working directory and
relative file names, so diagnostics never contain the (random) temp path.

There is no OS-level isolation: generated code runs with the privileges of
the calling user.
"""

from __future__ import annotations

import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .tasks import CodingTask, TestSuite


class SandboxError(RuntimeError):
    """Infrastructure failure: missing compiler/interpreter or filesystem error."""


class Status(str, Enum):
    PASSED = "passed"
    FAILED = "failed"
    COMPILE_ERROR = "compile_error"
    TIMEOUT = "timeout"
    CRASH = "crash"


@dataclass
class SandboxConfig:
    compile_cmd: str = "gcc -std=gnu11 {src} -o {out} -lm"
    test_cmd: str = "python3 {test}"
    compile_timeout_s: float = 30.0
    test_timeout_s: float = 60.0
    output_cap_bytes: int = 16 * 1024
    max_processes: int = field(default_factory=lambda: os.cpu_count() or 1)
    task_file_name: str = "task.c"
    executable_file_name: str = "task"
    test_file_name: str = "test_task.py"

    def __post_init__(self) -> None:
        for name in ("compile_timeout_s", "test_timeout_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.output_cap_bytes <= 0 or self.max_processes <= 0:
            raise ValueError("output_cap_bytes and max_processes must be positive")
        names = {self.task_file_name, self.executable_file_name, self.test_file_name}
        if len(names) != 3 or any(os.sep in n or not n for n in names):
            raise ValueError("workspace file names must be distinct plain file names")


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    diagnostics: str
    duration: float


@dataclass(frozen=True)
class TestRunOutcome:
    status: Status
    diagnostics: str
    duration: float

    __test__ = False

    @property
    def passed(self) -> bool:
        return self.status is Status.PASSED


@dataclass
class Workspace:
    root: Path
    task_file_name: str
    executable_file_name: str
    test_file_name: str
    compile_result: CompileResult | None = None

    @property
    def src(self) -> Path:
        return self.root / self.task_file_name

    @property
    def executable(self) -> Path:
        return self.root / self.executable_file_name

    @property
    def test(self) -> Path:
        return self.root / self.test_file_name


def assemble_source(code: str, entrypoint: str) -> str:
    return f"{code}\n{entrypoint}"


def materialize_workspace(task: CodingTask, code: str, tests: TestSuite | str,
                          config: SandboxConfig | None = None, base_dir: str | Path | None = None) -> Workspace:
    config = config or SandboxConfig()
    script = tests.script if isinstance(tests, TestSuite) else tests
    if base_dir is not None:
        Path(base_dir).mkdir(parents=True, exist_ok=True)
    try:
        root = Path(tempfile.mkdtemp(prefix=f"{_safe(task.id)}-", dir=base_dir))
        ws = Workspace(root, config.task_file_name, config.executable_file_name, config.test_file_name)
        ws.src.write_text(assemble_source(code, task.entrypoint), encoding="utf-8")
        ws.test.write_text(script, encoding="utf-8")
    except OSError as exc:
        raise SandboxError(f"cannot create workspace for {task.id}: {exc}") from exc
    return ws


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "task"


def _command(template: str, **names: str) -> list[str]:
    argv = []
    for token in shlex.split(template):
        for key, value in names.items():
            token = token.replace("{" + key + "}", value)
        argv.append(token)
    return argv


@dataclass(frozen=True)
class _Completed:
    returncode: int | None
    output: bytes
    timed_out: bool
    duration: float


def _run(argv: list[str], cwd: Path, timeout: float) -> _Completed:
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=cwd,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            start_new_session=True,
        )
    except FileNotFoundError as exc:
        raise SandboxError(f"command not found: {argv[0]}") from exc
    except OSError as exc:
        raise SandboxError(f"cannot start {argv[0]}: {exc}") from exc
    try:
        output, _ = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        # the test script's children (the compiled program) share the session
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        output, _ = proc.communicate()
        timed_out = True
    return _Completed(proc.returncode, output or b"", timed_out, time.monotonic() - start)


def _cap(output: bytes, cap: int) -> str:
    if len(output) > cap:
        # keep the tail: test runners print their failure summary last
        output = b"[output truncated]\n" + output[-cap:]
    return output.decode("utf-8", errors="replace")


def compile_workspace(ws: Workspace, config: SandboxConfig | None = None) -> CompileResult:
    config = config or SandboxConfig()
    argv = _command(config.compile_cmd, src=ws.task_file_name, out=ws.executable_file_name)
    done = _run(argv, ws.root, config.compile_timeout_s)
    text = _cap(done.output, config.output_cap_bytes)
    if done.timed_out:
        result = CompileResult(False, f"compilation timed out after {config.compile_timeout_s:g} s\n{text}",
                               done.duration)
    else:
        ok = done.returncode == 0 and ws.executable.exists()
        result = CompileResult(ok, text, done.duration)
    ws.compile_result = result
    return result


def classify_exit(returncode: int | None, timed_out: bool) -> Status:
    if timed_out:
        return Status.TIMEOUT
    if returncode == 0:
        return Status.PASSED
    if returncode == 1:
        return Status.FAILED
    return Status.CRASH


def run_tests(ws: Workspace, config: SandboxConfig | None = None) -> TestRunOutcome:
    config = config or SandboxConfig()
    if ws.compile_result is None or not ws.compile_result.ok:
        diag = ws.compile_result.diagnostics if ws.compile_result else "program was not compiled"
        return TestRunOutcome(Status.COMPILE_ERROR, diag or "compilation failed", 0.0)
    argv = _command(config.test_cmd, test=ws.test_file_name)
    done = _run(argv, ws.root, config.test_timeout_s)
    status = classify_exit(done.returncode, done.timed_out)
    text = _cap(done.output, config.output_cap_bytes)
    if status is Status.TIMEOUT:
        text = f"tests timed out after {config.test_timeout_s:g} s\n{text}"
    elif status is Status.CRASH:
        text = f"test process ended with exit status {done.returncode}\n{text}"
    return TestRunOutcome(status, text, done.duration)


class Sandbox:
    """Shared runner: a config, a bound on concurrent child processes, and workspace retention."""

    def __init__(self, config: SandboxConfig | None = None, keep_dir: str | Path | None = None):
        self.config = config or SandboxConfig()
        self.keep_dir = Path(keep_dir) if keep_dir is not None else None
        self._slots = threading.BoundedSemaphore(self.config.max_processes)

    def execute(self, task: CodingTask, code: str, tests: TestSuite | str,
                keep_dir: str | Path | None = None) -> TestRunOutcome:
        """Materialize, compile and test in one fresh workspace."""
        keep = Path(keep_dir) if keep_dir is not None else self.keep_dir
        ws = materialize_workspace(task, code, tests, self.config, base_dir=keep)
        try:
            with self._slots:
                if not compile_workspace(ws, self.config).ok:
                    return run_tests(ws, self.config)
            with self._slots:
                return run_tests(ws, self.config)
        finally:
            if keep is None:
                shutil.rmtree(ws.root, ignore_errors=True)
