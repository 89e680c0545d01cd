from __future__ import annotations

import json
import shutil
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Iterable

import pytest

from scgagent.evaluation import load_benchmark
from scgagent.gateway import ChatRequest, Gateway, ScriptedBackend
from scgagent.guidelines import default_guidelines
from scgagent.prompts import Stage
from scgagent.sandbox import Sandbox, SandboxConfig
from scgagent.tasks import CodingTask

FIXTURES = Path(__file__).parent / "fixtures"
BENCH = FIXTURES / "bench"

requires_gcc = pytest.mark.skipif(shutil.which("gcc") is None, reason="gcc not installed")


@pytest.fixture(scope="session")
def bench_tasks() -> dict[str, CodingTask]:
    return {t.id: t for t in load_benchmark(BENCH)}


@pytest.fixture
def fast_sandbox() -> Sandbox:
    return Sandbox(SandboxConfig(compile_timeout_s=30, test_timeout_s=10))


@pytest.fixture(scope="session")
def shipped_guidelines():
    return default_guidelines()


def fenced(code: str, lang: str = "c") -> str:
    return f"Here it is:\n```{lang}\n{code}\n```"


class StageScript:
    """Responder keyed by stage; each stage gets a queue (the last answer repeats)."""

    def __init__(self, answers: dict[Stage, Iterable[str] | Callable[[ChatRequest], str]]):
        self.answers = {}
        for stage, value in answers.items():
            self.answers[Stage(stage)] = value if callable(value) else list(value)
        self.calls: list[Stage] = []

    def __call__(self, request: ChatRequest) -> str:
        self.calls.append(request.stage)
        value = self.answers.get(request.stage)
        if value is None:
            raise AssertionError(f"unscripted stage {request.stage.value}")
        if callable(value):
            return value(request)
        return value.pop(0) if len(value) > 1 else value[0]


def scripted_gateway(answers, max_retries: int = 2) -> tuple[Gateway, ScriptedBackend, StageScript]:
    script = StageScript(answers)
    backend = ScriptedBackend(script)
    return Gateway(backend, max_retries=max_retries), backend, script


class StubServer:
    """Loopback chat-completions endpoint; ``reply(payload) -> (status, body)``."""

    def __init__(self, reply):
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append(payload)
                stub.headers.append(dict(self.headers))
                status, body = reply(payload)
                data = json.dumps(body).encode() if not isinstance(body, bytes) else body
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.base_url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def completion(text: str, finish_reason: str = "stop") -> dict:
    return {
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": finish_reason}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15},
    }


@pytest.fixture
def stub_server():
    servers = []

    def start(reply):
        server = StubServer(reply)
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.close()


# -- acceptance reporting: one PASS/FAIL line per criterion ------------------------

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.skipped:
        _criteria.setdefault(number, (title, "SKIP"))
    elif report.failed:
        _criteria[number] = (title, "FAIL")
    elif report.when == "call":
        _criteria.setdefault(number, (title, "PASS"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {verdict:<4} {title}")
