"""Benchmark loading, reference-suite evaluation and Func@k / Func-Sec@k metrics.

Benchmark layout::

    <bench>/manifest.json          {"tasks": ["<task_id>", ...]}
    <bench>/<task_id>/description.txt   docstring comment shown to the model
    <bench>/<task_id>/signature.txt     function signature line
    <bench>/<task_id>/entrypoint.c      main() that drives the function
    <bench>/<task_id>/cwe.txt           ground-truth CWE, e.g. "CWE-78"
    <bench>/<task_id>/test_func.py      reference functionality suite
    <bench>/<task_id>/test_sec.py       reference security suite

Reference suites run exactly like generated ones: they sit next to the
compiled executable and must exit 0 when every test passes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from .guidelines import CweId
from .sandbox import Sandbox, Status
from .tasks import REFERENCE, CodingTask, TestSuite

MANIFEST = "manifest.json"
TASK_FILES = {
    "description": "description.txt",
    "signature": "signature.txt",
    "entrypoint": "entrypoint.c",
    "cwe": "cwe.txt",
    "func_tests": "test_func.py",
    "sec_tests": "test_sec.py",
}


class BenchmarkError(ValueError):
    pass


def load_task(task_dir: str | Path, task_id: str | None = None) -> CodingTask:
    task_dir = Path(task_dir)
    task_id = task_id or task_dir.name
    texts = {}
    for key, name in TASK_FILES.items():
        path = task_dir / name
        if not path.is_file():
            raise BenchmarkError(f"task {task_id}: missing {name}")
        texts[key] = path.read_text(encoding="utf-8")
    try:
        cwe = CweId.parse(texts["cwe"].strip())
    except ValueError as exc:
        raise BenchmarkError(f"task {task_id}: bad cwe.txt: {exc}") from None
    try:
        return CodingTask(
            id=task_id,
            description=texts["description"].rstrip("\n"),
            signature=texts["signature"].strip(),
            entrypoint=texts["entrypoint"],
            ground_truth_cwe=cwe,
            reference_func_tests=TestSuite(texts["func_tests"], REFERENCE),
            reference_sec_tests=TestSuite(texts["sec_tests"], REFERENCE),
        )
    except ValueError as exc:
        raise BenchmarkError(f"task {task_id}: {exc}") from None


def load_benchmark(path: str | Path) -> list[CodingTask]:
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.is_file():
        raise BenchmarkError(f"{path}: no {MANIFEST}")
    try:
        data = json.loads(manifest.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BenchmarkError(f"{manifest}: {exc}") from None
    ids = data.get("tasks") if isinstance(data, dict) else data
    if not isinstance(ids, list) or not all(isinstance(i, str) and i for i in ids):
        raise BenchmarkError(f"{manifest}: 'tasks' must be a list of task ids")
    seen = set()
    for task_id in ids:
        if task_id in seen:
            raise BenchmarkError(f"{manifest}: duplicate task id {task_id!r}")
        seen.add(task_id)
    return [load_task(path / task_id, task_id) for task_id in ids]


@dataclass(frozen=True)
class SampleVerdict:
    task_id: str
    sample_idx: int
    functional: bool
    secure: bool
    func_status: str = ""
    sec_status: str = ""

    @property
    def func_sec(self) -> bool:
        return self.functional and self.secure

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "sample_idx": self.sample_idx,
            "functional": self.functional,
            "secure": self.secure,
            "func_sec": self.func_sec,
            "func_status": self.func_status,
            "sec_status": self.sec_status,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SampleVerdict":
        return cls(data["task_id"], data["sample_idx"], data["functional"], data["secure"],
                   data.get("func_status", ""), data.get("sec_status", ""))


def evaluate_sample(task: CodingTask, code: str | None, sandbox: Sandbox, sample_idx: int = 0) -> SampleVerdict:
    """Run both reference suites against ``code``; both always run."""
    if task.reference_func_tests is None or task.reference_sec_tests is None:
        raise BenchmarkError(f"task {task.id}: reference suites are required for evaluation")
    if code is None or not code.strip():
        missing = Status.COMPILE_ERROR.value
        return SampleVerdict(task.id, sample_idx, False, False, missing, missing)
    func = sandbox.execute(task, code, task.reference_func_tests)
    sec = sandbox.execute(task, code, task.reference_sec_tests)
    return SampleVerdict(task.id, sample_idx, func.passed, sec.passed, func.status.value, sec.status.value)


def _pass_at_k_exact(n: int, c: int, k: int) -> Fraction:
    if n - c < k:
        return Fraction(1)
    miss = Fraction(1)
    for i in range(n - c + 1, n + 1):
        miss *= Fraction(i - k, i)
    return 1 - miss


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k: 1 - C(n-c, k) / C(n, k).

    Evaluated as the product 1 - prod_{i=n-c+1}^{n} (1 - k/i) in exact
    rational arithmetic, then rounded once.
    """
    for name, value in (("n", n), ("c", c), ("k", k)):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name} must be an integer")
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return float(_pass_at_k_exact(n, c, k))


@dataclass(frozen=True)
class PredictionRecord:
    task_id: str
    sample_idx: int
    predicted: tuple[int, ...]
    ground_truth: int | None


@dataclass
class MetricsReport:
    n: int
    ks: list[int]
    per_task: dict[str, dict[int, dict[str, float]]] = field(default_factory=dict)
    aggregate: dict[int, dict[str, float]] = field(default_factory=dict)
    cwe_recall: float | None = None
    mean_predicted_cwes: float | None = None
    label: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "n": self.n,
            "ks": list(self.ks),
            "aggregate": {str(k): v for k, v in self.aggregate.items()},
            "per_task": {t: {str(k): v for k, v in rows.items()} for t, rows in self.per_task.items()},
            "cwe_recall": self.cwe_recall,
            "mean_predicted_cwes": self.mean_predicted_cwes,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricsReport":
        return cls(
            n=data["n"],
            ks=list(data["ks"]),
            per_task={t: {int(k): dict(v) for k, v in rows.items()} for t, rows in data["per_task"].items()},
            aggregate={int(k): dict(v) for k, v in data["aggregate"].items()},
            cwe_recall=data.get("cwe_recall"),
            mean_predicted_cwes=data.get("mean_predicted_cwes"),
            label=data.get("label", ""),
        )


def _rates(func: float, func_sec: float) -> dict[str, float]:
    rates = {"func": func, "func_sec": func_sec}
    if func > 0:
        rates["ratio"] = func_sec / func
    return rates


def compute_report(
    verdicts: Iterable[SampleVerdict],
    ks: Sequence[int],
    predictions: Iterable[PredictionRecord] = (),
    label: str = "",
) -> MetricsReport:
    """Per-task pass@k for functionality and functionality+security, averaged over tasks."""
    by_task: dict[str, list[SampleVerdict]] = {}
    for v in verdicts:
        by_task.setdefault(v.task_id, []).append(v)
    if not by_task:
        raise ValueError("no verdicts")
    sizes = {len(vs) for vs in by_task.values()}
    if len(sizes) != 1:
        raise ValueError(f"inconsistent samples per task: {sorted(sizes)}")
    n = sizes.pop()
    ks = sorted(set(ks))
    if not ks or ks[0] < 1 or ks[-1] > n:
        raise ValueError(f"every k must satisfy 1 <= k <= n={n}, got {ks}")

    report = MetricsReport(n=n, ks=list(ks), label=label)
    for task_id in sorted(by_task):
        vs = by_task[task_id]
        c_func = sum(v.functional for v in vs)
        c_fs = sum(v.func_sec for v in vs)
        report.per_task[task_id] = {k: _rates(pass_at_k(n, c_func, k), pass_at_k(n, c_fs, k)) for k in ks}
    for k in ks:
        func = fmean(rows[k]["func"] for rows in report.per_task.values())
        func_sec = fmean(rows[k]["func_sec"] for rows in report.per_task.values())
        report.aggregate[k] = _rates(func, func_sec)

    scored = [p for p in predictions if p.ground_truth is not None]
    if scored:
        report.cwe_recall = sum(p.ground_truth in p.predicted for p in scored) / len(scored)
        report.mean_predicted_cwes = fmean(len(p.predicted) for p in scored)
    return report


def format_report(report: MetricsReport, per_task: bool = False) -> str:
    """Aligned text table: one row per k with Func, Func-Sec and Func-Sec/Func."""
    header = ("", "Func", "Func-Sec", "Func-Sec/Func")
    rows = []

    def row(name: str, rates: Mapping[str, float]) -> tuple[str, ...]:
        ratio = rates.get("ratio")
        return (name, f"{rates['func']:.3f}", f"{rates['func_sec']:.3f}", "-" if ratio is None else f"{ratio:.3f}")

    for k in report.ks:
        rows.append(row(f"Pass@{k}", report.aggregate[k]))
    if per_task:
        for task_id, rates in report.per_task.items():
            for k in report.ks:
                rows.append(row(f"{task_id} @{k}", rates[k]))
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(4)]
    lines = []
    if report.label:
        lines.append(f"{report.label} (n={report.n})")
    else:
        lines.append(f"n={report.n}")
    fmt = lambda r: "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths)))
    lines.append(fmt(header).rstrip())
    lines.extend(fmt(r) for r in rows)
    if report.cwe_recall is not None:
        lines.append(f"CWE recall {report.cwe_recall:.3f}, mean predicted CWEs {report.mean_predicted_cwes:.2f}")
    return "\n".join(lines) + "\n"
