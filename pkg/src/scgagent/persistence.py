"""Run-directory layout and atomic file writes.

::

    <run_dir>/config.json
    <run_dir>/report.json, report.txt
    <run_dir>/cassettes/<task_id>/<sample_idx>.jsonl     (record mode)
    <run_dir>/<task_id>/<sample_idx>/transcript.jsonl
    <run_dir>/<task_id>/<sample_idx>/final_code.c
    <run_dir>/<task_id>/<sample_idx>/final_tests.py
    <run_dir>/<task_id>/<sample_idx>/verdict.json
    <run_dir>/<task_id>/<sample_idx>/workspaces/          (--keep-workspaces)
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

from .workflow import WorkflowTranscript

TRANSCRIPT = "transcript.jsonl"
FINAL_CODE = "final_code.c"
FINAL_TESTS = "final_tests.py"
VERDICT = "verdict.json"


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def write_json(path: str | Path, data: Any) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> Path:
    return atomic_write_text(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def sample_dir(run_dir: str | Path, task_id: str, sample_idx: int) -> Path:
    return Path(run_dir) / task_id / str(sample_idx)


def cassette_file(cassette_root: str | Path, task_id: str, sample_idx: int) -> Path:
    return Path(cassette_root) / task_id / f"{sample_idx}.jsonl"


def persist_transcript(transcript: WorkflowTranscript, run_dir: str | Path) -> Path:
    """Write the transcript and final artifacts; returns the transcript path."""
    out = sample_dir(run_dir, transcript.task_id, transcript.sample_idx)
    if transcript.final_code is not None:
        atomic_write_text(out / FINAL_CODE, transcript.final_code + "\n")
    if transcript.final_tests is not None:
        atomic_write_text(out / FINAL_TESTS, transcript.final_tests + "\n")
    return write_jsonl(out / TRANSCRIPT, transcript.to_records())


def load_transcript(path: str | Path) -> WorkflowTranscript:
    return WorkflowTranscript.from_records(read_jsonl(path))


def iter_sample_dirs(run_dir: str | Path) -> list[Path]:
    """Every ``<task>/<sample>`` directory holding a transcript, sorted."""
    run_dir = Path(run_dir)
    found = [p.parent for p in run_dir.glob(f"*/*/{TRANSCRIPT}") if p.parent.parent.name != "cassettes"]
    return sorted(found, key=lambda p: (p.parent.name, int(p.name) if p.name.isdigit() else p.name))
