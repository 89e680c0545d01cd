"""Command-line entry point.

Subcommands: run-task, bench, replay-verify, guidelines-lint.
Exit codes: 0 success, 1 usage or config error, 2 infrastructure failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evaluation import BenchmarkError, MetricsReport, SampleVerdict, compute_report, format_report, load_benchmark
from .gateway import GatewayError
from .guidelines import GuidelineError, default_guidelines_path, lint_guidelines
from .persistence import VERDICT, iter_sample_dirs, load_transcript
from .runner import Runner, predictions_from
from .sandbox import SandboxError

EXIT_OK, EXIT_USAGE, EXIT_INFRA = 0, 1, 2

log = logging.getLogger("scgagent")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--benchmark", help="benchmark directory (manifest.json + one folder per task)")
    p.add_argument("--preset", choices=["A0", "A1", "A2", "A3", "A4", "A5", "A6"], type=str.upper)
    p.add_argument("--backend", choices=["live", "record", "replay"])
    p.add_argument("--cassette", help="cassette directory (<task_id>/<sample_idx>.jsonl)")
    p.add_argument("--model", help="model id for the live backend")
    p.add_argument("--n", type=int, help="samples per task")
    p.add_argument("--k", type=int, action="append", dest="ks", help="k for pass@k (repeatable)")
    p.add_argument("--security-reminder", action="store_true", default=None,
                   help="add the security reminder sentence to the generation prompt")
    p.add_argument("--max-att", type=int, help="test executions per enforce-functionality call (default 3)")
    p.add_argument("--run-dir", help="output directory")
    p.add_argument("--keep-workspaces", action="store_true", default=None)
    p.add_argument("--parallel", type=int, help="concurrent samples")
    p.add_argument("--guidelines", help="guideline file (default: shipped database)")
    p.add_argument("--require-confirmation", action="store_true", default=None,
                   help="ask before executing model-generated code from a live model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scgagent", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-task", help="run the workflow on one task for n samples")
    p.add_argument("task_id")
    _add_run_flags(p)

    p = sub.add_parser("bench", help="run every benchmark task and write a metrics report")
    _add_run_flags(p)

    p = sub.add_parser("replay-verify", help="recompute a run's report from its persisted records")
    p.add_argument("run_dir")
    p.add_argument("--rerun", action="store_true",
                   help="also replay every sample from its cassette and compare transcripts")
    p.add_argument("--cassette", help="cassette directory (default: from the run's config)")

    p = sub.add_parser("guidelines-lint", help="validate a guideline file")
    p.add_argument("path", nargs="?", help="guideline JSON file (default: shipped database)")
    return parser


_FLAG_KEYS = ("benchmark", "preset", "backend", "cassette", "model", "n", "ks", "security_reminder", "max_att",
              "run_dir", "keep_workspaces", "parallel", "guidelines", "require_confirmation")


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, key) for key in _FLAG_KEYS}
    return load_config(args.config, overrides)


def _confirm(config: RunConfig) -> bool:
    if not config.require_confirmation or config.backend == "replay":
        return True
    sys.stderr.write("Model-generated C code and tests will run with your user privileges. Continue? [y/N] ")
    sys.stderr.flush()
    return sys.stdin.readline().strip().lower() in ("y", "yes")


def _tasks(config: RunConfig):
    if not config.benchmark:
        raise ConfigError("no benchmark given (--benchmark or 'benchmark' in the config file)")
    return load_benchmark(config.benchmark)


def cmd_run_task(args: argparse.Namespace) -> int:
    config = _config_from(args)
    tasks = {t.id: t for t in _tasks(config)}
    if args.task_id not in tasks:
        print(f"error: unknown task id {args.task_id!r}", file=sys.stderr)
        return EXIT_USAGE
    if not _confirm(config):
        return EXIT_USAGE
    runner = Runner(config)
    runner.write_config()
    results = runner.run_all([tasks[args.task_id]])
    failed = False
    for r in results:
        t = r.transcript
        line = f"{t.task_id}[{t.sample_idx}]"
        if t.error:
            failed = True
            line += f" error: {t.error}"
        elif r.verdict is not None:
            v = r.verdict
            line += f" functional={v.functional} secure={v.secure} func_sec={v.func_sec}"
        else:
            line += " done"
        print(line)
    return EXIT_INFRA if failed else EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from(args)
    tasks = _tasks(config)
    if not _confirm(config):
        return EXIT_USAGE
    report = Runner(config).bench(tasks)
    sys.stdout.write(format_report(report))
    return EXIT_OK


def _recompute(run_dir: Path, config: dict[str, Any]) -> MetricsReport:
    verdicts, transcripts = [], []
    for d in iter_sample_dirs(run_dir):
        transcripts.append(load_transcript(d / "transcript.jsonl"))
        if (d / VERDICT).is_file():
            verdicts.append(SampleVerdict.from_dict(json.loads((d / VERDICT).read_text(encoding="utf-8"))))
    truth = {}
    if config.get("benchmark"):
        truth = {t.id: t.ground_truth_cwe.number if t.ground_truth_cwe else None
                 for t in load_benchmark(config["benchmark"])}
    return compute_report(verdicts, config["ks"], predictions_from(transcripts, truth), label=config.get("preset", ""))


def cmd_replay_verify(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config_path = run_dir / "config.json"
    report_path = run_dir / "report.json"
    if not config_path.is_file() or not report_path.is_file():
        print(f"error: {run_dir} has no config.json/report.json", file=sys.stderr)
        return EXIT_USAGE
    stored_config = json.loads(config_path.read_text(encoding="utf-8"))
    stored = MetricsReport.from_dict(json.loads(report_path.read_text(encoding="utf-8")))
    recomputed = _recompute(run_dir, stored_config)
    ok = recomputed.to_dict() == stored.to_dict()
    print(f"report {'matches' if ok else 'DIFFERS from'} persisted records")
    if args.rerun:
        ok = _rerun(run_dir, stored_config, args.cassette) and ok
    return EXIT_OK if ok else EXIT_INFRA


def _rerun(run_dir: Path, stored_config: dict[str, Any], cassette: str | None) -> bool:
    fields = {k: v for k, v in stored_config.items() if k != "effective_workflow"}
    fields["backend"] = "replay"
    fields["cassette"] = cassette or fields.get("cassette") or str(run_dir / "cassettes")
    fields["keep_workspaces"] = False
    tasks = {t.id: t for t in load_benchmark(fields["benchmark"])}
    all_ok = True
    with tempfile.TemporaryDirectory() as scratch:
        fields["run_dir"] = scratch
        config = load_config(overrides=fields)
        runner = Runner(config)
        for d in iter_sample_dirs(run_dir):
            original = load_transcript(d / "transcript.jsonl")
            replayed = runner.run_sample(tasks[original.task_id], original.sample_idx)
            same = replayed.transcript == original
            if (d / VERDICT).is_file() and replayed.verdict is not None:
                stored = SampleVerdict.from_dict(json.loads((d / VERDICT).read_text(encoding="utf-8")))
                same = same and stored == replayed.verdict
            print(f"{original.task_id}[{original.sample_idx}] {'identical' if same else 'DIFFERS'}")
            all_ok = all_ok and same
    return all_ok


def cmd_guidelines_lint(args: argparse.Namespace) -> int:
    path = Path(args.path) if args.path else default_guidelines_path()
    problems = lint_guidelines(path)
    for problem in problems:
        print(problem)
    if problems:
        return EXIT_USAGE
    print(f"{path}: ok")
    return EXIT_OK


COMMANDS = {
    "run-task": cmd_run_task,
    "bench": cmd_bench,
    "replay-verify": cmd_replay_verify,
    "guidelines-lint": cmd_guidelines_lint,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, BenchmarkError, GuidelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GatewayError, SandboxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
