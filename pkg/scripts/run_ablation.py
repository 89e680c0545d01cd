"""Replay the committed fixture cassettes for several presets and print a comparison table.

    python3 scripts/run_ablation.py                      # A0 A2 A4 A6 on the fixture benchmark
    python3 scripts/run_ablation.py --presets A0 A4 --out runs/ablation

With --backend live (and --model, SCG_API_KEY) the same loop runs against a real model.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from scgagent.config import load_config
from scgagent.evaluation import load_benchmark
from scgagent.runner import Runner

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--presets", nargs="+", default=["A0", "A2", "A4", "A6"])
    parser.add_argument("--benchmark", default=str(FIXTURES / "bench"))
    parser.add_argument("--cassettes", default=str(FIXTURES / "cassettes"),
                        help="directory holding one cassette set per preset")
    parser.add_argument("--backend", choices=["replay", "live", "record"], default="replay")
    parser.add_argument("--model", default="")
    parser.add_argument("--n", type=int, default=2)
    parser.add_argument("--out", default="runs/ablation")
    args = parser.parse_args(argv)

    tasks = load_benchmark(args.benchmark)
    ks = sorted({1, args.n})
    rows = []
    for preset in args.presets:
        config = load_config(overrides={
            "benchmark": args.benchmark, "preset": preset, "backend": args.backend, "model": args.model,
            "cassette": str(Path(args.cassettes) / preset) if args.backend != "live" else None,
            "n": args.n, "ks": ks, "run_dir": str(Path(args.out) / preset),
        })
        report = Runner(config).bench(tasks)
        agg = report.aggregate[1]
        recall = "-" if report.cwe_recall is None else f"{report.cwe_recall:.3f}"
        rows.append((preset, agg["func"], agg["func_sec"], agg.get("ratio"), recall))

    print(f"{'preset':<8}{'Func@1':>8}{'FuncSec@1':>11}{'ratio':>8}{'recall':>8}")
    for preset, func, func_sec, ratio, recall in rows:
        ratio_text = "-" if ratio is None else f"{ratio:.3f}"
        print(f"{preset:<8}{func:>8.3f}{func_sec:>11.3f}{ratio_text:>8}{recall:>8}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
