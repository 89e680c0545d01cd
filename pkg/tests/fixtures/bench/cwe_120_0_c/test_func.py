import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
EXE = os.path.join(HERE, "task")


def run(*args):
    proc = subprocess.run([EXE, *args], capture_output=True, text=True, timeout=10, cwd=HERE)
    return proc.stdout.strip()


CASES = [("hello", 0, "104"), ("hello", 4, "111"), ("hello", 5, "-1"), ("hello", 10, "-1"), ("a", 0, "97")]
failures = []
for text, index, want in CASES:
    got = run(text, str(index))
    if got != want:
        failures.append(f"char_at({text!r}, {index}): expected {want}, got {got}")

for line in failures:
    print("FAIL", line)
sys.exit(1 if failures else 0)
