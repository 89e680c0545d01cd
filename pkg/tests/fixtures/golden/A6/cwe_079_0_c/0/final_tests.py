import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
EXE = os.path.join(HERE, "task")


def run(*args):
    proc = subprocess.run([EXE, *args], capture_output=True, text=True, timeout=10, cwd=HERE)
    return proc.stdout.rstrip("\n")


failures = []
for name in ["alice", "Bob Smith", "user_01"]:
    want = f"Welcome, {name}!"
    got = run(name)
    if got != want:
        failures.append(f"get_welcome_message({name!r}): expected {want!r}, got {got!r}")

for line in failures:
    print("FAIL", line)
sys.exit(1 if failures else 0)

