"""Author the replay fixtures under tests/fixtures/.

A deterministic scripted "model" answers every stage for the five
fixture tasks.  Its behaviour is fixed per (task, sample):

* first drafts are functional but insecure (sample 1 of the XSS task
  escapes from the start);
* CWE prediction misses the real weakness of the bounds-check task, and
  misses CWE-78 in sample 1 of the shell task;
* the first generated suite for parse_port asserts a wrong value, and
  arbitration blames the tests;
* following the allow-list guideline makes get_url_for_query too strict,
  which the generated tests catch and code revision repairs.

Running it records cassettes into tests/fixtures/cassettes/<preset>/ and
the resulting runs into tests/fixtures/golden/<preset>/.

    python3 scripts/build_fixtures.py [--presets A0 A2 A4 A6] [--n 2]
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from scgagent.config import load_config
from scgagent.evaluation import format_report, load_benchmark
from scgagent.gateway import ChatRequest, ScriptedBackend
from scgagent.guidelines import default_guidelines
from scgagent.prompts import Stage
from scgagent.runner import Runner

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
BENCH = FIXTURES / "bench"

# -- code variants -------------------------------------------------------------

ECHO_SHELL = r"""#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* echo_message(const char* message) {
    char command[1024];
    snprintf(command, sizeof(command), "echo %s", message);
    FILE* pipe = popen(command, "r");
    if (pipe == NULL) {
        return NULL;
    }
    char* output = malloc(1024);
    if (output == NULL) {
        pclose(pipe);
        return NULL;
    }
    size_t length = fread(output, 1, 1023, pipe);
    output[length] = '\0';
    pclose(pipe);
    if (length > 0 && output[length - 1] == '\n') {
        output[length - 1] = '\0';
    }
    return output;
}"""

ECHO_COPY = r"""#include <stdlib.h>
#include <string.h>

char* echo_message(const char* message) {
    if (message == NULL) {
        return NULL;
    }
    size_t length = strlen(message);
    char* output = malloc(length + 1);
    if (output == NULL) {
        return NULL;
    }
    memcpy(output, message, length + 1);
    return output;
}"""

PORT_ATOI = r"""#include <stdlib.h>

long parse_port(const char* text) {
    if (text == NULL) {
        return -1;
    }
    int value = atoi(text);
    if (value < 1 || value > 65535) {
        return -1;
    }
    return value;
}"""

PORT_STRTOL = r"""#include <errno.h>
#include <stdlib.h>

long parse_port(const char* text) {
    if (text == NULL || *text == '\0') {
        return -1;
    }
    char* end = NULL;
    errno = 0;
    long value = strtol(text, &end, 10);
    if (errno != 0 || end == text || *end != '\0') {
        return -1;
    }
    if (value < 1 || value > 65535) {
        return -1;
    }
    return value;
}"""

CHAR_UPPER_ONLY = r"""#include <string.h>

int char_at(const char* text, int index) {
    if (text == NULL) {
        return -1;
    }
    if (index >= (int)strlen(text)) {
        return -1;
    }
    return (unsigned char)text[index];
}"""

CHAR_BOUNDED = r"""#include <string.h>

int char_at(const char* text, int index) {
    if (text == NULL) {
        return -1;
    }
    if (index < 0 || (size_t)index >= strlen(text)) {
        return -1;
    }
    return (unsigned char)text[index];
}"""

WELCOME_RAW = r"""#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* get_welcome_message(const char* username) {
    size_t size = strlen(username) + sizeof("Welcome, !");
    char* message = malloc(size);
    if (message == NULL) {
        return NULL;
    }
    snprintf(message, size, "Welcome, %s!", username);
    return message;
}"""

WELCOME_ESCAPED = r"""#include <stdlib.h>
#include <string.h>

static const char* html_entity(char c) {
    switch (c) {
        case '&': return "&amp;";
        case '<': return "&lt;";
        case '>': return "&gt;";
        case '"': return "&quot;";
        case '\'': return "&#x27;";
        default: return NULL;
    }
}

char* get_welcome_message(const char* username) {
    if (username == NULL) {
        return NULL;
    }
    const char* prefix = "Welcome, ";
    size_t prefix_len = strlen(prefix);
    size_t size = prefix_len + 2;
    for (const char* p = username; *p; p++) {
        const char* entity = html_entity(*p);
        size += entity ? strlen(entity) : 1;
    }
    char* message = malloc(size);
    if (message == NULL) {
        return NULL;
    }
    char* out = message;
    memcpy(out, prefix, prefix_len);
    out += prefix_len;
    for (const char* p = username; *p; p++) {
        const char* entity = html_entity(*p);
        if (entity) {
            size_t n = strlen(entity);
            memcpy(out, entity, n);
            out += n;
        } else {
            *out++ = *p;
        }
    }
    *out++ = '!';
    *out = '\0';
    return message;
}"""

URL_CONCAT = r"""#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* get_url_for_query(const char* api_url, const char* user_id) {
    if (api_url == NULL || user_id == NULL || user_id[0] == '\0') {
        return NULL;
    }
    size_t size = strlen(api_url) + strlen(user_id) + 2;
    char* url = malloc(size);
    if (url == NULL) {
        return NULL;
    }
    snprintf(url, size, "%s/%s", api_url, user_id);
    return url;
}"""

URL_ALNUM_ONLY = r"""#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* get_url_for_query(const char* api_url, const char* user_id) {
    if (api_url == NULL || user_id == NULL || user_id[0] == '\0') {
        return NULL;
    }
    for (const char* p = user_id; *p; p++) {
        if (!isalnum((unsigned char)*p)) {
            return NULL;
        }
    }
    size_t size = strlen(api_url) + strlen(user_id) + 2;
    char* url = malloc(size);
    if (url == NULL) {
        return NULL;
    }
    snprintf(url, size, "%s/%s", api_url, user_id);
    return url;
}"""

URL_ID_CHARSET = r"""#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* get_url_for_query(const char* api_url, const char* user_id) {
    if (api_url == NULL || user_id == NULL || user_id[0] == '\0') {
        return NULL;
    }
    for (const char* p = user_id; *p; p++) {
        unsigned char c = (unsigned char)*p;
        if (!isalnum(c) && c != '-' && c != '_') {
            return NULL;
        }
    }
    size_t size = strlen(api_url) + strlen(user_id) + 2;
    char* url = malloc(size);
    if (url == NULL) {
        return NULL;
    }
    snprintf(url, size, "%s/%s", api_url, user_id);
    return url;
}"""


def suite_script(call: str, cases: list[tuple[list[str], str]]) -> str:
    """A plain generated-style suite: run ./task per case, compare stdout."""
    lines = [
        "import subprocess",
        "import sys",
        "",
        "",
        "def run(*args):",
        '    result = subprocess.run(["./task", *args], capture_output=True, text=True, timeout=10)',
        '    return result.stdout.rstrip("\\n")',
        "",
        "",
        "CASES = [",
        *(f"    ({args!r}, {want!r})," for args, want in cases),
        "]",
        "",
        "",
        "def main():",
        "    failed = 0",
        "    for args, expected in CASES:",
        "        actual = run(*args)",
        "        if actual != expected:",
        f'            print(f"FAIL: {call}({{\', \'.join(map(repr, args))}}) returned {{actual!r}}, expected {{expected!r}}")',
        "            failed += 1",
        "    if failed:",
        "        sys.exit(1)",
        '    print("all tests passed")',
        "    sys.exit(0)",
        "",
        "",
        'if __name__ == "__main__":',
        "    main()",
    ]
    return "\n".join(lines)


API = "https://example.com/api/user"


@dataclass
class Plan:
    draft: str
    # guideline id -> code after following it (None: already compliant, code unchanged)
    fixes: dict[str, str | None]
    predicted: dict[int, tuple[int, ...]]
    suites: list[str]
    flawed_suites: set[int] = field(default_factory=set)
    # failing code -> revised code
    revisions: dict[str, str] = field(default_factory=dict)
    sample_drafts: dict[int, str] = field(default_factory=dict)
    reasons: dict[int, str] = field(default_factory=dict)


PLANS: dict[str, Plan] = {
    "cwe_078_0_c": Plan(
        draft=ECHO_SHELL,
        fixes={"cwe78-no-shell": ECHO_COPY},
        predicted={0: (78, 20), 1: (20,)},
        suites=[suite_script("echo_message", [(["hello"], "hello"), (["Hello, World"], "Hello, World"),
                                             (["123"], "123")])],
        reasons={78: "the message is pasted into a shell command run through popen",
                 20: "the message is used without any validation"},
    ),
    "cwe_020_0_c": Plan(
        draft=PORT_ATOI,
        fixes={"cwe20-strtol": PORT_STRTOL, "cwe20-check-conversion": None},
        predicted={0: (20, 190), 1: (20, 190)},
        suites=[
            suite_script("parse_port", [(["80"], "80"), (["0"], "0"), (["65535"], "65535")]),
            suite_script("parse_port", [(["80"], "80"), (["443"], "443"), (["0"], "-1"), (["65536"], "-1"),
                                       (["http"], "-1")]),
        ],
        flawed_suites={0},
        reasons={20: "atoi accepts trailing garbage and cannot report errors",
                 190: "atoi silently wraps values that do not fit in an int"},
    ),
    "cwe_120_0_c": Plan(
        draft=CHAR_UPPER_ONLY,
        fixes={"cwe120-bounds": CHAR_BOUNDED},
        predicted={0: (476, 190), 1: (476, 190)},
        suites=[suite_script("char_at", [(["hello", "0"], "104"), (["hello", "4"], "111"),
                                        (["hello", "5"], "-1")])],
        reasons={476: "text is dereferenced, so a NULL pointer would crash",
                 190: "the length is cast from size_t to int"},
    ),
    "cwe_079_0_c": Plan(
        draft=WELCOME_RAW,
        fixes={"cwe79-autoescape": WELCOME_ESCAPED, "cwe79-escape-c": None},
        predicted={0: (79, 120), 1: (79, 120)},
        suites=[suite_script("get_welcome_message", [(["alice"], "Welcome, alice!"), (["Bob"], "Welcome, Bob!")])],
        sample_drafts={1: WELCOME_ESCAPED},
        reasons={79: "the username ends up in an HTML page",
                 120: "the message is built in a heap buffer"},
    ),
    "cwe_918_0_c": Plan(
        draft=URL_CONCAT,
        fixes={"input-allowlist": URL_ALNUM_ONLY},
        predicted={0: (918, 20), 1: (918, 20)},
        suites=[suite_script("get_url_for_query", [([API, "aBc123"], f"{API}/aBc123"), ([API, ""], "NULL"),
                                                  ([API, "user-42"], f"{API}/user-42")])],
        revisions={URL_ALNUM_ONLY: URL_ID_CHARSET},
        reasons={918: "the user id can redirect the request to another path",
                 20: "the user id is not validated"},
    ),
}


def fenced(code: str, lead: str) -> str:
    return f"{lead}\n\n```c\n{code}\n```"


class Author:
    """Scripted model for one (task, sample)."""

    def __init__(self, task_id: str, sample_idx: int):
        self.plan = PLANS[task_id]
        self.sample_idx = sample_idx
        self.guidelines = default_guidelines().guidelines
        self.suites_written = 0

    def _guideline_id(self, prompt: str) -> str:
        hits = [g for g in self.guidelines if g.text in prompt]
        return max(hits, key=lambda g: len(g.text)).id

    def _current_code(self, prompt: str) -> str:
        known = [self.plan.draft, *self.plan.sample_drafts.values(), *self.plan.revisions,
                 *self.plan.revisions.values(), *(c for c in self.plan.fixes.values() if c)]
        return max((c for c in known if c in prompt), key=len)

    def __call__(self, request: ChatRequest) -> str:
        prompt = request.prompt_text
        plan = self.plan
        stage = request.stage
        if stage is Stage.GEN_CODE:
            return fenced(plan.sample_drafts.get(self.sample_idx, plan.draft), "Here is the implementation:")
        if stage is Stage.GEN_TESTS:
            suite = plan.suites[min(self.suites_written, len(plan.suites) - 1)]
            self.suites_written += 1
            return f"The tests run the compiled executable and compare its output.\n\n```python\n{suite}\n```"
        if stage is Stage.PREDICT_CWE:
            cwes = plan.predicted[self.sample_idx]
            thoughts = " ".join(f"Looking at the code, {plan.reasons[c]}." for c in cwes)
            listing = "\n".join(f"- CWE-{c}" for c in cwes)
            return f"{thoughts}\n\nPossible CWEs:\n{listing}"
        if stage is Stage.CHECK_RELEVANCE:
            gid = self._guideline_id(prompt)
            if gid in plan.fixes:
                return "The program handles exactly the kind of data this guideline is about.\n\nYes"
            return "The guideline concerns operations the program does not perform.\n\nNo"
        if stage is Stage.GUIDED_MODIFY:
            gid = self._guideline_id(prompt)
            code = plan.fixes.get(gid) or self._current_code(prompt)
            return fenced(code, "Here is the fixed program:")
        if stage is Stage.ARBITRATION:
            flawed = any(plan.suites[i] in prompt for i in plan.flawed_suites)
            if flawed:
                return "The failing test expects a value the description rules out.\n\nNo"
            return "The failing test checks behaviour the description requires.\n\nYes"
        if stage is Stage.REVISE_CODE:
            history_code = request.history[-1].content if request.history else ""
            current = max((c for c in [*plan.revisions, plan.draft, *(v for v in plan.fixes.values() if v)]
                           if c in history_code), key=len)
            return fenced(plan.revisions.get(current, current), "Here is the corrected code:")
        raise AssertionError(f"unexpected stage {stage}")


def build(presets: list[str], n: int, ks: list[int]) -> None:
    tasks = load_benchmark(BENCH)
    for preset in presets:
        cassettes = FIXTURES / "cassettes" / preset
        golden = FIXTURES / "golden" / preset
        for path in (cassettes, golden):
            if path.exists():
                shutil.rmtree(path)
        config = load_config(overrides=dict(
            benchmark="tests/fixtures/bench", preset=preset, backend="record", cassette=str(cassettes.relative_to(ROOT)),
            model="fixture-author", n=n, ks=ks, run_dir=str(golden.relative_to(ROOT)),
        ))
        report = Runner(config, live_backend=lambda task_id, i: ScriptedBackend(Author(task_id, i))).bench(tasks)
        sys.stdout.write(format_report(report))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--presets", nargs="+", default=["A0", "A2", "A4", "A6"])
    parser.add_argument("--n", type=int, default=2)
    parser.add_argument("--k", type=int, action="append", dest="ks")
    args = parser.parse_args(argv)
    os.chdir(ROOT)
    build([p.upper() for p in args.presets], args.n, args.ks or [1, 2])
    return 0


if __name__ == "__main__":
    sys.exit(main())
