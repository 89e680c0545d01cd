"""Prompt templates for every workflow stage and parsers for the model's replies.

Templates live in ``templates/<stage>.txt`` and use ``{placeholder}`` syntax.
Substitution is a single pass over the template, so braces inside bound
values (C code, test scripts) are never re-interpreted.
"""

from __future__ import annotations

import re
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .guidelines import CweId

SECURITY_REMINDER = "Your code should be secure and should NOT contain any vulnerabilities."


class Stage(str, Enum):
    GEN_CODE = "gen_code"
    GEN_TESTS = "gen_tests"
    PREDICT_CWE = "predict_cwe"
    CHECK_RELEVANCE = "check_relevance"
    GUIDED_MODIFY = "guided_modify"
    ARBITRATION = "arbitration"
    REVISE_CODE = "revise_code"
    CWE_DESC_CHECK = "cwe_desc_check"
    CWE_DESC_MODIFY = "cwe_desc_modify"

    def __str__(self) -> str:
        return self.value


# stages whose output is code or a test script; the rest are decisions
GENERATIVE_STAGES = frozenset(
    {Stage.GEN_CODE, Stage.GEN_TESTS, Stage.GUIDED_MODIFY, Stage.REVISE_CODE, Stage.CWE_DESC_MODIFY}
)

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


class PromptError(ValueError):
    """A template could not be rendered."""


class ParseError(ValueError):
    """A model reply did not contain what the stage asked for."""


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = resources.files("scgagent").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def placeholders(stage: Stage | str) -> list[str]:
    """Placeholder names the stage's template demands, in order of first use."""
    seen: list[str] = []
    for name in _PLACEHOLDER.findall(load_template(str(stage))):
        if name not in seen:
            seen.append(name)
    return seen


def _substitute(template: str, bindings: Mapping[str, str]) -> str:
    def replace(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in bindings:
            raise PromptError(f"missing binding for placeholder {{{name}}}")
        return bindings[name]

    return _PLACEHOLDER.sub(replace, template)


def render_task_prompt(code_stub: str, security_reminder: bool) -> str:
    """The benchmark's own generation prompt (docstring + signature in a C block)."""
    reminder = SECURITY_REMINDER + " " if security_reminder else ""
    return _substitute(load_template("task_prompt"), {"security_reminder": reminder, "code_stub": code_stub})


def render_prompt(stage: Stage | str, bindings: Mapping[str, str], security_reminder: bool = False) -> str:
    """Render ``stage`` with ``bindings``.

    For ``gen_code`` the ``task_description`` binding is the task's code stub;
    it is wrapped in the benchmark generation prompt, with the security
    reminder sentence included iff ``security_reminder``.  The flag is
    ignored by every other stage.
    """
    stage = Stage(stage)
    if stage is Stage.GEN_CODE:
        if "task_description" not in bindings:
            raise PromptError("missing binding for placeholder {task_description}")
        bindings = dict(bindings)
        bindings["task_description"] = render_task_prompt(bindings["task_description"], security_reminder)
    return _substitute(load_template(stage.value), bindings)


_FENCE = re.compile(r"^[ \t]*```[^\n`]*\n(.*?)^[ \t]*```[ \t]*$", re.DOTALL | re.MULTILINE)


def extract_code_block(text: str) -> str:
    """Contents of the last fenced block in ``text``, language tag dropped."""
    blocks = _FENCE.findall(text)
    if not blocks:
        raise ParseError("no fenced code block in response")
    lines = blocks[-1].split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("fenced code block is empty")
    return "\n".join(lines)


_YES = re.compile(r"\byes\b", re.IGNORECASE)
_NO = re.compile(r"\bno\b", re.IGNORECASE)


def extract_yes_no(text: str) -> bool:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ParseError("empty response, expected a firm yes or no")
    last = lines[-1]
    has_yes, has_no = bool(_YES.search(last)), bool(_NO.search(last))
    if has_yes == has_no:
        raise ParseError(f"undecidable final line: {last.strip()!r}")
    return has_yes


_CWE_TOKEN = re.compile(r"\bCWE-(\d+)\b", re.IGNORECASE)


def extract_cwe_list(text: str) -> list[CweId]:
    found: list[CweId] = []
    for digits in _CWE_TOKEN.findall(text):
        number = int(digits)
        if number > 0 and all(c.number != number for c in found):
            found.append(CweId(number))
    return found
