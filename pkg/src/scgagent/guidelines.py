"""Secure coding guideline database keyed by CWE."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

_CWE_TEXT = re.compile(r"^\s*CWE-(\d+)\s*$", re.IGNORECASE)


class GuidelineError(ValueError):
    """Malformed guideline file or record."""


@dataclass(frozen=True)
class CweId:
    number: int
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if isinstance(self.number, bool) or not isinstance(self.number, int) or self.number <= 0:
            raise ValueError(f"CWE number must be a positive integer, got {self.number!r}")

    def __str__(self) -> str:
        return f"CWE-{self.number}"

    @classmethod
    def parse(cls, value: "str | int | CweId") -> "CweId":
        if isinstance(value, CweId):
            return value
        if isinstance(value, int):
            return cls(value)
        match = _CWE_TEXT.match(value)
        if match is None:
            if value.strip().isdigit():
                return cls(int(value))
            raise ValueError(f"not a CWE identifier: {value!r}")
        return cls(int(match.group(1)))


@dataclass(frozen=True)
class Guideline:
    id: str
    cwes: tuple[CweId, ...]
    text: str
    scope: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise GuidelineError(f"guideline {self.id!r} has empty text")
        if not self.cwes:
            raise GuidelineError(f"guideline {self.id!r} has no CWEs")

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {"id": self.id, "cwes": [c.number for c in self.cwes], "text": self.text}
        if self.scope is not None:
            record["scope"] = self.scope
        return record


@dataclass(frozen=True)
class GuidelineSet:
    guidelines: tuple[Guideline, ...] = ()

    def __post_init__(self) -> None:
        index: dict[int, list[str]] = {}
        by_id: dict[str, Guideline] = {}
        for g in self.guidelines:
            if g.id in by_id:
                raise GuidelineError(f"duplicate guideline id {g.id!r}")
            by_id[g.id] = g
            for cwe in g.cwes:
                ids = index.setdefault(cwe.number, [])
                if g.id not in ids:
                    ids.append(g.id)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_index", {k: tuple(v) for k, v in index.items()})

    def __len__(self) -> int:
        return len(self.guidelines)

    def __iter__(self):
        return iter(self.guidelines)

    @property
    def index(self) -> dict[int, tuple[str, ...]]:
        """CWE number -> guideline ids, in file order."""
        return dict(self._index)

    def get(self, guideline_id: str) -> Guideline:
        return self._by_id[guideline_id]

    def lookup(self, cwes: Iterable[CweId | int | str]) -> list[Guideline]:
        return lookup_guidelines(cwes, self)


def lookup_guidelines(cwes: Iterable[CweId | int | str], gset: GuidelineSet) -> list[Guideline]:
    """Guidelines for ``cwes``: grouped by first matching query CWE, file order within a group.

    Unknown CWEs contribute nothing and a guideline matched by several
    CWEs is returned once.
    """
    seen: set[str] = set()
    out: list[Guideline] = []
    for cwe in cwes:
        for gid in gset._index.get(CweId.parse(cwe).number, ()):
            if gid not in seen:
                seen.add(gid)
                out.append(gset.get(gid))
    return out


def _guideline_from_record(record: Any, position: int) -> Guideline:
    where = f"record {position}"
    if not isinstance(record, dict):
        raise GuidelineError(f"{where}: expected an object, got {type(record).__name__}")
    unknown = set(record) - {"id", "cwes", "text", "scope", "origin"}
    if unknown:
        raise GuidelineError(f"{where}: unknown fields {sorted(unknown)}")
    gid = record.get("id")
    if not isinstance(gid, str) or not gid:
        raise GuidelineError(f"{where}: 'id' must be a non-empty string")
    where = f"record {position} (id {gid!r})"
    raw_cwes = record.get("cwes")
    if not isinstance(raw_cwes, list) or not raw_cwes:
        raise GuidelineError(f"{where}: 'cwes' must be a non-empty list")
    try:
        cwes = tuple(dict.fromkeys(CweId.parse(c) for c in raw_cwes))
    except (ValueError, TypeError) as exc:
        raise GuidelineError(f"{where}: {exc}") from None
    text = record.get("text")
    if not isinstance(text, str) or not text.strip():
        raise GuidelineError(f"{where}: 'text' must be a non-empty string")
    scope = record.get("scope")
    if scope is not None and not isinstance(scope, str):
        raise GuidelineError(f"{where}: 'scope' must be a string")
    return Guideline(id=gid, cwes=cwes, text=text, scope=scope)


def parse_guidelines(records: Sequence[Any]) -> GuidelineSet:
    guidelines = []
    seen: dict[str, int] = {}
    for position, record in enumerate(records, start=1):
        g = _guideline_from_record(record, position)
        if g.id in seen:
            raise GuidelineError(f"record {position}: duplicate id {g.id!r} (first defined in record {seen[g.id]})")
        seen[g.id] = position
        guidelines.append(g)
    return GuidelineSet(tuple(guidelines))


def load_guidelines(source: str | Path) -> GuidelineSet:
    """Load a JSON array of ``{id, cwes, text, scope?}`` records.

    An empty file is an empty set.
    """
    path = Path(source)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return GuidelineSet()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GuidelineError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise GuidelineError(f"{path}: top level must be a JSON array")
    try:
        return parse_guidelines(data)
    except GuidelineError as exc:
        raise GuidelineError(f"{path}: {exc}") from None


def default_guidelines_path() -> Path:
    return Path(str(resources.files("scgagent").joinpath("data", "guidelines.json")))


@lru_cache(maxsize=1)
def default_guidelines() -> GuidelineSet:
    return load_guidelines(default_guidelines_path())


def lint_guidelines(source: str | Path) -> list[str]:
    """Problems found in a guideline file; empty when it is valid."""
    try:
        gset = load_guidelines(source)
    except (GuidelineError, OSError) as exc:
        return [str(exc)]
    problems = []
    texts: dict[str, str] = {}
    for g in gset:
        key = " ".join(g.text.split()).lower()
        if key in texts:
            problems.append(f"guideline {g.id!r} repeats the text of {texts[key]!r}")
        texts.setdefault(key, g.id)
    return problems


@lru_cache(maxsize=1)
def _cwe_names() -> dict[int, str]:
    raw = json.loads(resources.files("scgagent").joinpath("data", "cwe_names.json").read_text(encoding="utf-8"))
    return {int(k): v for k, v in raw.items()}


def cwe_name(cwe: CweId | int) -> str:
    number = cwe.number if isinstance(cwe, CweId) else int(cwe)
    return _cwe_names().get(number, "")


def describe_cwe(cwe: CweId | int) -> str:
    """``CWE-<n>: <official name>``, or just ``CWE-<n>`` when the name is not catalogued."""
    cwe = CweId.parse(cwe)
    name = cwe.name or cwe_name(cwe)
    return f"{cwe}: {name}" if name else str(cwe)
