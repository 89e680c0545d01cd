"""Run configuration: defaults, overlaid by a JSON config file, overlaid by CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .gateway import LLMSettings
from .sandbox import SandboxConfig
from .workflow import PRESETS, WorkflowConfig

BACKENDS = ("live", "record", "replay")
_WORKFLOW_KEYS = {"guidance_mode", "revise_code", "revise_tests", "oracle_cwes", "oracle_unit_tests"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    benchmark: str | None = None
    preset: str = "A4"
    backend: str = "live"
    cassette: str | None = None
    model: str = ""
    base_url: str = "https://api.openai.com/v1"
    n: int = 5
    ks: list[int] = field(default_factory=lambda: [1, 5])
    max_att: int = 3
    security_reminder: bool = False
    run_dir: str = "runs/latest"
    keep_workspaces: bool = False
    parallel: int = 1
    requests_per_minute: float | None = None
    max_retries: int = 2
    require_confirmation: bool = False
    generation_temperature: float = 0.7
    decision_temperature: float = 0.0
    max_output_tokens: int = 4096
    guidelines: str | None = None
    # explicit workflow fields layered over the preset
    workflow: dict[str, Any] = field(default_factory=dict)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)

    def validate(self) -> "RunConfig":
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        if self.backend == "replay" and not self.cassette:
            raise ConfigError("replay backend needs a cassette directory (--cassette)")
        if self.preset.upper() not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        self.preset = self.preset.upper()
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not self.ks or min(self.ks) < 1:
            raise ConfigError("every k must be >= 1")
        if max(self.ks) > self.n:
            raise ConfigError(f"n={self.n} must be >= max(k)={max(self.ks)}")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        unknown = set(self.workflow) - _WORKFLOW_KEYS
        if unknown:
            raise ConfigError(f"unknown workflow keys {sorted(unknown)}")
        try:
            self.workflow_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def workflow_config(self) -> WorkflowConfig:
        return WorkflowConfig.preset(self.preset, max_att=self.max_att, security_reminder=self.security_reminder,
                                     **self.workflow)

    def llm_settings(self) -> LLMSettings:
        return LLMSettings(
            model_id=self.model,
            generation_temperature=self.generation_temperature,
            decision_temperature=self.decision_temperature,
            max_output_tokens=self.max_output_tokens,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["effective_workflow"] = self.workflow_config().to_dict()
        return data


def _merge(config: RunConfig, values: Mapping[str, Any], origin: str) -> None:
    names = {f.name for f in fields(RunConfig)}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        if key == "sandbox":
            if not isinstance(value, Mapping):
                raise ConfigError(f"{origin}: 'sandbox' must be an object")
            current = asdict(config.sandbox)
            bad = set(value) - set(current)
            if bad:
                raise ConfigError(f"{origin}: unknown sandbox keys {sorted(bad)}")
            try:
                config.sandbox = SandboxConfig(**{**current, **value})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{origin}: sandbox: {exc}") from None
        elif key == "workflow":
            config.workflow = {**config.workflow, **dict(value)}
        else:
            setattr(config, key, value)


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    config = RunConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        _merge(config, data, str(path))
    if overrides:
        _merge(config, {k: v for k, v in overrides.items() if v is not None}, "flags")
    return config.validate()
