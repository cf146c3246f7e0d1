"""Run settings: defaults, optional YAML file, explicit overrides.

Precedence is overrides > file > defaults. The file is a flat YAML
mapping using the same names as the Settings fields; unknown names are
rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from .llm_gateway import BudgetConfig, RetryConfig
from .orchestrator import PipelineConfig, default_clock


@dataclass(frozen=True)
class Settings:
    model: str = "gpt-4.1-mini"
    backend: str = "mock"
    mock_script: str | None = None
    workers: int = 1
    temperature: float = 0.001
    validation_window: int = 0
    context_window: int = 1
    include_figure_captions: bool = False
    repair_stages: tuple[str, ...] | None = None
    budget_base_tokens: int = 256
    budget_alpha: float = 0.5
    budget_beta: int = 48
    budget_min_output: int = 256
    retry_max_attempts: int = 5
    retry_base_delay: float = 0.5
    retry_max_delay: float = 8.0
    retry_jitter: float = 0.25

    def budget(self) -> BudgetConfig:
        return BudgetConfig(
            base_tokens=self.budget_base_tokens,
            alpha=self.budget_alpha,
            beta=self.budget_beta,
            min_output=self.budget_min_output,
        )

    def retry(self) -> RetryConfig:
        return RetryConfig(
            max_attempts=self.retry_max_attempts,
            base_delay=self.retry_base_delay,
            max_delay=self.retry_max_delay,
            jitter=self.retry_jitter,
        )

    def pipeline(self, clock=default_clock) -> PipelineConfig:
        return PipelineConfig(
            model=self.model,
            budget=self.budget(),
            temperature=self.temperature,
            validation_window=self.validation_window,
            context_window=self.context_window,
            include_figure_captions=self.include_figure_captions,
            repair_stages=self.repair_stages,
            clock=clock,
        )


_FIELD_NAMES = {f.name for f in fields(Settings)}


def load_settings(path: str | Path | None = None, **overrides) -> Settings:
    """Build Settings from defaults, an optional YAML file, and overrides.

    Override values of None mean "not set" and are ignored, so CLI flags
    can be passed through unconditionally.
    """
    settings = Settings()
    if path is not None:
        payload = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(payload, dict):
            raise ValueError(f"{path}: settings file must be a mapping")
        unknown = sorted(set(payload) - _FIELD_NAMES)
        if unknown:
            raise ValueError(f"{path}: unknown setting(s) {unknown}")
        payload = _coerce(payload)
        settings = replace(settings, **payload)
    cleaned = _coerce({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(cleaned) - _FIELD_NAMES)
    if unknown:
        raise ValueError(f"unknown setting(s) {unknown}")
    return replace(settings, **cleaned)


def _coerce(payload: dict) -> dict:
    out = dict(payload)
    stages = out.get("repair_stages")
    if stages is not None:
        if isinstance(stages, str):
            stages = [s.strip() for s in stages.split(",") if s.strip()]
        out["repair_stages"] = tuple(stages)
    return out
