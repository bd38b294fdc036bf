"""Declarative run configuration.

A run is described by one YAML (or JSON) document with sections run, sources,
gateway, filter, classify, generate, verify, decontaminate, and reward. Every
field has a default except sources. Unknown keys are fatal: silently ignoring
a typo like "anwser_max_chars" would change run behavior invisibly.

Default model bindings route the judgment-light stages (classify, verify,
judge) to a cheaper model and the judgment-heavy stages (filter, generate,
distill) to a stronger one; all of them are plain config values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .types import SourceSpec


@dataclass
class RunSettings:
    seed: int = 0
    workers: int = 4
    out: str = "records.jsonl"
    run_dir: str = "run"


@dataclass
class GatewayConfig:
    mock_script: Optional[str] = None  # path; None means live HTTP provider
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    concurrency: int = 8
    rate_capacity: float = 0.0  # 0 disables rate limiting
    rate_refill_per_s: float = 0.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 60.0
    max_reasks: int = 2
    cache: bool = False
    pricing: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass
class FilterConfig:
    model: str = "gpt-4.1"
    temperature: float = 0.0
    max_output_tokens: int = 256
    min_chars: int = 200
    max_chars: int = 50000
    min_alpha: float = 0.5
    max_boilerplate: float = 0.3


@dataclass
class ClassifyConfig:
    model: str = "gpt-4.1-mini"
    temperature: float = 0.0
    max_output_tokens: int = 256
    max_personas: int = 3


@dataclass
class GenerateConfig:
    model: str = "gpt-4.1"
    temperature: float = 0.7
    max_output_tokens: int = 1024
    k_shots: int = 3
    answer_max_chars: int = 160
    demo_path: Optional[str] = None  # None loads the packaged library
    sft_distill: bool = False
    distill_model: str = "gpt-4.1"
    distill_temperature: float = 0.7
    excerpt_chars: int = 2000


@dataclass
class VerifyConfig:
    model: str = "gpt-4.1-mini"
    temperature: float = 0.0
    max_output_tokens: int = 512


@dataclass
class DecontamConfig:
    eval_dir: Optional[str] = None  # None means nothing to decontaminate against
    ngram: int = 13


@dataclass
class RewardConfig:
    judge: bool = False
    judge_model: str = "gpt-4.1-mini"
    judge_temperature: float = 0.0
    marker_prefixes: list[str] = field(default_factory=lambda: ["final answer:", "answer:"])
    use_boxed: bool = True


@dataclass
class PipelineConfig:
    sources: list[SourceSpec] = field(default_factory=list)
    run: RunSettings = field(default_factory=RunSettings)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    decontaminate: DecontamConfig = field(default_factory=DecontamConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)


def _build(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**data)


_SECTIONS = {
    "run": RunSettings,
    "gateway": GatewayConfig,
    "filter": FilterConfig,
    "classify": ClassifyConfig,
    "generate": GenerateConfig,
    "verify": VerifyConfig,
    "decontaminate": DecontamConfig,
    "reward": RewardConfig,
}


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS) - {"sources"})
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    sources = [
        _build(SourceSpec, entry, f"sources[{i}]")
        for i, entry in enumerate(data.get("sources") or [])
    ]
    kwargs = {"sources": sources}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build(cls, data.get(name), name)
    cfg = PipelineConfig(**kwargs)
    if cfg.run.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    if cfg.generate.answer_max_chars < 1:
        raise ConfigError("generate.answer_max_chars must be >= 1")
    if cfg.decontaminate.ngram < 1:
        raise ConfigError("decontaminate.ngram must be >= 1")
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def canonical_json(cfg: PipelineConfig) -> str:
    """Stable serialization used for drift detection between snapshot and resume."""
    return json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data or {})
