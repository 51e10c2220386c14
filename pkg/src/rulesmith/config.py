"""Single JSON config file for the CLI: scoring, generation, judging, backends."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import (
    DEFAULT_BUDGET,
    DEFAULT_MAX_INFLIGHT,
    LlmGateway,
    MockBackend,
    MockBehavior,
    ProviderBackend,
    ProviderConfig,
)
from .generation import GenerationConfig
from .judge import DEFAULT_VARIANT, JudgeThresholds
from .selector import ScoringConfig
from .validation import IpValidationConfig


@dataclass(frozen=True)
class BackendSettings:
    kind: str = "mock"  # mock | provider
    seed: int = 0
    defect_rate: float = 0.0
    feedback_sensitivity: float = 1.0
    fixture_dir: str | None = None
    endpoint: str = ""
    model: str = "default"
    api_key_env: str = ""
    budget: int = DEFAULT_BUDGET
    max_inflight: int = DEFAULT_MAX_INFLIGHT
    requests_per_minute: int | None = None


@dataclass(frozen=True)
class AppConfig:
    scoring: ScoringConfig = field(default_factory=ScoringConfig.default)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    thresholds: JudgeThresholds = field(default_factory=JudgeThresholds)
    ip_validation: IpValidationConfig = field(default_factory=IpValidationConfig)
    backend: BackendSettings = field(default_factory=BackendSettings)
    judge_variant: str = DEFAULT_VARIANT
    corpus_path: str | None = None
    reputation_path: str | None = None
    prompt_dir: str | None = None


def load_config(path: str | Path | None) -> AppConfig:
    """Load the config JSON; every section is optional and defaults apply."""
    if path is None:
        return AppConfig()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    scoring_doc = doc.get("scoring", {})
    scoring = ScoringConfig(
        keyword_weights=dict(scoring_doc.get("keyword_weights") or ScoringConfig.default().keyword_weights),
        kev_bonus=scoring_doc.get("kev_bonus", ScoringConfig.default().kev_bonus),
        news_bonus=scoring_doc.get("news_bonus", ScoringConfig.default().news_bonus),
        selection_threshold=scoring_doc.get("selection_threshold", ScoringConfig.default().selection_threshold),
    )
    generation = GenerationConfig(**doc.get("generation", {}))
    thresholds = JudgeThresholds(**doc.get("judge_thresholds", {}))
    ip_validation = IpValidationConfig(**doc.get("ip_validation", {}))
    backend = BackendSettings(**doc.get("backend", {}))
    return AppConfig(
        scoring=scoring,
        generation=generation,
        thresholds=thresholds,
        ip_validation=ip_validation,
        backend=backend,
        judge_variant=doc.get("judge_variant", DEFAULT_VARIANT),
        corpus_path=doc.get("corpus_path"),
        reputation_path=doc.get("reputation_path"),
        prompt_dir=doc.get("prompt_dir"),
    )


def make_gateway(settings: BackendSettings, *, backend_kind: str | None = None, seed: int | None = None) -> LlmGateway:
    """Build the configured gateway; CLI flags can override kind and seed."""
    kind = backend_kind or settings.kind
    if kind == "mock":
        behavior = MockBehavior(
            seed=settings.seed if seed is None else seed,
            defect_rate=settings.defect_rate,
            feedback_sensitivity=settings.feedback_sensitivity,
            fixture_dir=settings.fixture_dir,
        )
        backend = MockBackend(behavior)
    elif kind == "provider":
        if not settings.endpoint:
            raise ValueError("provider backend needs an endpoint in the config")
        backend = ProviderBackend(
            ProviderConfig(endpoint=settings.endpoint, model=settings.model, api_key_env=settings.api_key_env)
        )
    else:
        raise ValueError(f"unknown backend kind {kind!r}")
    return LlmGateway(
        backend,
        max_inflight=settings.max_inflight,
        budget=settings.budget,
        requests_per_minute=settings.requests_per_minute,
    )
