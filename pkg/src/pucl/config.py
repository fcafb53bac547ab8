"""Pipeline configuration: JSON files with full defaulting.

A minimal config is {"train": ..., "dict": ..., "test": ...}; every other
field has a default. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .curriculum import SelfTrainConfig, StageSchedule
from .errors import FormatError
from .risk import ConfMpuConfig
from .voters import VoterConfig

MODES = (
    "full",
    "full-st",
    "no-curriculum",
    "no-confmpu",
    "voter-ensemble",
    "soft-label-curriculum",
)


@dataclass(frozen=True)
class ModelSettings:
    """Architecture knobs; vocabulary size and class count come from data."""

    embed_dim: int = 32
    window: int = 2
    hidden_dim: int = 64
    init_scale: float = 0.1
    min_count: int = 1
    max_sentence_len: int = 256


@dataclass(frozen=True)
class CurriculumSettings:
    tau: float = 0.5
    eta: int = 5
    stage_epochs: int = 2
    learning_rate: float = 1e-3
    batch_size: int = 32


@dataclass(frozen=True)
class PipelineConfig:
    train: str
    dict_path: str | None = None
    test: str | None = None
    valid: str | None = None
    out: str = "out"
    mode: str = "full"
    seed: int = 42
    threads: int = 1
    allow_same_split: bool = False
    require_type_match: bool = True
    model: ModelSettings = field(default_factory=ModelSettings)
    voters: VoterConfig = field(default_factory=VoterConfig)
    curriculum: CurriculumSettings = field(default_factory=CurriculumSettings)
    risk: ConfMpuConfig = field(default_factory=ConfMpuConfig)
    self_train: SelfTrainConfig = field(default_factory=SelfTrainConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise FormatError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.threads < 1:
            raise FormatError("threads must be >= 1")

    def schedule(self) -> StageSchedule:
        return StageSchedule(
            stage_epochs=self.curriculum.stage_epochs,
            learning_rate=self.curriculum.learning_rate,
            batch_size=self.curriculum.batch_size,
            loss=self.risk.loss,
            conf_mpu=self.risk,
        )

    def snapshot(self) -> dict:
        """JSON-ready dict of the fully-defaulted configuration."""
        return asdict(self)

    def with_overrides(self, **kwargs: Any) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


_SECTION_TYPES = {
    "model": ModelSettings,
    "voters": VoterConfig,
    "curriculum": CurriculumSettings,
    "risk": ConfMpuConfig,
    "self_train": SelfTrainConfig,
}

_TOP_LEVEL_KEYS = {
    "train",
    "dict",
    "test",
    "valid",
    "out",
    "mode",
    "seed",
    "threads",
    "allow_same_split",
    "require_type_match",
} | set(_SECTION_TYPES)


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise FormatError("config must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise FormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "train" not in raw:
        raise FormatError("config needs a 'train' corpus path")

    sections: dict[str, Any] = {}
    for name, cls in _SECTION_TYPES.items():
        body = raw.get(name, {})
        if not isinstance(body, dict):
            raise FormatError(f"config section {name!r} must be an object")
        valid_keys = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(body) - valid_keys
        if unknown:
            raise FormatError(f"unknown keys in config section {name!r}: {', '.join(sorted(unknown))}")
        try:
            sections[name] = cls(**body)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad config section {name!r}: {exc}") from exc

    try:
        return PipelineConfig(
            train=raw["train"],
            dict_path=raw.get("dict"),
            test=raw.get("test"),
            valid=raw.get("valid"),
            out=raw.get("out", "out"),
            mode=raw.get("mode", "full"),
            seed=int(raw.get("seed", 42)),
            threads=int(raw.get("threads", 1)),
            allow_same_split=bool(raw.get("allow_same_split", False)),
            require_type_match=bool(raw.get("require_type_match", True)),
            model=sections["model"],
            voters=sections["voters"],
            curriculum=sections["curriculum"],
            risk=sections["risk"],
            self_train=sections["self_train"],
        )
    except ValueError as exc:
        raise FormatError(f"bad config value: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)
