"""
Configuration module for the sentiment attitude extraction toolkit.

- Settings: ambient process settings from environment variables (SAE_*)
  and an optional .env file
- RunConfig: the validated run configuration, read from a flat
  `SECTION__KEY=value` file with sections TASK, TEXT, ENCODER, TRAIN, PATHS,
  ANNOTATE and ANALYSIS plus top-level SEED and MODE
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Tuple, get_origin

from dotenv import dotenv_values
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from app.services.annotation.annotator import AnnotationMode
from app.services.encoders.models import EncoderConfig
from app.services.evaluation.scoring import TaskSpec
from app.services.training.trainer import TrainSchedule

logger = logging.getLogger(__name__)

SECTION_SEPARATOR = "__"
LIST_SEPARATOR = ","
SECTIONS = ("task", "text", "encoder", "train", "paths", "annotate", "analysis")


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    log_level: str = Field(default="INFO", alias="SAE_LOG_LEVEL")
    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        alias="SAE_LOG_FORMAT"
    )
    output_dir: str = Field(default="./runs", alias="SAE_OUTPUT_DIR")

    class Config:
        env_file = Path(__file__).parent.parent.parent / ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


class ConfigError(ValueError):
    """Invalid run configuration; carries every problem found."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class TrainingMode(str, Enum):
    SL = "sl"
    DS = "ds"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(LIST_SEPARATOR) if item.strip()]
    return value


CommaList = Annotated[List[str], BeforeValidator(_split_list)]
RangeList = Annotated[List[float], BeforeValidator(_split_list)]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TextConfig(Section):
    n_max: int = Field(default=50, ge=2)
    pair_distance: int = Field(default=10, ge=1)
    d_feat: int = Field(default=5, ge=1)
    negation_particles: CommaList = Field(default_factory=lambda: ["не", "not"])
    symbol_scale: float = Field(default=0.5, gt=0.0)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.pair_distance >= self.n_max:
            raise ValueError(f"pair_distance ({self.pair_distance}) must be below n_max ({self.n_max})")
        return self


class PathsConfig(Section):
    corpus: Optional[Path] = None
    ds_corpus: Optional[Path] = None
    news: Optional[Path] = None
    frames: Optional[Path] = None
    sentiment: Optional[Path] = None
    pos: Optional[Path] = None
    lemmas: Optional[Path] = None
    pairs: Optional[Path] = None
    embeddings: Optional[Path] = None
    out: Path = Field(default_factory=lambda: settings.output_path / "default")


class AnnotateConfig(Section):
    mode: AnnotationMode = AnnotationMode.BOTH_FACTORS


class AnalysisConfig(Section):
    points: int = Field(default=200, ge=2)
    bandwidth: Optional[float] = Field(default=None, gt=0.0)
    frames: RangeList = Field(default_factory=lambda: [0.0, 0.4])
    nouns: RangeList = Field(default_factory=lambda: [0.0, 0.5])
    prep: RangeList = Field(default_factory=lambda: [0.0, 0.2])
    sentiment: RangeList = Field(default_factory=lambda: [0.0, 0.4])
    verbs: RangeList = Field(default_factory=lambda: [0.0, 0.5])

    @field_validator("frames", "nouns", "prep", "sentiment", "verbs")
    @classmethod
    def check_range(cls, value: List[float]) -> List[float]:
        if len(value) != 2 or value[1] <= value[0]:
            raise ValueError(f"expected 'low,high' with low < high, got {value}")
        return value

    def ranges(self) -> Dict[str, Tuple[float, float]]:
        return {name: tuple(getattr(self, name)) for name in ("frames", "nouns", "prep", "sentiment", "verbs")}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    mode: TrainingMode = TrainingMode.SL
    task: TaskSpec = Field(default_factory=TaskSpec)
    text: TextConfig = Field(default_factory=TextConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    train: TrainSchedule = Field(default_factory=TrainSchedule)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    annotate: AnnotateConfig = Field(default_factory=AnnotateConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)

    @model_validator(mode="after")
    def check_consistency(self):
        problems = []
        if self.mode is TrainingMode.DS and self.paths.ds_corpus is None:
            problems.append("MODE=ds requires PATHS__DS_CORPUS")
        if self.encoder.class_count != self.task.scale.class_count:
            problems.append(
                f"ENCODER__CLASS_COUNT={self.encoder.class_count} does not match "
                f"TASK__SCALE={self.task.scale.value} ({self.task.scale.class_count} classes)"
            )
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def require_paths(self, *names: str):
        """Fail with every missing or nonexistent path among `names` at once."""
        problems = []
        for name in names:
            path = getattr(self.paths, name)
            if path is None:
                problems.append(f"PATHS__{name.upper()} is not set")
            elif not Path(path).exists():
                problems.append(f"PATHS__{name.upper()}={path} does not exist")
        if problems:
            raise ConfigError(problems)


def _format_errors(error: ValidationError) -> List[str]:
    problems = []
    for item in error.errors():
        key = SECTION_SEPARATOR.join(str(part).upper() for part in item["loc"])
        problems.append(f"{key or 'CONFIG'}: {item['msg']}")
    return problems


def _is_list_field(section: str, key: str) -> bool:
    field = RunConfig.model_fields.get(section)
    inner = getattr(field.annotation, "model_fields", {}).get(key) if field else None
    return inner is not None and get_origin(inner.annotation) is list


def parse_config(values: Dict[str, Optional[str]]) -> RunConfig:
    """
    Build a RunConfig from flat `SECTION__KEY` -> value pairs.

    Empty values count as unset, except for list keys where an empty value is
    the empty list.
    """
    data: Dict[str, Any] = {}
    problems = []
    for raw_key, value in values.items():
        if value is None:
            continue
        if value == "" and not (len(parts) == 2 and _is_list_field(*parts)):
            continue
        parts = raw_key.lower().split(SECTION_SEPARATOR)
        if len(parts) == 1:
            data[parts[0]] = value
        elif len(parts) == 2 and parts[0] in SECTIONS:
            data.setdefault(parts[0], {})[parts[1]] = value
        else:
            problems.append(f"{raw_key}: unknown key")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(problems + _format_errors(e))
    if problems:
        raise ConfigError(problems)
    return config


def load_config(file_path: Optional[Path] = None) -> RunConfig:
    if file_path is None:
        return RunConfig()
    file_path = Path(file_path)
    if not file_path.exists():
        raise ConfigError([f"config file {file_path} does not exist"])
    config = parse_config(dotenv_values(file_path, interpolate=False))
    logger.info(f"Loaded run config from {file_path}")
    return config


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return LIST_SEPARATOR.join(_format_value(v) for v in value)
    return str(value)


def dump_config(config: RunConfig) -> str:
    """Serialize to the flat file format; parse_config inverts it exactly."""
    payload = config.model_dump(mode="json")
    lines = []
    for key, value in payload.items():
        if isinstance(value, dict):
            for inner, inner_value in value.items():
                if inner_value is not None:
                    lines.append(f"{key.upper()}{SECTION_SEPARATOR}{inner.upper()}={_format_value(inner_value)}")
        elif value is not None:
            lines.append(f"{key.upper()}={_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_config(config: RunConfig, file_path: Path):
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(dump_config(config), encoding="utf-8")


def apply_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    mode: Optional[str] = None,
) -> RunConfig:
    """CLI flags take precedence over file values; the result is revalidated."""
    data = config.model_dump()
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["paths"]["out"] = Path(out)
    if mode is not None:
        data["mode"] = mode
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e))


# Global settings instance
settings = Settings()
