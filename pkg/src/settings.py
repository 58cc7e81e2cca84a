import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from evaluation.link_prediction import EvalConfig
from exceptions import ConfigError
from kg import slicer
from kg.slicer import SliceSpec
from kg.store import TripleFormat
from models.models import ModelKind
from training.sampling import CorruptionPolicy
from training.trainer import TrainConfig
from utils import env_int, env_str, get_logger

logger = get_logger(__name__)

DEFAULT_K_VALUES = [20, 50, 80]
DEFAULT_OUTPUT_DIR = "audit-out"


class CorpusConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    triples: Path
    labels: Path | None = None
    keep_literal_tails: bool = False
    has_header: bool | None = None

    def triple_format(self) -> TripleFormat:
        return TripleFormat(has_header=self.has_header, keep_literal_tails=self.keep_literal_tails)


class SliceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    countries: list[str] = Field(min_length=1)
    instance_of: str = slicer.INSTANCE_OF
    human: str = slicer.HUMAN
    citizenship: str = slicer.CITIZENSHIP
    gender: str = slicer.GENDER
    occupation: str = slicer.OCCUPATION
    male: str = slicer.MALE
    female: str = slicer.FEMALE

    def to_spec(self) -> SliceSpec:
        return SliceSpec(
            name=self.name,
            countries=tuple(self.countries),
            instance_of=self.instance_of,
            human=self.human,
            citizenship=self.citizenship,
            gender=self.gender,
            occupation=self.occupation,
            male=self.male,
            female=self.female,
        )


class TrainSection(BaseModel):
    """Shared training knobs; `per_model` overrides them for one model kind."""

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(default=100, gt=0)
    epochs: int = Field(default=200, ge=0)
    batch_size: int = Field(default=512, gt=0)
    learning_rate: float = Field(default=0.05, gt=0)
    negatives: int | None = Field(default=None, gt=0)
    corruption: CorruptionPolicy = CorruptionPolicy.BOTH
    unit_norm_entities: bool = False
    per_model: dict[str, dict[str, Any]] = Field(default_factory=dict)

    def for_model(self, kind: ModelKind, seed: int) -> TrainConfig:
        values = self.model_dump(exclude={"per_model"})
        for key in ("transe", kind.value) if kind.is_translational else (kind.value,):
            values.update(self.per_model.get(key, {}))
        try:
            return TrainConfig(kind=kind, seed=seed, **values)
        except ValidationError as e:
            raise ConfigError(f"invalid training config for {kind.value}: {e}") from e


class BiasConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.1, ge=0)
    steps: int = Field(default=1, ge=1)
    grid_steps: int = Field(default=100, ge=2)
    grid: list[float] | None = None
    # cutoff of the data-bias list in the rank-deviation table; first K value when unset
    rank_deviation_k: int | None = Field(default=None, gt=0)
    entropy_k: int = Field(default=50, gt=0)
    top_similar: int = Field(default=3, gt=0)


class AuditConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    corpus: CorpusConfig
    slices: list[SliceConfig] = Field(min_length=1)
    models: list[ModelKind] = Field(min_length=1)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    bias: BiasConfig = Field(default_factory=BiasConfig)
    k_values: list[int] = Field(default_factory=lambda: list(DEFAULT_K_VALUES), min_length=1)
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int = Field(default=1, ge=1)

    @field_validator("models", mode="before")
    @classmethod
    def _parse_models(cls, value):
        if not isinstance(value, list):
            return value
        return [ModelKind.parse(v) for v in value]

    @field_validator("k_values")
    @classmethod
    def _check_k_values(cls, value: list[int]) -> list[int]:
        if any(k <= 0 for k in value) or any(a >= b for a, b in zip(value, value[1:])):
            raise ValueError("K values must be positive and strictly ascending")
        return value

    @model_validator(mode="after")
    def _check_unique(self) -> "AuditConfig":
        names = [s.name for s in self.slices]
        if len(set(names)) != len(names):
            raise ValueError("slice names must be unique")
        if len(set(self.models)) != len(self.models):
            raise ValueError("model kinds must be unique")
        return self

    @property
    def rank_deviation_k(self) -> int:
        return self.bias.rank_deviation_k or self.k_values[0]

    def slice_specs(self) -> list[SliceSpec]:
        return [s.to_spec() for s in self.slices]

    def check_paths(self) -> None:
        for path in (self.corpus.triples, self.corpus.labels):
            if path is not None and not path.is_file():
                raise ConfigError(f"corpus file not found: {path}")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> AuditConfig:
    """Reads the JSON audit config and applies flag overrides on top of it.

    Precedence: flags, then the file, then .env defaults (KG_AUDIT_OUTPUT_DIR,
    KG_AUDIT_THREADS). Relative corpus paths resolve against the config file.
    """
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        base = path.resolve().parent

    output_dir = raw.get("output_dir") or env_str("KG_AUDIT_OUTPUT_DIR")
    if output_dir:
        raw["output_dir"] = output_dir
    threads = env_int("KG_AUDIT_THREADS")
    if threads is not None:
        raw.setdefault("threads", threads)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    corpus = raw.get("corpus")
    if isinstance(corpus, dict):
        for key in ("triples", "labels"):
            if corpus.get(key) and not Path(corpus[key]).is_absolute():
                corpus[key] = str(base / corpus[key])

    try:
        config = AuditConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid audit config: {e}") from e
    logger.debug("loaded config with %d slices and models %s", len(config.slices), [m.value for m in config.models])
    return config
