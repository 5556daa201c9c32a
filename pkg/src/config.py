"""
RMT Lab Configuration Management

Environment settings via Pydantic Settings and the versioned experiment
configuration that every Monte Carlo run is keyed by.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.constants import (
    CONFIG_HASH_LENGTH,
    CONFIG_SCHEMA_VERSION,
    DEFAULT_BINS,
    DEFAULT_CONCENTRATION_THRESHOLD,
    DEFAULT_CONVERGENCE_SIZES,
    DEFAULT_DELOC_FACTOR,
    DEFAULT_FOURMOMENT_PASS_SIGMA,
    DEFAULT_GAP_EXPONENTS,
    DEFAULT_INTERVAL_LEN,
    DEFAULT_MAX_FAILURE_RATE,
    FIGURE1_ENSEMBLES,
    FIGURE1_N,
    FIGURE1_P,
    FIGURE1_TRIALS,
)
from src.exceptions import ConfigurationError, RmtLabError

ExperimentKind = Literal["figure1", "fourmoment", "gaps", "deloc", "concentration", "mp_convergence"]

# Fields that control how a run executes but not what it computes.
EXECUTION_FIELDS = frozenset({"workers", "trial_range"})


class LabSettings(BaseSettings):
    """Process-level defaults read from RMT_LAB_* variables"""

    model_config = SettingsConfigDict(
        env_prefix="RMT_LAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    seed: int = Field(
        default=0,
        ge=0,
        lt=2**64,
        description="Default master seed when --seed is not given",
    )
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="Logging level",
    )
    log_json: bool = Field(
        default=False,
        description="Emit JSON log lines instead of the pretty format",
    )
    log_file: Path | None = Field(
        default=None,
        description="Also append JSON log lines to this file",
    )
    workers: int = Field(
        default=1,
        ge=1,
        description="Default number of trial workers",
    )
    output_dir: Path = Field(
        default=Path("runs"),
        description="Default root for experiment outputs",
    )


class Settings(BaseSettings):
    """Main settings container"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    lab: LabSettings = Field(default_factory=LabSettings)


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Tests that change RMT_LAB_* variables call `get_settings.cache_clear()`.
    """
    return Settings()


class ExperimentConfig(BaseModel):
    """
    Versioned description of a Monte Carlo experiment.

    Everything except `workers` and `trial_range` enters the config hash, so
    records produced under different statistic parameters never mix.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    schema_version: int = Field(default=CONFIG_SCHEMA_VERSION, alias="schema")
    kind: ExperimentKind = "figure1"
    ensembles: list[str] = Field(default_factory=lambda: list(FIGURE1_ENSEMBLES), min_length=1)
    p: int = Field(default=FIGURE1_P, ge=1)
    n: int = Field(default=FIGURE1_N, ge=1)
    trials: int = Field(default=FIGURE1_TRIALS, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    trial_range: tuple[int, int] | None = None
    full: bool = Field(default=False, description="Persist per-trial eigenvalue lists")

    bins: int = Field(default=DEFAULT_BINS, ge=1)
    interval_len: float = Field(default=DEFAULT_INTERVAL_LEN, gt=0)
    indices: list[int] = Field(default_factory=lambda: [1], min_length=1)
    g_scale: float | None = Field(default=None, gt=0)
    gap_exponents: list[float] = Field(default_factory=lambda: list(DEFAULT_GAP_EXPONENTS))
    gap_scale: Literal["eigenvalue", "sigma"] = "eigenvalue"
    deloc_factor: float = Field(default=DEFAULT_DELOC_FACTOR, gt=0)
    concentration_threshold: float = Field(default=DEFAULT_CONCENTRATION_THRESHOLD, gt=0)
    sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_CONVERGENCE_SIZES), min_length=1)
    tw_convention: Literal["standard", "literal"] = "standard"
    max_failure_rate: float = Field(default=DEFAULT_MAX_FAILURE_RATE, ge=0, le=1)
    fourmoment_pass_sigma: float = Field(default=DEFAULT_FOURMOMENT_PASS_SIGMA, gt=0)

    @field_validator("schema_version")
    @classmethod
    def check_schema(cls, v: int) -> int:
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"Unsupported config schema {v}; expected {CONFIG_SCHEMA_VERSION}")
        return v

    @field_validator("ensembles")
    @classmethod
    def check_ensembles(cls, names: list[str]) -> list[str]:
        from src.ensembles import resolve_spec

        for name in names:
            try:
                resolve_spec(name)
            except RmtLabError as e:
                raise ValueError(str(e)) from e
        return names

    @field_validator("sizes")
    @classmethod
    def check_sizes(cls, sizes: list[int]) -> list[int]:
        if any(size < 1 for size in sizes):
            raise ValueError("sizes must be positive")
        return sizes

    @model_validator(mode="after")
    def check_shape(self) -> ExperimentConfig:
        if self.p > self.n:
            raise ValueError(f"Requires p <= n, got p={self.p}, n={self.n}")
        if self.trial_range is not None:
            start, stop = self.trial_range
            if not 0 <= start < stop <= self.trials:
                raise ValueError(f"trial_range {self.trial_range} must satisfy 0 <= start < stop <= trials")
        if self.kind == "figure1" and len(self.ensembles) != 2:
            raise ValueError("figure1 compares exactly two ensembles")
        if self.kind == "fourmoment" and len(self.ensembles) < 2:
            raise ValueError("fourmoment needs at least two ensembles")
        if self.kind == "gaps" and self.p < 2:
            raise ValueError("gaps needs p >= 2")
        return self

    @property
    def trial_indices(self) -> range:
        start, stop = self.trial_range if self.trial_range is not None else (0, self.trials)
        return range(start, stop)

    @property
    def unique_ensembles(self) -> list[str]:
        return list(dict.fromkeys(self.ensembles))

    @property
    def slots(self) -> list[str]:
        """
        Record labels, one per sampled column.

        figure1 keeps a repeated ensemble as its own slot (`name#2`); other
        kinds sample each distinct ensemble once.
        """
        if self.kind == "figure1":
            return slot_labels(self.ensembles)
        return self.unique_ensembles

    def stream_index(self, slot: str) -> int:
        """Sampling stream of a slot; fourmoment slots all read stream 0 so matched trials share entries."""
        if self.kind == "fourmoment":
            return 0
        return self.slots.index(slot)

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)

    def config_hash(self) -> str:
        """First 16 hex digits of sha256 over the canonical JSON of hashed fields."""
        payload = self.model_dump(mode="json", by_alias=True, exclude=set(EXECUTION_FIELDS))
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:CONFIG_HASH_LENGTH]

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """New validated config with the non-None overrides applied."""
        data = self.model_dump(by_alias=True)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.model_validate(data)


def slot_labels(names: list[str]) -> list[str]:
    """Unique column labels; a repeated ensemble gets a #k suffix."""
    seen: dict[str, int] = {}
    labels = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        labels.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return labels


def slot_ensemble(slot: str) -> str:
    """Ensemble name behind a slot label."""
    return slot.partition("#")[0]


def load_config(path: str | Path) -> ExperimentConfig:
    """
    Read a JSON experiment config.

    Raises:
        ConfigurationError: malformed JSON or a config that fails validation
        OSError: the file cannot be read
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON", details={"error": str(e)}) from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must hold a JSON object")
    data.pop("config_hash", None)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(
            f"Config {path} failed validation",
            details={"errors": [err["msg"] for err in e.errors()]},
        ) from e


def save_config(config: ExperimentConfig, path: str | Path) -> Path:
    """Write the config with sorted keys and its hash alongside."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {**config.to_dict(), "config_hash": config.config_hash()}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_saved_hash(path: str | Path) -> str | None:
    """The config_hash recorded by `save_config`, or None if absent."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("config_hash")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON") from e
