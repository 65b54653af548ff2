"""
Configuration settings for the trip chain toolkit
"""
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from tripchain import __version__
from tripchain.core.error_handling import ConfigurationError, InputFormatError


class Settings(BaseSettings):
    """Process settings, read from TRIPCHAIN_* environment variables or .env"""

    model_config = SettingsConfigDict(env_prefix="TRIPCHAIN_", env_file=".env", case_sensitive=True)

    PROJECT_NAME: str = "Tourist Trip Chain Toolkit"
    VERSION: str = __version__
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    # API Configuration
    API_V1_STR: str = "/api/v1"
    BACKEND_CORS_ORIGINS: Union[List[str], str] = ["http://localhost:3000", "http://localhost:8000"]

    @field_validator("BACKEND_CORS_ORIGINS", mode="before")
    @classmethod
    def assemble_cors_origins(cls, v):
        if isinstance(v, str) and not v.startswith("["):
            return [i.strip() for i in v.split(",") if i.strip()]
        return v

    # Logging Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Literal["json", "standard"] = "json"
    LOG_DIR: Optional[str] = None

    # Pipeline Configuration
    DEFAULT_WORKERS: int = Field(default=1, ge=1)
    # Root for every path the HTTP service reads or writes
    DATA_DIR: str = "data"


settings = Settings()


DateWindow = Tuple[date, date]


class StudyConfig(BaseModel):
    """Study window, filtering and analysis parameters"""

    study_start: Optional[date] = None
    study_end: Optional[date] = None
    excluded_windows: List[DateWindow] = Field(default_factory=list)
    roaming_distance_m: float = Field(default=500.0, gt=0)
    min_ap_stay_s: float = Field(default=0.0, ge=0)
    kde_radius_m: float = Field(default=1000.0, gt=0)
    kde_cell_m: Optional[float] = Field(default=None, gt=0)
    significance_share: float = Field(default=0.01, gt=0, lt=1)
    include_gap_day_users: bool = False
    ap_scope: Literal["user", "user_day"] = "user"
    kde_weighted: bool = True
    overflow_at: int = Field(default=7, ge=2)
    max_n: int = Field(default=4, ge=1)
    midnight_wrap: bool = False
    delimiter: str = ","
    workers: int = Field(default=1, ge=1)

    @field_validator("excluded_windows", mode="before")
    @classmethod
    def parse_windows(cls, v):
        if isinstance(v, str):
            windows = []
            for item in v.split(","):
                item = item.strip()
                if not item:
                    continue
                start, sep, end = item.partition(":")
                if not sep:
                    raise ValueError(f"window '{item}' must be written start:end")
                windows.append((start.strip(), end.strip()))
            return windows
        return v

    @model_validator(mode="after")
    def check_windows(self) -> "StudyConfig":
        if (self.study_start is None) != (self.study_end is None):
            raise ValueError("study_start and study_end must be given together")
        if self.study_start is not None and self.study_start > self.study_end:
            raise ValueError("study_start is after study_end")
        for start, end in self.excluded_windows:
            if start > end:
                raise ValueError(f"excluded window {start}:{end} is reversed")
            if self.study_start is not None and (start < self.study_start or end > self.study_end):
                raise ValueError(f"excluded window {start}:{end} lies outside the study window")
        if not self.kde_radius_m > self.cell_size_m:
            raise ValueError("kde_radius_m must exceed kde_cell_m")
        return self

    @property
    def study_window(self) -> Optional[DateWindow]:
        if self.study_start is None:
            return None
        return (self.study_start, self.study_end)

    @property
    def cell_size_m(self) -> float:
        return self.kde_cell_m if self.kde_cell_m is not None else self.kde_radius_m / 10.0


CONFIG_KEYS = tuple(StudyConfig.model_fields)


def parse_key_value_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment"""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputFormatError(
                f"{source}:{lineno}: expected 'key = value'",
                details={"line": lineno, "source": source}
            )
        values[key.strip()] = value.strip()
    return values


def load_config_file(path: Union[str, Path], allowed_keys: Optional[Tuple[str, ...]] = CONFIG_KEYS) -> Dict[str, str]:
    """Read a flat key-value file; unknown keys are rejected"""
    path = Path(path)
    if not path.is_file():
        raise InputFormatError(f"config file not found: {path}", error_key="INPUT_FILE_MISSING")
    values = parse_key_value_text(path.read_text(encoding="utf-8"), source=str(path))
    if allowed_keys is not None:
        reject_unknown_keys(values, allowed_keys)
    return values


def reject_unknown_keys(values: Mapping[str, Any], allowed_keys: Tuple[str, ...] = CONFIG_KEYS) -> None:
    unknown = sorted(set(values) - set(allowed_keys))
    if unknown:
        raise ConfigurationError(
            f"unknown configuration keys: {', '.join(unknown)}",
            error_key="CONFIGURATION_UNKNOWN_KEY",
            details={"keys": unknown}
        )


def resolve_data_path(path: Union[str, Path], data_dir: Union[str, Path]) -> Path:
    """Resolve ``path`` against ``data_dir``; anything that escapes it is rejected"""
    root = Path(data_dir).resolve()
    resolved = (root / path).resolve()
    if not resolved.is_relative_to(root):
        raise InputFormatError(
            f"path escapes the data directory: {path}",
            error_key="INPUT_PATH_OUTSIDE_DATA_DIR",
            details={"path": str(path)}
        )
    return resolved


def build_study_config(
    file_values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> StudyConfig:
    """Merge flag overrides over file values and validate"""
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return StudyConfig.model_validate(merged)
    except ValidationError as e:
        problems = [
            {"field": ".".join(str(p) for p in err["loc"]) or "config", "message": err["msg"]}
            for err in e.errors()
        ]
        raise ConfigurationError(
            "; ".join(f"{p['field']}: {p['message']}" for p in problems),
            details={"validation_errors": problems}
        ) from e


def format_config_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, list):
        return ",".join(f"{a.isoformat()}:{b.isoformat()}" for a, b in value)
    return str(value)


def dump_config(config: StudyConfig) -> Dict[str, str]:
    """Config as sorted key-value strings; unset optional keys are omitted"""
    data = config.model_dump()
    return {key: format_config_value(data[key]) for key in sorted(data) if data[key] is not None}


def render_key_value(values: Mapping[str, Any]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in values.items())
