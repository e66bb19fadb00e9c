import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError
from app.models.experiment import ExperimentConfig
from app.models.propagation import Frame

logger = logging.getLogger(__name__)

# .env lives in the project root, two levels up from app/utils/
env_path = Path(__file__).parent.parent.parent / '.env'
load_dotenv(dotenv_path=env_path)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=str(env_path),
        env_file_encoding='utf-8',
        case_sensitive=True,
        populate_by_name=True,
        extra='ignore',
    )

    # Toolkit
    log_level: str = Field("INFO", alias='STIRSAP_LOG_LEVEL')
    output_root: str = Field("runs", alias='STIRSAP_OUTPUT_ROOT')
    default_threads: int = Field(1, ge=0, alias='STIRSAP_DEFAULT_THREADS')

    # Celery / Redis
    celery_broker_url: str = Field("redis://localhost:6379/0", alias='CELERY_BROKER_URL')
    celery_result_backend: str = Field("redis://localhost:6379/1", alias='CELERY_RESULT_BACKEND')
    celery_task_always_eager: bool = Field(False, alias='CELERY_TASK_ALWAYS_EAGER')


settings = Settings()


def _read_document(path: Path) -> dict:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw.decode("utf-8"))
        return tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e


def parse_experiment_config(data: dict) -> ExperimentConfig:
    '''Validate a config mapping; any validation failure becomes a ConfigError.'''
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    '''Load a TOML (default) or JSON experiment config. Unknown keys are rejected.'''
    path = Path(path)
    cfg = parse_experiment_config(_read_document(path))
    logger.info(f"Loaded experiment config from {path} (protocol {cfg.protocol.value})")
    return cfg


def apply_overrides(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
    frame: Optional[str] = None,
) -> ExperimentConfig:
    '''Command-line flags take precedence over config keys.'''
    data = cfg.model_dump()
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["output_dir"] = out
    if threads is not None:
        data["threads"] = threads
    if frame is not None:
        # a new frame picks up that frame's default step
        data["propagation"] = {**data["propagation"], "frame": Frame(frame), "dt": None}
    return parse_experiment_config(data)
