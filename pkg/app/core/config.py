import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from app.core.errors import ConfigurationError
from app.models.engine_models import EngineConfig
from app.models.run_models import RunManifest

logger = logging.getLogger(__name__)

load_dotenv()

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseModel):
    """Process-wide settings read from the environment (and a .env file)."""

    threads: int = Field(1, ge=1)
    output_dir: str = "runs"
    logs_dir: str = "logs"
    log_level: str = "INFO"
    data_dir: str = str(DATA_DIR)

    @classmethod
    def from_env(cls) -> "Settings":
        raw = {
            "threads": os.getenv("MACS_THREADS", "1"),
            "output_dir": os.getenv("MACS_OUTPUT_DIR", "runs"),
            "logs_dir": os.getenv("MACS_LOGS_DIR", "logs"),
            "log_level": os.getenv("MACS_LOG_LEVEL", "INFO").upper(),
            "data_dir": os.getenv("MACS_DATA_DIR", str(DATA_DIR)),
        }
        try:
            return cls(**raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid environment settings: {format_validation_error(e)}")


def get_settings() -> Settings:
    return Settings.from_env()


def format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(piece) for piece in item.get("loc", ()))
        parts.append(f"{location or '<root>'}: {item.get('msg')}")
    return "; ".join(parts)


def read_json_file(path: str) -> Dict[str, Any]:
    """Reads a structured-text (JSON) configuration or data file."""
    if not os.path.exists(path):
        raise ConfigurationError(f"Configuration file not found: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Malformed JSON in {path}: {e}")


def validate_config(model: Type[ModelT], raw: Dict[str, Any], source: str = "config") -> ModelT:
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {source}: {format_validation_error(e)}")


def load_config_file(model: Type[ModelT], path: str) -> ModelT:
    raw = read_json_file(path)
    logger.info(f"Loaded {model.__name__} from {path}")
    return validate_config(model, raw, source=path)


def data_file(name: str) -> str:
    return os.path.join(get_settings().data_dir, name)


def load_run_config(path: str) -> RunManifest:
    """Reads a run manifest; a referenced engine file replaces the inline engine block."""
    manifest = load_config_file(RunManifest, path)
    if manifest.engine_config:
        engine_path = manifest.engine_config
        if not os.path.isabs(engine_path):
            engine_path = os.path.join(os.path.dirname(os.path.abspath(path)), engine_path)
        manifest = manifest.model_copy(update={"engine": load_config_file(EngineConfig, engine_path)})
    return manifest
