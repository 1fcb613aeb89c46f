"""Runtime settings: packaged defaults, deployment profile, environment."""

import json
import logging
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.tools.shared_libraries.errors import DomainError


logger = logging.getLogger(__name__)

APP_DIR = Path(__file__).resolve().parent
CONFIG_PATH = APP_DIR / 'configuration.json'
DEPLOYMENT_DIR = APP_DIR / 'deployment' / 'configuration'

ENV_PROFILE = 'MOMENT_ORDERS_ENV'
ENV_LOG_LEVEL = 'MOMENT_ORDERS_LOG_LEVEL'
ENV_WORKERS = 'MOMENT_ORDERS_WORKERS'
ENV_TRACE = 'MOMENT_ORDERS_TRACE'


class Settings(BaseModel):
    """Resolved defaults for every command; command flags override them."""

    model_config = ConfigDict(frozen=True)

    environment: Literal['development', 'production']
    spec_version: str
    seed: int = Field(ge=0, lt=2 ** 64)
    confidence: float = Field(gt=0.9, lt=1.0)
    grid_size: int = Field(ge=4)
    param_grid_size: int = Field(ge=2)
    bins: int = Field(ge=5)
    tolerance: float = Field(gt=0.0)
    quantile_clip: float = Field(gt=0.0, lt=0.5)
    workers: int = Field(ge=1)
    log_level: Literal['DEBUG', 'INFO', 'WARNING', 'ERROR']
    trace: Literal['console', 'none'] = 'none'


def _read_json(path: Path) -> dict:
    with path.open(encoding='utf-8') as handle:
        return json.load(handle)


def load_settings(environ: Mapping[str, str] | None = None) -> Settings:
    """Merge configuration.json, the deployment profile and environment overrides.

    Args:
        environ: Environment mapping; defaults to os.environ.

    Raises:
        DomainError: Unknown profile or an invalid merged value.
    """
    environ = os.environ if environ is None else environ
    profile_name = environ.get(ENV_PROFILE, 'dev')
    profile_path = DEPLOYMENT_DIR / f'{profile_name}.json'
    if not profile_path.is_file():
        known = sorted(p.stem for p in DEPLOYMENT_DIR.glob('*.json'))
        raise DomainError(f"unknown deployment profile '{profile_name}'; known: {', '.join(known)}")

    config = _read_json(CONFIG_PATH)
    profile = _read_json(profile_path)
    merged = {
        **config['defaults'],
        'spec_version': config['app']['spec_version'],
        'environment': profile['environment'],
        'workers': profile.get('simulation', {}).get('workers', config['defaults']['workers']),
        'log_level': profile.get('logging', {}).get('level', 'INFO'),
    }
    if ENV_LOG_LEVEL in environ:
        merged['log_level'] = environ[ENV_LOG_LEVEL].upper()
    if ENV_WORKERS in environ:
        merged['workers'] = environ[ENV_WORKERS]
    if ENV_TRACE in environ:
        merged['trace'] = environ[ENV_TRACE].lower()

    try:
        settings = Settings(**merged)
    except ValidationError as exc:
        raise DomainError(f'invalid settings: {exc.errors()[0]["loc"]} {exc.errors()[0]["msg"]}') from exc
    logger.debug(f'settings for profile {profile_name}: {settings.model_dump()}')
    return settings
