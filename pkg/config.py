"""
Configuration settings for hazardset.
Environment-backed defaults, logging setup and loading of key=value run-config files.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, List, Optional, Union

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'

# Keys that only shape diagnostics; changing them keeps generated sets valid
DIAGNOSTIC_KEYS = {'output_dir', 'taus', 'alpha', 'top_k', 'chi_q', 'groups', 'jobs'}
# Keys read only when sampling events; a fitted model stays valid when they change
GENERATION_KEYS = {'n_events', 'n_replicates', 'min_radius', 'shape_draws_file', 'ht_weights',
                   'min_success'}


class Config:
    """Base configuration class."""

    DEBUG = False
    TESTING = False

    # Logging Configuration
    LOG_LEVEL = os.environ.get('HAZARD_LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('HAZARD_LOG_FILE', 'hazardset.log')
    LOG_DIR = os.environ.get('HAZARD_LOG_DIR', 'logs')

    # Runtime
    JOBS = int(os.environ.get('HAZARD_JOBS', 1))
    OUTPUT_DIR = os.environ.get('HAZARD_OUTPUT_DIR', 'output')

    # Thresholds
    Q_FIT = 0.94
    Q_TRANSFORM = 0.96
    Q_RADIAL = 0.94
    Q_RV = 0.94
    V_QUANTILE = 0.93
    MIN_EXCEEDANCES = 10
    HT_MIN_EXCEEDANCES = 20
    KAPPA_MAX = 1e4

    # Generation
    N_EVENTS = 4400
    N_REPLICATES = 1
    N_SAMPLES_PER_FOLD = 2000
    MIN_SUCCESS = 0.8

    # Diagnostics
    TOP_K = 50
    ALPHA = 0.95
    CHI_Q = 0.9
    TAUS = (2, 5, 10, 25, 50, 100, 200)

    @classmethod
    def init_app(cls, app=None):
        """Configure console logging for a command invocation."""
        root = logging.getLogger()
        level = getattr(logging, str(cls.LOG_LEVEL).upper(), logging.INFO)
        if not any(getattr(h, '_hazardset', False) for h in root.handlers):
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
            handler._hazardset = True
            root.addHandler(handler)
        root.setLevel(level)


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('HAZARD_LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    LOG_LEVEL = 'WARNING'
    JOBS = 1
    N_SAMPLES_PER_FOLD = 200

    @classmethod
    def init_app(cls, app=None):
        # pytest's caplog owns the handlers
        logging.getLogger().setLevel(logging.WARNING)


class ProductionConfig(Config):
    """Production configuration."""

    @classmethod
    def init_app(cls, app=None):
        Config.init_app(app)

        # Production logging
        if not os.path.exists(cls.LOG_DIR):
            os.makedirs(cls.LOG_DIR, exist_ok=True)
        root = logging.getLogger()
        if not any(isinstance(h, RotatingFileHandler) for h in root.handlers):
            file_handler = RotatingFileHandler(
                os.path.join(cls.LOG_DIR, cls.LOG_FILE),
                maxBytes=10240000,
                backupCount=10
            )
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            file_handler.setLevel(logging.INFO)
            root.addHandler(file_handler)
        root.info('hazardset startup')


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': Config
}


def get_config(name: Optional[str] = None):
    name = name or os.environ.get('HAZARD_CONFIG') or 'default'
    if name not in config:
        raise ConfigError(f"unknown environment '{name}'; choose from {', '.join(sorted(config))}")
    return config[name]


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of one pipeline run."""

    input: str
    seed: int
    output_dir: str = Config.OUTPUT_DIR
    date_column: str = 'date'
    period_len: int = 1
    periods_per_year: float = 365.25
    season_start_month: Optional[int] = None
    season_end_month: Optional[int] = None
    q_fit: float = Config.Q_FIT
    q_transform: float = Config.Q_TRANSFORM
    q_radial: float = Config.Q_RADIAL
    q_rv: float = Config.Q_RV
    v_quantile: float = Config.V_QUANTILE
    min_exceedances: int = Config.MIN_EXCEEDANCES
    ht_min_exceedances: int = Config.HT_MIN_EXCEEDANCES
    shapes_file: Optional[str] = None
    shape_draws_file: Optional[str] = None
    m: Union[int, str] = 'auto'
    m_grid: Optional[List[int]] = None
    n_samples_per_fold: int = Config.N_SAMPLES_PER_FOLD
    n_events: int = Config.N_EVENTS
    n_replicates: int = Config.N_REPLICATES
    min_success: float = Config.MIN_SUCCESS
    min_radius: str = '0'
    taus: List[float] = field(default_factory=lambda: list(Config.TAUS))
    alpha: float = Config.ALPHA
    top_k: int = Config.TOP_K
    chi_q: float = Config.CHI_Q
    ht_weights: str = 'uniform'
    generator: str = 'epca'
    kappa_max: float = Config.KAPPA_MAX
    groups: Dict[str, List[str]] = field(default_factory=dict)
    jobs: int = Config.JOBS

    def to_dict(self):
        return asdict(self)

    def _digest(self, excluded) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k not in excluded}
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @property
    def model_hash(self) -> str:
        """sha256 over the keys that define the fitted model; stamped on fit artifacts."""
        return self._digest(DIAGNOSTIC_KEYS | GENERATION_KEYS)

    @property
    def config_hash(self) -> str:
        """sha256 over the model and generation keys; stamped on event sets and diagnostics."""
        return self._digest(DIAGNOSTIC_KEYS)


def read_config_file(path) -> Dict[str, str]:
    """Parse a key=value file; group.<name> keys are collected under 'groups'."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "config")
    raw = {k.strip(): v for k, v in dotenv_values(path).items()}
    empty = sorted(k for k, v in raw.items() if v is None)
    if empty:
        raise ConfigError(f"config keys without a value in {path}: {', '.join(empty)}", "config")
    return raw


def load_run_config(path=None, overrides: Optional[Dict] = None) -> RunConfig:
    """Merge Config defaults < config file < command-line overrides, then validate."""
    from schemas import RunConfigSchema

    merged: Dict = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    groups = dict(merged.pop('groups', None) or {})
    for key in [k for k in merged if k.startswith('group.')]:
        name = key[len('group.'):]
        if not name:
            raise ConfigError("group key needs a name: group.<name>", "config")
        groups[name] = merged.pop(key)
    merged['groups'] = groups
    return RunConfigSchema().load_config(merged)
