import os
import tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path

from dotenv import load_dotenv

from absa_consensus.errors import ConfigError
from absa_consensus.models import TaskKind
from absa_consensus.utils.fs import sanitize_filename

load_dotenv()


class Config:
    # Project root
    project_root = Path(__file__).parent.parent.resolve()

    # OpenAI-compatible endpoint settings
    ENDPOINT_URL = os.environ.get('ABSA_ENDPOINT_URL', 'http://localhost:8000/v1')
    API_KEY = os.environ.get('ABSA_API_KEY', 'EMPTY')
    MODEL = os.environ.get('ABSA_MODEL', '')
    MAX_CONCURRENCY = int(os.environ.get('ABSA_MAX_CONCURRENCY', '16'))
    MAX_RETRIES = int(os.environ.get('ABSA_MAX_RETRIES', '3'))
    REQUEST_TIMEOUT = float(os.environ.get('ABSA_REQUEST_TIMEOUT', '120'))

    # Storage
    CACHE_DIR = Path(os.environ.get('ABSA_CACHE_DIR') or project_root / 'cache')
    OUTPUT_ROOT = Path(os.environ.get('ABSA_OUTPUT_ROOT') or project_root / 'out')

    LOG_LEVEL = os.environ.get('ABSA_LOG_LEVEL', 'INFO').upper()


@dataclass
class ExperimentConfig:
    task: TaskKind = TaskKind.DIM_ASTE
    language: str = 'eng'
    domain: str = 'restaurant'
    k_values: list[int] = field(default_factory=lambda: [1, 5, 10, 15])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    seed_stride: int = 1000
    threshold: int | None = None
    strict: bool = False
    allow_placeholder: bool = True

    # Sampling
    model: str = field(default_factory=lambda: Config.MODEL)
    temperature: float = 0.8
    max_output_tokens: int = 512

    # Endpoint
    endpoint_url: str = field(default_factory=lambda: Config.ENDPOINT_URL)
    api_key: str = field(default_factory=lambda: Config.API_KEY)
    max_concurrency: int = field(default_factory=lambda: Config.MAX_CONCURRENCY)
    max_retries: int = field(default_factory=lambda: Config.MAX_RETRIES)
    request_timeout: float = field(default_factory=lambda: Config.REQUEST_TIMEOUT)
    mock_endpoint: Path | None = None

    # Paths
    test_path: Path | None = None
    train_paths: list[Path] = field(default_factory=list)
    whitelist_path: Path | None = None
    template_path: Path | None = None
    slots_path: Path | None = None
    output_root: Path = field(default_factory=lambda: Config.OUTPUT_ROOT)
    cache_dir: Path = field(default_factory=lambda: Config.CACHE_DIR)

    # Significance testing
    alpha: float = 0.05
    welch: bool = False

    def validate(self, need_paths=()):
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ConfigError(f"Every k must be at least 1: {self.k_values}")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError(f"Seeds must be distinct and non-empty: {self.seeds}")
        if self.threshold is not None and self.threshold < 1:
            raise ConfigError(f"Threshold must be at least 1: {self.threshold}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1): {self.alpha}")
        for name in need_paths:
            value = getattr(self, name)
            paths = value if isinstance(value, list) else [value]
            if not paths or any(p is None or not Path(p).exists() for p in paths):
                raise ConfigError(f"{name} does not point to an existing file: {value}")
        return self

    @property
    def subset(self):
        return sanitize_filename(f"{self.language}-{self.domain}")


_PATH_FIELDS = {
    'mock_endpoint', 'test_path', 'whitelist_path', 'template_path', 'slots_path',
    'output_root', 'cache_dir',
}


def _coerce(name, value, base_dir):
    if value is None:
        return None
    if name == 'task':
        try:
            return TaskKind.parse(value)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if name in _PATH_FIELDS:
        return (base_dir / Path(value)).resolve() if base_dir else Path(value)
    if name == 'train_paths':
        return [(base_dir / Path(p)).resolve() if base_dir else Path(p) for p in value]
    if name in ('k_values', 'seeds'):
        return [int(v) for v in value]
    return value


def apply_overrides(config, overrides, base_dir=None):
    known = {f.name for f in fields(ExperimentConfig)}
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in known:
            raise ConfigError(f"Unknown configuration key: {name}")
        setattr(config, name, _coerce(name, value, base_dir))
    return config


def load_experiment_config(path=None, overrides=None):
    """TOML file first, then CLI overrides; relative paths follow the file's directory"""
    config = ExperimentConfig()
    if path:
        path = Path(path)
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot read experiment config {path}: {e}") from e
        apply_overrides(config, data, base_dir=path.parent.resolve())
    if overrides:
        apply_overrides(config, overrides)
    return config.validate()
