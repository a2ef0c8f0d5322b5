import os
import yaml
import logging
from copy import deepcopy
from dataclasses import dataclass
from typing import Dict, Any, List, Optional
from dotenv import load_dotenv

# Searched in order after $HB_CONFIG; the first readable file wins
CONFIG_SEARCH_PATHS = [
    './hb_space.yaml',
    './config/config.yaml',
    '~/.hb_space/config.yaml'
]

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _default_config() -> Dict[str, Any]:
    """Built-in settings, with the environment variables that override them"""
    env = os.getenv
    return {
        'series': {
            'degree': int(env('HB_DEFAULT_DEGREE', 256)),
            'grid_size': int(env('HB_GRID_SIZE', 1024)),
            'origin_floor': float(env('HB_ORIGIN_FLOOR', 1e-12))
        },
        'factorization': {
            'tolerance': float(env('HB_FACTORIZATION_TOL', 1e-8)),
            'stop_tolerance': 1e-10,
            'max_iterations': 200,
            'stall_window': 10,
            'degeneracy_threshold': 1e-9,
            'max_trim_fraction': 0.01
        },
        'norm': {'tolerance': float(env('HB_NORM_TOL', 1e-10))},
        'oracle': {
            'tolerance': float(env('HB_ORACLE_TOL', 0.01)),
            'pinv_cutoff': 1e-10,
            'gram_condition_cap': 1e12,
            'doubling_cap': 2048,
            'relative_change': 0.005
        },
        'diagnostics': {
            'exponent_margin': 0.1,
            'decay_margin': 0.02,
            'hardy_margin': 1e-6
        },
        'logging': {
            'level': env('LOG_LEVEL', 'INFO'),
            'file': env('LOG_FILE')
        }
    }


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ConfigManager:
    """
    Process-wide settings for the H(B) toolkit.

    Built-in defaults, then environment variables (a .env file is honoured),
    then the first YAML file found. HB_DEFAULT_DEGREE beats the YAML file.
    """
    _instance = None

    def __new__(cls):
        if not cls._instance:
            cls._instance = super().__new__(cls)
            cls._instance._initialize()
        return cls._instance

    def _initialize(self):
        load_dotenv()
        self.config = _default_config()
        self.source: Optional[str] = None
        self._load_yaml_config()

    @staticmethod
    def search_paths() -> List[str]:
        paths = [os.getenv('HB_CONFIG')] + CONFIG_SEARCH_PATHS
        return [os.path.expanduser(p) for p in paths if p]

    def _load_yaml_config(self):
        """
        Merge the first YAML file found on the search path
        """
        for path in self.search_paths():
            if not os.path.isfile(path):
                continue
            try:
                with open(path, 'r') as handle:
                    self._merge_configs(yaml.safe_load(handle) or {})
            except (OSError, yaml.YAMLError) as e:
                logging.warning(f"Skipping unreadable config {path}: {e}")
                continue
            self.source = path
            return

    def _merge_configs(self, yaml_config: Dict[str, Any]):
        """
        Deep-merge settings read from YAML into the current ones

        Args:
            yaml_config: Parsed YAML mapping
        """
        self.config = _deep_merge(self.config, yaml_config)
        if os.getenv('HB_DEFAULT_DEGREE'):
            self.config['series']['degree'] = int(os.getenv('HB_DEFAULT_DEGREE'))

    def get(self, key: str, default: Any = None) -> Any:
        """
        Look up a dotted key such as 'factorization.tolerance'

        Args:
            key: Dot-separated path into the settings
            default: Returned when any part of the path is missing

        Returns:
            The stored value or default
        """
        node: Any = self.config
        for part in key.split('.'):
            if not isinstance(node, dict) or node.get(part) is None:
                return default
            node = node[part]
        return node

    def setup_logging(self):
        """
        Configure the root logger from the logging section
        """
        level = getattr(logging, str(self.get('logging.level', 'INFO')).upper(), logging.INFO)
        handlers: List[logging.Handler] = [logging.StreamHandler()]
        log_file = self.get('logging.file')
        if log_file:
            handlers.append(logging.FileHandler(log_file))
        logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers)


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def admissible_grid(degree: int) -> int:
    """Smallest power of two M with M >= 2*degree + 2"""
    grid = 2
    while grid < 2 * degree + 2:
        grid *= 2
    return grid


@dataclass(frozen=True)
class RunConfig:
    """
    Snapshot of the settings one CLI invocation runs with
    """
    degree: int
    grid_size: int
    factorization_tol: float
    norm_tol: float
    oracle_tol: float
    output_format: str = 'json'
    model_source: Optional[str] = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"degree must be nonnegative, got {self.degree}")
        if not is_power_of_two(self.grid_size) or self.grid_size < 2 * self.degree + 2:
            raise ValueError(
                f"grid size {self.grid_size} must be a power of two >= 2*{self.degree}+2"
            )
        for name in ('factorization_tol', 'norm_tol', 'oracle_tol'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.output_format not in ('json', 'csv'):
            raise ValueError(f"unknown output format {self.output_format!r}")

    @classmethod
    def from_config(
        cls,
        config: ConfigManager,
        degree: Optional[int] = None,
        grid_size: Optional[int] = None,
        tolerance: Optional[float] = None,
        output_format: str = 'json',
        model_source: Optional[str] = None
    ) -> 'RunConfig':
        """
        Build a run configuration, command-line values taking precedence

        Args:
            config: Loaded configuration
            degree: Truncation degree N override
            grid_size: Grid size M override; grown automatically when omitted
            tolerance: Factorization tolerance override
            output_format: 'json' or 'csv'
            model_source: Model spec string

        Returns:
            Validated RunConfig
        """
        degree = int(degree if degree is not None else config.get('series.degree', 256))
        if grid_size is None:
            grid_size = max(int(config.get('series.grid_size', 1024)), admissible_grid(degree))
        return cls(
            degree=degree,
            grid_size=int(grid_size),
            factorization_tol=float(
                tolerance if tolerance is not None else config.get('factorization.tolerance', 1e-8)
            ),
            norm_tol=float(config.get('norm.tolerance', 1e-10)),
            oracle_tol=float(config.get('oracle.tolerance', 0.01)),
            output_format=output_format,
            model_source=model_source
        )
