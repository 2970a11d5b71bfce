from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .simulation import RunResult, measure_realized_rates, run_simulation

__all__ = [
    "ConfigError",
    "RunResult",
    "ScenarioConfig",
    "load_config",
    "measure_realized_rates",
    "parse_config",
    "run_simulation",
]
