"""Federated fine-tuning across a small LEO constellation under power and thermal limits."""
from .config import ScenarioConfig, load_config
from .errors import ConfigError, InvalidInputError, NoWaterError, NumericError

__all__ = ["ScenarioConfig", "load_config", "ConfigError", "InvalidInputError",
           "NoWaterError", "NumericError"]
__version__ = "0.1.0"
