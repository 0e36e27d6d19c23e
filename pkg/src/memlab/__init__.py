"""One-step gradient-descent memorization of random Gaussians by a depth-two network."""

from .config import ConfigError, ExperimentConfig, resolve_config
from .experiment import run_experiment, sample_instance, sweep
from .model import Activation, Network, forward, margins

__all__ = [
    "Activation",
    "ConfigError",
    "ExperimentConfig",
    "Network",
    "forward",
    "margins",
    "resolve_config",
    "run_experiment",
    "sample_instance",
    "sweep",
]

__version__ = "0.1.0"
