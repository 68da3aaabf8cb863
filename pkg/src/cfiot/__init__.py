"""Cell-free massive MIMO IoT simulator: channel estimation with random
pilots, uplink and downlink SINR, power control and a learned downlink
power predictor."""

__version__ = "0.1.0"

from .errors import (ConditioningError, ConfigError, ConvergenceError, GenerationError,
                     InfeasibleError, SolverError, TrainingError)
from .netgen import NetworkConfig, NetworkRealization, generate_network

__all__ = [
    "ConditioningError", "ConfigError", "ConvergenceError", "GenerationError", "InfeasibleError",
    "SolverError", "TrainingError", "NetworkConfig", "NetworkRealization", "generate_network",
]
