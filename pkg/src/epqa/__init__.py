"""Joint channel estimation and decoding for uplink massive MIMO-OFDM via expectation propagation."""

from .harness import SimConfig, monte_carlo, run_turbo_receiver
from .txchain import ConfigError

__all__ = ["ConfigError", "SimConfig", "monte_carlo", "run_turbo_receiver"]
__version__ = "0.1.0"
