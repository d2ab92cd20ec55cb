"""TCP NewReno over a CRDSA++ random-access satellite return link.

Packet-level simulation at RA-block granularity, closed-form throughput
models, and a CLI harness that cross-validates the two.
"""

from crdsasim.config import (
    ConfigError,
    ScenarioConfig,
    Waveform,
    WAVEFORM_CATALOG,
    fragmentation_profile,
    load_scenario,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "Waveform",
    "WAVEFORM_CATALOG",
    "fragmentation_profile",
    "load_scenario",
]

__version__ = "0.1.0"
