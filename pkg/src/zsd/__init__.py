"""Streaming ransomware-behavior detection engine.

Per event the pipeline runs: window update -> feature extraction ->
quiescence prefilter -> density outlier gate -> recurrent anomaly scorer ->
threshold with ambiguity deferral -> per-entity smoothing. A deterministic
attack simulator and an evaluation harness drive the experiment suites.
"""

from .types import (
    ClusterAssignment,
    ConfigError,
    Event,
    EventKind,
    FeatureVector,
    Label,
    Phase,
    PipelineConfig,
    Truth,
    Verdict,
    validate_config,
)

__all__ = [
    "ClusterAssignment",
    "ConfigError",
    "Event",
    "EventKind",
    "FeatureVector",
    "Label",
    "Phase",
    "PipelineConfig",
    "Truth",
    "Verdict",
    "validate_config",
]

__version__ = "0.1.0"
