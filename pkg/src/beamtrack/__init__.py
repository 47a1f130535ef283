"""beamtrack: multimodal sensing-aided mmWave beam tracking at desk scale.

Synthetic scenario generation with ground-truth beam labels, FMCW radar and
camera front ends, teacher/student sequence models, knowledge-distillation
training, and Top-k / distance-based-accuracy evaluation with complexity
reporting.
"""

from . import (config, geometry, metrics, models, radar, report, store,
               synthesis, training, vision)
from .errors import (AlignmentError, BeamtrackError, ConfigError, DomainError,
                     ShapeError, StoreError, TrainingDivergedError,
                     WindowingError)

__version__ = "0.1.0"

__all__ = [
    "config", "geometry", "metrics", "models", "radar", "report", "store",
    "synthesis", "training", "vision",
    "BeamtrackError", "ConfigError", "DomainError", "ShapeError",
    "AlignmentError", "WindowingError", "StoreError", "TrainingDivergedError",
    "__version__",
]
