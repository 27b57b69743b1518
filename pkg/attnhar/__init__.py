"""attnhar - Continuity-regularized attention LSTMs for human activity recognition."""

__version__ = "0.1.0"
