"""Self-consistency sampling and majority voting for dimensional aspect-based sentiment analysis."""

__version__ = '0.1.0'
