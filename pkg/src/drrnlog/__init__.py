"""Text-game agents that combine recurrent text encoders with hashed location memory."""

__version__ = "0.1.0"
