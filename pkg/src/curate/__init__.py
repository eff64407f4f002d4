"""Batch curation of crowdsourced speech recordings into a TTS-ready corpus."""

__version__ = "0.1.0"


class CurateError(Exception):
    """Base class for every error raised by this package."""
