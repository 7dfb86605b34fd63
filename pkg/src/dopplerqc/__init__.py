"""Signal-quality classification for 1D Doppler ultrasound audio."""

__version__ = "0.1.0"

from .annotations import QualityClass  # noqa: F401
