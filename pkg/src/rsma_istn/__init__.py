"""Coordinated rate-splitting beamforming for integrated satellite-terrestrial networks."""

__version__ = "0.1.0"
