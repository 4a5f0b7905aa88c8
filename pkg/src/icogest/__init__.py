"""Emotion-aware iconic gesture placement and intensity prediction from text."""

__version__ = "0.1.0"
