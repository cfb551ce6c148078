"""Chest-sound quality scoring, vitals estimation, and training pipeline."""

__version__ = "0.1.0"
