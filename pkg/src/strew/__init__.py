"""Verifiable spatio-temporal rewards, GRPO on a toy policy, and two-pass clue inference."""

__version__ = "0.1.0"
