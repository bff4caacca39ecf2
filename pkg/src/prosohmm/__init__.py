"""Prosody-controllable spontaneous-speech synthesis on a neural HMM."""

__version__ = "0.1.0"
