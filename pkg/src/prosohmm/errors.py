"""Exception types shared across the package.

ValidationError covers bad user input and violated preconditions; the CLI
maps it (and FileNotFoundError) to exit code 2. NumericalError covers
NaN/Inf blowups detected at runtime and maps to exit code 3.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Bad input or violated precondition; CLI exit code 2."""


class MalformedWavError(ValidationError):
    """File exists but is not a well-formed RIFF/WAVE container."""


class UnsupportedCodecError(ValidationError):
    """WAV container is valid but the codec/bit-depth is not supported."""


class UnvoicedUtteranceError(ValidationError):
    """Too few voiced frames to extract prosodic features."""


class DegenerateFeatureError(ValidationError):
    """A feature dimension has zero variance; standardization impossible."""


class TranscriptMismatchError(ValidationError):
    """Sidecar transcript line count differs from detected breath groups."""


class UnknownSymbolError(ValidationError):
    """Text contains symbols outside the vocabulary."""

    def __init__(self, symbols: list[str]):
        self.symbols = symbols
        super().__init__("unknown symbols: " + ", ".join(repr(s) for s in symbols))


class CheckpointError(ValidationError):
    """Checkpoint file is missing fields, has wrong shapes, or a bad version."""


class NumericalError(RuntimeError):
    """NaN/Inf detected in a numerical computation; CLI exit code 3."""


class NonFiniteLossError(NumericalError):
    """Training loss became NaN/Inf on a specific utterance."""

    def __init__(self, utterance_id: str, iteration: int):
        self.utterance_id = utterance_id
        self.iteration = iteration
        super().__init__(
            f"non-finite loss at iteration {iteration} on utterance {utterance_id!r}"
        )
