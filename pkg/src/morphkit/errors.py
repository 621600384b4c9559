"""Typed errors shared across the toolkit.

Every failure mode callers are expected to handle has its own class so the
CLI can report the error name and tests can assert on the exact type.
"""


class MorphkitError(Exception):
    """Base class for all toolkit errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


# --- embedding arithmetic ---

class ZeroVector(MorphkitError):
    """Input vector norm is below the degeneracy cutoff (1e-12)."""


class DimensionTooSmall(MorphkitError):
    """Embedding dimension must be at least 2."""


class DimensionMismatch(MorphkitError):
    """Operands or records do not share the same dimension."""


class AntipodalSources(MorphkitError):
    """Source combination has near-zero norm; the morph is not unique."""


class AlphaOutOfRange(MorphkitError):
    """Blend weight must lie strictly inside (0, 1)."""


class EmptyList(MorphkitError):
    """At least two source embeddings are required."""


# --- file formats ---

class BadMagic(MorphkitError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(MorphkitError):
    """File declares a version or flag bits this reader does not know."""


class TruncatedFile(MorphkitError):
    """File ends before the declared content is complete."""


class TrailingData(MorphkitError):
    """File contains bytes beyond the declared content."""


class DuplicateKey(MorphkitError):
    """Two records share the same (subject_id, sample_id)."""


class CorruptRecord(MorphkitError):
    """A record violates format constraints (id length, encoding, norm)."""


class ParseError(MorphkitError):
    """Malformed line in a text input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class MissingProbes(MorphkitError):
    """A subject referenced by a morph pair has no probe samples."""


class SelfMorph(MorphkitError):
    """A morph pair references the same subject twice."""


class IoError(MorphkitError):
    """Underlying I/O failure while reading or writing a file."""


# --- metrics and evaluation ---

class EmptyScores(MorphkitError):
    """A score list required by a metric is empty."""


class InvalidTargetFmr(MorphkitError):
    """Calibration target must lie strictly inside (0, 1)."""


class MissingEmbedding(MorphkitError):
    """A protocol entry references an embedding absent from the set."""


class EmptyBlocks(MorphkitError):
    """MMPMR requires at least one morph score block."""


# --- simulation ---

class InvalidRho(MorphkitError):
    """Cross-system correlation must lie in [0, 1]."""


class InvalidDims(MorphkitError):
    """Simulator dimensions must satisfy d >= k >= 2."""


class ConfigError(MorphkitError):
    """Malformed or incomplete simulation config."""
