"""Unit-sphere embedding arithmetic.

Embeddings live on the unit hypersphere and all comparison is by cosine
similarity.  The morph of two embeddings is the normalized sum, which is the
point of the sphere minimizing the summed cosine distance to both sources.
All arithmetic is done in float64 regardless of how values are stored on
disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlphaOutOfRange,
    AntipodalSources,
    DimensionMismatch,
    DimensionTooSmall,
    EmptyList,
    ZeroVector,
)

# Geometry tolerance used by tests and invariant checks everywhere.
GEOMETRY_TOL = 1e-9
# Below this norm a vector is treated as degenerate (no direction).
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class Embedding:
    """A unit vector on the d-dimensional hypersphere (d >= 2).

    Construct via :func:`normalize`; direct construction expects an already
    normalized float64 array and will refuse anything else.
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
        if v.shape[0] < 2:
            raise DimensionTooSmall(f"dim must be >= 2, got {v.shape[0]}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > GEOMETRY_TOL:
            raise ZeroVector(f"not unit norm ({norm!r}); use normalize()")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


def normalize(raw, dim: int | None = None) -> Embedding:
    """Scale a raw vector to unit norm.

    Raises ZeroVector when the norm is <= 1e-12 and DimensionTooSmall for
    vectors shorter than 2.  When `dim` is given the input length must match.
    """
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {v.shape[0]}")
    if v.shape[0] < 2:
        raise DimensionTooSmall(f"dim must be >= 2, got {v.shape[0]}")
    norm = float(np.linalg.norm(v))
    if norm <= DEGENERACY_TOL:
        raise ZeroVector(f"vector norm {norm!r} is below {DEGENERACY_TOL}")
    return Embedding(v / norm)


def _check_dims(a: Embedding, b: Embedding):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Inner product of two unit embeddings, clamped to [-1, 1]."""
    _check_dims(a, b)
    return min(1.0, max(-1.0, float(a.values @ b.values)))


def cosine_distance(a: Embedding, b: Embedding) -> float:
    """1 - cosine_similarity; ranges over [0, 2]."""
    return 1.0 - cosine_similarity(a, b)


def optimal_morph(x1: Embedding, x2: Embedding) -> Embedding:
    """The unit embedding minimizing summed cosine distance to both sources.

    Closed form: the normalized sum of the sources.  Antipodal sources are
    rejected because every point of the bisecting great circle would be
    optimal there.
    """
    _check_dims(x1, x2)
    s = x1.values + x2.values
    if float(np.linalg.norm(s)) <= GEOMETRY_TOL:
        raise AntipodalSources("x1 + x2 has near-zero norm; morph is not unique")
    return normalize(s)


def weighted_morph(x1: Embedding, x2: Embedding, alpha: float) -> Embedding:
    """Normalized convex blend alpha*x1 + (1-alpha)*x2, alpha in (0, 1).

    alpha = 0.5 reproduces optimal_morph bit for bit.
    """
    _check_dims(x1, x2)
    if not (0.0 < alpha < 1.0):
        raise AlphaOutOfRange(f"alpha must be in (0, 1), got {alpha!r}")
    s = alpha * x1.values + (1.0 - alpha) * x2.values
    if float(np.linalg.norm(s)) <= GEOMETRY_TOL:
        raise AntipodalSources("blend has near-zero norm; morph is not unique")
    return normalize(s)


def multi_morph(sources: list[Embedding]) -> Embedding:
    """Normalized sum of n >= 2 source embeddings; n = 2 equals optimal_morph."""
    if len(sources) < 2:
        raise EmptyList(f"need at least 2 sources, got {len(sources)}")
    first = sources[0]
    for other in sources[1:]:
        _check_dims(first, other)
    s = np.sum([e.values for e in sources], axis=0)
    if float(np.linalg.norm(s)) <= GEOMETRY_TOL:
        raise AntipodalSources("source sum has near-zero norm; morph is not unique")
    return normalize(s)
