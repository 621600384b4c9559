"""Desk-scale simulator of face recognition systems and inversion attacks.

A recognition system is a linear isometry from a k-dimensional identity
space into a d-dimensional embedding space (a d x k matrix with orthonormal
columns), plus isotropic Gaussian sampling noise.  Template inversion is the
transpose, which is the exact pseudo-inverse.  Two correlated systems share
part of the random basis their columns are built from; the correlation knob
rho moves them between identical (1) and independent (0).

The morphing attack pipeline mirrors the real one: the optimal morph
embedding is computed in the crafting system's space, inverted to a latent
reconstruction, rendered back through the crafting system's subspace, and
then each attacked system reads that rendering through its *own* subspace
before re-extracting.  The cross-subspace read-through (M_b^T M_a) is what
degrades black-box attacks; for the crafting system it collapses to the
identity, so white-box attacks see the morph embedding essentially intact.

Noise magnitudes: a noise parameter sigma denotes the expected Euclidean
norm of the perturbation relative to the unit signal, i.e. the draw is an
isotropic Gaussian with E||noise||^2 = sigma^2 (per-component std
sigma/sqrt(dim)).

Determinism: every random draw comes from its own counter-based Philox
substream keyed by (seed, domain, entity, index), so results are a pure
function of the config and independent of evaluation order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset_io import EmbeddingSet, MorphPair, MorphProtocol
from .embedding import Embedding, normalize, optimal_morph
from .errors import ConfigError, InvalidDims, InvalidRho
from . import dataset_io

# substream domains
_DOM_LATENT = 1
_DOM_BASIS_SHARED = 2
_DOM_BASIS_A = 3
_DOM_BASIS_B = 4
_DOM_SAMPLE = 5
_DOM_INVERT = 6
_DOM_NONMATED = 7

WHITE_BOX = "white-box"
BLACK_BOX = "black-box"


def _stream(*key_parts: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key_parts)))


def _hash_id(text: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little"
    )


def _hash_bytes(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _noise(rng: np.random.Generator, n: int) -> np.ndarray:
    # isotropic Gaussian scaled so the expected squared norm is 1
    return rng.standard_normal(n) / math.sqrt(n)


@dataclass(frozen=True)
class LatentIdentity:
    """Identity content of a face sample: a unit vector in the latent space."""

    id: str
    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.z, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"latent must be unit norm, got {norm!r}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "z", v)

    @property
    def dim(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class SyntheticFrs:
    """A simulated recognition system: orthonormal projection plus noise."""

    label: str
    matrix: np.ndarray = field(repr=False)  # (d, k), orthonormal columns
    sample_noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or not (m.shape[0] >= m.shape[1] >= 2):
            raise InvalidDims(f"matrix must be d x k with d >= k >= 2, got {m.shape}")
        gram_err = float(np.max(np.abs(m.T @ m - np.eye(m.shape[1]))))
        if gram_err > 1e-8:
            raise InvalidDims(f"columns not orthonormal (max deviation {gram_err:.2e})")
        if self.sample_noise_sigma < 0:
            raise ConfigError("sample_noise_sigma must be >= 0")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def embedding_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.matrix.shape[1]


def _orthonormal_columns(raw: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(raw)
    # fix the sign ambiguity of QR so the result is deterministic
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def make_correlated_frs_pair(
    d: int,
    k: int,
    rho: float,
    seed: int,
    sample_noise_sigma: float = 0.0,
    labels: tuple[str, str] = ("frs-a", "frs-b"),
) -> tuple[SyntheticFrs, SyntheticFrs]:
    """Build two recognition systems with correlated feature subspaces.

    Each system's columns come from rho * G_shared + sqrt(1 - rho^2) * G_own
    (entrywise standard Gaussians), re-orthonormalized by QR.  rho = 1 yields
    bit-identical matrices, rho = 0 statistically independent ones.
    """
    if not (d >= k >= 2):
        raise InvalidDims(f"need d >= k >= 2, got d={d} k={k}")
    if not (0.0 <= rho <= 1.0):
        raise InvalidRho(f"rho must be in [0, 1], got {rho!r}")
    shared = _stream(seed, _DOM_BASIS_SHARED).standard_normal((d, k))
    mix = math.sqrt(1.0 - rho * rho)
    matrices = []
    for domain in (_DOM_BASIS_A, _DOM_BASIS_B):
        own = _stream(seed, domain).standard_normal((d, k))
        matrices.append(_orthonormal_columns(rho * shared + mix * own))
    frs_a = SyntheticFrs(
        label=labels[0], matrix=matrices[0],
        sample_noise_sigma=sample_noise_sigma, noise_seed=seed,
    )
    frs_b = SyntheticFrs(
        label=labels[1], matrix=matrices[1],
        sample_noise_sigma=sample_noise_sigma, noise_seed=seed,
    )
    return frs_a, frs_b


def extract(
    frs: SyntheticFrs,
    z: LatentIdentity,
    sample_index: int,
    noise_sigma: float | None = None,
) -> Embedding:
    """Embed one sample of an identity: normalize(M z + sigma * eta).

    The noise substream is keyed by (seed, subject, sample_index) only, so
    the same sample presents the same perturbation to every system built
    from the same seed; with sigma 0 the result is exactly normalize(M z).
    """
    if z.dim != frs.latent_dim:
        raise InvalidDims(f"latent dim {z.dim} != system latent dim {frs.latent_dim}")
    sigma = frs.sample_noise_sigma if noise_sigma is None else noise_sigma
    signal = frs.matrix @ z.z
    if sigma == 0.0:
        return normalize(signal)
    rng = _stream(frs.noise_seed, _DOM_SAMPLE, _hash_id(z.id), sample_index)
    return normalize(signal + sigma * _noise(rng, frs.embedding_dim))


def invert(
    frs: SyntheticFrs, x: Embedding, inversion_noise_sigma: float = 0.0
) -> LatentIdentity:
    """Reconstruct the latent behind an embedding: normalize(M^T x + sigma * eta).

    Orthonormal columns make the transpose the pseudo-inverse, so with zero
    noise and x in the column span the reconstruction is exact.  The noise
    substream is keyed by the embedding content, keeping the operation a
    pure function of its inputs.
    """
    if x.dim != frs.embedding_dim:
        raise InvalidDims(f"embedding dim {x.dim} != system dim {frs.embedding_dim}")
    back = frs.matrix.T @ x.values
    if inversion_noise_sigma != 0.0:
        rng = _stream(frs.noise_seed, _DOM_INVERT, _hash_bytes(x.values.tobytes()))
        back = back + inversion_noise_sigma * _noise(rng, frs.latent_dim)
    z = normalize(back)
    return LatentIdentity(id=f"inv:{_hash_bytes(x.values.tobytes()):016x}", z=z.values)


# ---------------------------------------------------------------------------
# end-to-end simulation


@dataclass(frozen=True)
class SimConfig:
    """All knobs of one simulated attack experiment."""

    d: int = 128
    k: int = 32
    n_subjects: int = 50
    probes_per_subject: int = 5
    n_nonmated_pairs: int = 5000
    sample_noise_sigma: float = 0.15
    inversion_noise_sigma: float = 0.05
    cross_frs_correlation: float = 0.8
    seed: int = 1

    def __post_init__(self):
        if not (self.d >= self.k >= 2):
            raise InvalidDims(f"need d >= k >= 2, got d={self.d} k={self.k}")
        for name in ("n_subjects", "probes_per_subject", "n_nonmated_pairs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.sample_noise_sigma < 0 or self.inversion_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if not (0.0 <= self.cross_frs_correlation <= 1.0):
            raise InvalidRho(
                f"cross_frs_correlation must be in [0, 1], got {self.cross_frs_correlation!r}"
            )
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @staticmethod
    def from_file(source) -> "SimConfig":
        """Parse a key=value config file (# comments, blank lines allowed)."""
        text = dataset_io._read_text(source)
        known = {f.name: f.type for f in fields(SimConfig)}
        values = {}
        for line_no, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            try:
                if known[key] == "int":
                    values[key] = int(value)
                else:
                    values[key] = float(value)
            except ValueError:
                raise ConfigError(f"line {line_no}: bad value for {key}: {value!r}") from None
        return SimConfig(**values)

    def to_file(self, destination) -> None:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        dataset_io._write_bytes(destination, ("\n".join(lines) + "\n").encode("utf-8"))


@dataclass(frozen=True)
class SimulationResult:
    """Everything one simulated experiment produced, keyed by system label."""

    config: SimConfig
    frs_a: SyntheticFrs
    frs_b: SyntheticFrs
    references: dict[str, EmbeddingSet]
    probes: dict[str, EmbeddingSet]
    protocol: MorphProtocol
    attacks: dict[str, EmbeddingSet]  # WHITE_BOX (frs_a space), BLACK_BOX (frs_b space)
    optimal_targets: EmbeddingSet  # the ideal morph embeddings in frs_a space

    def attack_frs_label(self, mode: str) -> str:
        return self.frs_a.label if mode == WHITE_BOX else self.frs_b.label

    def calibration_scores(self, frs_label: str) -> tuple[np.ndarray, np.ndarray]:
        """(mated, nonmated) verification scores for one system.

        Mated: every reference compared to every probe of the same subject.
        Nonmated: n_nonmated_pairs reference/probe comparisons across
        different subjects, drawn from a dedicated substream.
        """
        refs = self.references[frs_label]
        probes = self.probes[frs_label]
        cfg = self.config
        ref_mat = np.stack(
            [refs.get(_subject_id(i), "r0").embedding.values for i in range(cfg.n_subjects)]
        )
        probe_mat = np.stack(
            [
                [
                    probes.get(_subject_id(i), f"p{j}").embedding.values
                    for j in range(cfg.probes_per_subject)
                ]
                for i in range(cfg.n_subjects)
            ]
        )
        mated = np.einsum("id,ipd->ip", ref_mat, probe_mat).ravel()
        if cfg.n_subjects < 2:  # no cross-subject comparisons possible
            return mated, np.empty(0, dtype=np.float64)
        rng = _stream(cfg.seed, _DOM_NONMATED)
        ref_idx = rng.integers(0, cfg.n_subjects, size=cfg.n_nonmated_pairs)
        shift = rng.integers(1, cfg.n_subjects, size=cfg.n_nonmated_pairs)
        probe_subject = (ref_idx + shift) % cfg.n_subjects
        probe_idx = rng.integers(0, cfg.probes_per_subject, size=cfg.n_nonmated_pairs)
        nonmated = np.einsum(
            "nd,nd->n", ref_mat[ref_idx], probe_mat[probe_subject, probe_idx]
        )
        return mated, nonmated


def _subject_id(i: int) -> str:
    return f"s{i:03d}"


def run_attack_simulation(config: SimConfig) -> SimulationResult:
    """Generate bona fide data for two correlated systems and attack them.

    For each protocol pair the optimal morph embedding is computed from the
    crafting system's references, inverted (with reconstruction noise) and
    rendered back through the crafting system.  Each attacked system then
    reads the rendering through its own subspace and re-extracts it with
    sample noise, yielding the white-box (crafting system) and black-box
    (other system) attack embeddings.
    """
    cfg = config
    frs_a, frs_b = make_correlated_frs_pair(
        cfg.d,
        cfg.k,
        cfg.cross_frs_correlation,
        cfg.seed,
        sample_noise_sigma=cfg.sample_noise_sigma,
    )
    subjects = []
    for i in range(cfg.n_subjects):
        rng = _stream(cfg.seed, _DOM_LATENT, i)
        z = rng.standard_normal(cfg.k)
        subjects.append(LatentIdentity(id=_subject_id(i), z=z / np.linalg.norm(z)))

    references: dict[str, EmbeddingSet] = {}
    probes: dict[str, EmbeddingSet] = {}
    for frs in (frs_a, frs_b):
        ref_entries = []
        probe_entries = []
        for subject in subjects:
            ref_entries.append(
                (subject.id, "r0", extract(frs, subject, sample_index=0), 1.0)
            )
            for j in range(cfg.probes_per_subject):
                probe_entries.append(
                    (subject.id, f"p{j}", extract(frs, subject, sample_index=1 + j), 1.0)
                )
        references[frs.label] = EmbeddingSet.from_embeddings(ref_entries, dim=cfg.d)
        probes[frs.label] = EmbeddingSet.from_embeddings(probe_entries, dim=cfg.d)

    pairs = tuple(
        MorphPair(_subject_id(2 * m), _subject_id(2 * m + 1), "r0", "r0")
        for m in range(cfg.n_subjects // 2)
    )
    probe_names = tuple(f"p{j}" for j in range(cfg.probes_per_subject))
    protocol = MorphProtocol(
        pairs=pairs, probes={s.id: probe_names for s in subjects}
    )

    refs_a = references[frs_a.label]
    white_entries = []
    black_entries = []
    target_entries = []
    for pair in pairs:
        x_star = optimal_morph(
            refs_a.get(pair.subject_a, pair.reference_sample_a).embedding,
            refs_a.get(pair.subject_b, pair.reference_sample_b).embedding,
        )
        reconstructed = invert(frs_a, x_star, cfg.inversion_noise_sigma)
        rendering = extract(frs_a, reconstructed, sample_index=0, noise_sigma=0.0)
        target_entries.append(("morph", pair.morph_id, x_star, 1.0))
        for frs, entries in ((frs_a, white_entries), (frs_b, black_entries)):
            perceived = invert(frs, rendering)
            morph_latent = LatentIdentity(id=f"morph:{pair.morph_id}", z=perceived.z)
            entries.append(
                ("morph", pair.morph_id, extract(frs, morph_latent, sample_index=0), 1.0)
            )

    return SimulationResult(
        config=cfg,
        frs_a=frs_a,
        frs_b=frs_b,
        references=references,
        probes=probes,
        protocol=protocol,
        attacks={
            WHITE_BOX: EmbeddingSet.from_embeddings(white_entries, dim=cfg.d),
            BLACK_BOX: EmbeddingSet.from_embeddings(black_entries, dim=cfg.d),
        },
        optimal_targets=EmbeddingSet.from_embeddings(target_entries, dim=cfg.d),
    )
