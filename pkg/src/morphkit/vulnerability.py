"""Morphing-attack vulnerability: morph-vs-probe scoring and MMPMR metrics.

A morph succeeds against a threshold when it matches bona fide probes of
both contributing subjects.  MinMax-MMPMR counts a morph as successful iff
the weakest subject's best probe still matches; ProdAvg-MMPMR credits each
morph with the product over subjects of the average probe pass rate.  Both
use the toolkit-wide match rule: score >= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataset_io import EmbeddingSet, MorphProtocol
from .embedding import cosine_similarity
from .errors import DimensionMismatch, EmptyBlocks, MissingEmbedding
from .metrics import OperatingPoint


@dataclass(frozen=True)
class SubjectProbeScores:
    subject_id: str
    scores: tuple[tuple[str, float], ...]  # (probe sample_id, similarity)


@dataclass(frozen=True)
class MorphScoreBlock:
    """Similarities of one enrolled morph to every probe of its two subjects."""

    morph_id: str
    subjects: tuple[SubjectProbeScores, ...]


@dataclass(frozen=True)
class VulnerabilityResult:
    frs_label: str
    attack_label: str
    attack_mode: str  # "white-box" | "black-box"
    threshold: float
    minmax_mmpmr: float
    prodavg_mmpmr: float
    n_morphs: int


def score_morphs(
    morphs: EmbeddingSet, probes: EmbeddingSet, protocol: MorphProtocol
) -> list[MorphScoreBlock]:
    """Compare each protocol pair's morph embedding to both subjects' probes.

    Morph records are keyed ("morph", "<subjectA>+<subjectB>").  Raises
    MissingEmbedding when a morph or probe referenced by the protocol is
    absent from the given sets.
    """
    if morphs.dim != probes.dim:
        raise DimensionMismatch(f"morph dim {morphs.dim} != probe dim {probes.dim}")
    blocks = []
    for pair in protocol.pairs:
        try:
            morph = morphs.get("morph", pair.morph_id)
        except KeyError:
            raise MissingEmbedding(f"no morph embedding for pair {pair.morph_id!r}") from None
        per_subject = []
        for subject in (pair.subject_a, pair.subject_b):
            scores = []
            for sample in protocol.probes[subject]:
                try:
                    probe = probes.get(subject, sample)
                except KeyError:
                    raise MissingEmbedding(
                        f"no probe embedding for {subject!r} {sample!r}"
                    ) from None
                scores.append((sample, cosine_similarity(morph.embedding, probe.embedding)))
            per_subject.append(SubjectProbeScores(subject, tuple(scores)))
        blocks.append(MorphScoreBlock(pair.morph_id, tuple(per_subject)))
    return blocks


def minmax_mmpmr(blocks, threshold: float) -> float:
    """Fraction of morphs whose weakest subject still has a matching probe."""
    blocks = list(blocks)
    if not blocks:
        raise EmptyBlocks("no morph score blocks")
    hits = 0
    for block in blocks:
        weakest_best = min(
            max(score for _, score in subject.scores) for subject in block.subjects
        )
        if weakest_best >= threshold:
            hits += 1
    return hits / len(blocks)


def prodavg_mmpmr(blocks, threshold: float) -> float:
    """Mean over morphs of the product of per-subject probe pass rates."""
    blocks = list(blocks)
    if not blocks:
        raise EmptyBlocks("no morph score blocks")
    total = 0.0
    for block in blocks:
        term = 1.0
        for subject in block.subjects:
            passed = sum(1 for _, score in subject.scores if score >= threshold)
            term *= passed / len(subject.scores)
        total += term
    return total / len(blocks)


def evaluate(
    morphs: EmbeddingSet,
    probes: EmbeddingSet,
    protocol: MorphProtocol,
    operating_point: OperatingPoint | float,
    frs_label: str,
    attack_label: str,
    attack_mode: str,
) -> VulnerabilityResult:
    """Score a morph set and package both MMPMR metrics for reporting."""
    threshold = (
        operating_point.threshold
        if isinstance(operating_point, OperatingPoint)
        else float(operating_point)
    )
    blocks = score_morphs(morphs, probes, protocol)
    if not blocks:
        raise EmptyBlocks("protocol has no morph pairs")
    return VulnerabilityResult(
        frs_label=frs_label,
        attack_label=attack_label,
        attack_mode=attack_mode,
        threshold=threshold,
        minmax_mmpmr=minmax_mmpmr(blocks, threshold),
        prodavg_mmpmr=prodavg_mmpmr(blocks, threshold),
        n_morphs=len(blocks),
    )
