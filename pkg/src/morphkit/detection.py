"""Detectability evaluation: AUC and EER of an external attack detector.

Detector scores are ingested, never produced; attack scores are the
positive class.  This is a thin, tested adapter over the metrics module.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import metrics
from .errors import EmptyScores


@dataclass(frozen=True)
class DetectionResult:
    attack_label: str
    auc: float
    eer: float
    n_attack: int
    n_bonafide: int


def evaluate_detection(attack_scores, bonafide_scores, label: str) -> DetectionResult:
    """AUC and EER of attack (positive) versus bona fide (negative) scores."""
    attack = list(attack_scores)
    bonafide = list(bonafide_scores)
    if not attack or not bonafide:
        raise EmptyScores("both attack and bona fide score sets must be non-empty")
    auc_value = metrics.auc(attack, bonafide)
    eer_value, _ = metrics.eer(mated_scores=attack, nonmated_scores=bonafide)
    return DetectionResult(
        attack_label=label,
        auc=auc_value,
        eer=eer_value,
        n_attack=len(attack),
        n_bonafide=len(bonafide),
    )
