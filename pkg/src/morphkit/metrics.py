"""Verification metrics and operating-threshold calibration.

Conventions, applied consistently by every consumer of this module:

  * a comparison is a match iff score >= threshold;
  * candidate thresholds are the observed scores themselves (plus +inf for
    calibration), never interpolated values;
  * scores are raw cosine similarities, no normalization.

All functions copy and sort internally; caller data is never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyScores, InvalidTargetFmr


@dataclass(frozen=True)
class OperatingPoint:
    """A decision threshold together with its measured error rates.

    fmr and fnmr are exact empirical fractions of the score sets the point
    was computed from; fnmr is None when no mated scores were supplied.
    source_counts records (n_mated, n_nonmated).
    """

    threshold: float
    fmr: float
    fnmr: float | None
    source_counts: tuple[int, int]


def _as_scores(scores, what: str) -> np.ndarray:
    a = np.asarray(scores, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise EmptyScores(f"{what} score list is empty")
    return a


def fmr(nonmated_scores, threshold: float) -> float:
    """Fraction of nonmated scores at or above the threshold."""
    a = _as_scores(nonmated_scores, "nonmated")
    return int(np.count_nonzero(a >= threshold)) / a.size


def fnmr(mated_scores, threshold: float) -> float:
    """Fraction of mated scores strictly below the threshold."""
    a = _as_scores(mated_scores, "mated")
    return int(np.count_nonzero(a < threshold)) / a.size


def calibrate_threshold(
    nonmated_scores,
    target_fmr: float,
    mated_scores=None,
) -> OperatingPoint:
    """Smallest threshold whose empirical FMR does not exceed the target.

    Candidates are the observed nonmated scores plus +inf, so the result is
    always attainable (+inf gives FMR 0).  Because FMR is non-increasing in
    the threshold, the next-lower candidate is guaranteed to violate the
    target.  When mated scores are supplied the realized FNMR is reported as
    well.
    """
    if not (0.0 < target_fmr < 1.0):
        raise InvalidTargetFmr(f"target_fmr must be in (0, 1), got {target_fmr!r}")
    a = _as_scores(nonmated_scores, "nonmated")
    n = a.size
    uniq = np.unique(a)  # sorted ascending
    # fmr at threshold uniq[i] is the fraction of scores >= uniq[i]
    counts_ge = n - np.searchsorted(np.sort(a), uniq, side="left")
    threshold = math.inf
    realized = 0.0
    for t, c in zip(uniq, counts_ge):
        if c / n <= target_fmr:
            threshold = float(t)
            realized = int(c) / n
            break
    fnmr_value = None
    n_mated = 0
    if mated_scores is not None:
        fnmr_value = fnmr(mated_scores, threshold)
        n_mated = np.asarray(mated_scores).size
    return OperatingPoint(
        threshold=threshold,
        fmr=realized,
        fnmr=fnmr_value,
        source_counts=(n_mated, n),
    )


def eer(mated_scores, nonmated_scores) -> tuple[float, float]:
    """Equal error rate over the observed-score threshold grid.

    Scans the union of observed scores, picks the threshold minimizing
    |fmr - fnmr| (ties resolved toward the lower threshold) and reports
    (fmr + fnmr) / 2 there, together with that threshold.
    """
    mated = np.sort(_as_scores(mated_scores, "mated"))
    nonmated = np.sort(_as_scores(nonmated_scores, "nonmated"))
    candidates = np.unique(np.concatenate([mated, nonmated]))
    fmrs = (nonmated.size - np.searchsorted(nonmated, candidates, side="left")) / nonmated.size
    fnmrs = np.searchsorted(mated, candidates, side="left") / mated.size
    best = int(np.argmin(np.abs(fmrs - fnmrs)))  # argmin takes the first = lowest
    return float((fmrs[best] + fnmrs[best]) / 2.0), float(candidates[best])


def auc(positive_scores, negative_scores) -> float:
    """Probability a positive outranks a negative, ties counting half.

    Rank-based (Mann-Whitney) statistic, computed from exact integer pair
    counts.  The value is expressed through the complement when above 0.5 so
    that auc(p, n) + auc(n, p) sums to exactly 1.0 in floating point.
    """
    pos = _as_scores(positive_scores, "positive")
    neg = np.sort(_as_scores(negative_scores, "negative"))
    lt = int(np.searchsorted(neg, pos, side="left").sum())  # pairs with neg < pos
    le = int(np.searchsorted(neg, pos, side="right").sum())  # pairs with neg <= pos
    numer = lt + le  # 2 * wins + ties
    denom = 2 * pos.size * neg.size
    if 2 * numer <= denom:
        return numer / denom
    return 1.0 - (denom - numer) / denom
