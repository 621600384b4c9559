"""Embedding-space morphing attacks and vulnerability evaluation toolkit."""

from .embedding import (
    Embedding,
    cosine_distance,
    cosine_similarity,
    multi_morph,
    normalize,
    optimal_morph,
    weighted_morph,
)
from .dataset_io import (
    EmbeddingRecord,
    EmbeddingSet,
    MorphPair,
    MorphProtocol,
    ReportTable,
    ScoreSet,
    format_percent,
    read_embeddings,
    read_embeddings_csv,
    read_protocol,
    read_scores,
    write_embeddings,
    write_protocol,
    write_report,
    write_scores,
)
from .metrics import OperatingPoint, auc, calibrate_threshold, eer, fmr, fnmr
from .simulate import (
    BLACK_BOX,
    WHITE_BOX,
    LatentIdentity,
    SimConfig,
    SimulationResult,
    SyntheticFrs,
    extract,
    invert,
    make_correlated_frs_pair,
    run_attack_simulation,
)
from .vulnerability import (
    MorphScoreBlock,
    SubjectProbeScores,
    VulnerabilityResult,
    evaluate,
    minmax_mmpmr,
    prodavg_mmpmr,
    score_morphs,
)
from .detection import DetectionResult, evaluate_detection
from . import errors

__version__ = "0.1.0"

__all__ = [
    "Embedding",
    "normalize",
    "cosine_similarity",
    "cosine_distance",
    "optimal_morph",
    "weighted_morph",
    "multi_morph",
    "EmbeddingRecord",
    "EmbeddingSet",
    "MorphPair",
    "MorphProtocol",
    "ScoreSet",
    "ReportTable",
    "read_embeddings",
    "write_embeddings",
    "read_embeddings_csv",
    "read_protocol",
    "write_protocol",
    "read_scores",
    "write_scores",
    "write_report",
    "format_percent",
    "OperatingPoint",
    "fmr",
    "fnmr",
    "calibrate_threshold",
    "eer",
    "auc",
    "LatentIdentity",
    "SyntheticFrs",
    "SimConfig",
    "SimulationResult",
    "make_correlated_frs_pair",
    "extract",
    "invert",
    "run_attack_simulation",
    "WHITE_BOX",
    "BLACK_BOX",
    "MorphScoreBlock",
    "SubjectProbeScores",
    "VulnerabilityResult",
    "score_morphs",
    "minmax_mmpmr",
    "prodavg_mmpmr",
    "evaluate",
    "DetectionResult",
    "evaluate_detection",
    "errors",
    "__version__",
]
