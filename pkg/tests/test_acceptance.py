"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest -s tests/test_acceptance.py` to see one pass/fail line per
criterion.  Thresholds and tolerances are pinned here and nowhere else.
"""

import io
import json
import time

import numpy as np
import pytest

from morphkit import (
    BLACK_BOX,
    WHITE_BOX,
    EmbeddingSet,
    SimConfig,
    auc,
    calibrate_threshold,
    eer,
    fmr,
    minmax_mmpmr,
    normalize,
    prodavg_mmpmr,
    read_embeddings,
    run_attack_simulation,
    score_morphs,
    write_embeddings,
    write_protocol,
)
from morphkit.cli import main
from morphkit.dataset_io import MorphPair, MorphProtocol
from morphkit.errors import MorphkitError
from morphkit.vulnerability import MorphScoreBlock, SubjectProbeScores

HEADER_LEN = 20
SWEEP_RHOS = (0.2, 0.5, 0.8, 1.0)
N_SEEDS = 20


def _report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _spearman(x, y):
    def ranks(v):
        order = np.argsort(v, kind="mergesort")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        # average ranks over ties
        for value in set(v):
            mask = np.asarray(v) == value
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(list(x)), ranks(list(y))
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


# --- criterion 1: optimal-morph minimality ------------------------------------


def test_optimal_morph_minimality_1000_pairs():
    d, n_pairs, n_candidates = 128, 1000, 10_000
    batch = 50
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_margin = np.inf
    worst_equi = 0.0
    for _ in range(n_pairs // batch):
        x1 = rng.standard_normal((batch, d))
        x1 /= np.linalg.norm(x1, axis=1, keepdims=True)
        x2 = rng.standard_normal((batch, d))
        x2 /= np.linalg.norm(x2, axis=1, keepdims=True)
        cands = rng.standard_normal((n_candidates, d))
        cands /= np.linalg.norm(cands, axis=1, keepdims=True)
        sums = x1 + x2
        best = 2.0 - np.linalg.norm(sums, axis=1)  # objective at x*
        objectives = 2.0 - sums @ cands.T  # (batch, n_candidates)
        worst_margin = min(worst_margin, float((objectives.min(axis=1) - best).min()))
        stars = sums / np.linalg.norm(sums, axis=1, keepdims=True)
        equi = np.abs(
            np.einsum("bd,bd->b", x1, stars) - np.einsum("bd,bd->b", x2, stars)
        )
        worst_equi = max(worst_equi, float(equi.max()))
    elapsed = time.perf_counter() - start
    ok = worst_margin >= -1e-12 and worst_equi < 1e-9 and elapsed < 10.0
    _report(
        "optimal-morph minimality (1000 pairs x 10k candidates, d=128)",
        ok,
        f"worst margin {worst_margin:.3e}, max equidistance gap {worst_equi:.2e}, "
        f"{elapsed:.2f}s",
    )


# --- criterion 2: MMPMR oracle equivalence -------------------------------------


def _random_blocks(rng, n_morphs, max_probes):
    blocks = []
    for m in range(n_morphs):
        subjects = []
        for s in range(2):
            n = int(rng.integers(1, max_probes + 1))
            scores = tuple((f"p{i}", float(v)) for i, v in enumerate(rng.uniform(-1, 1, n)))
            subjects.append(SubjectProbeScores(f"m{m}s{s}", scores))
        blocks.append(MorphScoreBlock(f"m{m}", tuple(subjects)))
    return blocks


def _minmax_oracle(blocks, t):
    hits = sum(
        1
        for b in blocks
        if min(max(s for _, s in subj.scores) for subj in b.subjects) >= t
    )
    return hits / len(blocks)


def _prodavg_oracle(blocks, t):
    total = 0.0
    for b in blocks:
        term = 1.0
        for subj in b.subjects:
            term *= sum(1 for _, s in subj.scores if s >= t) / len(subj.scores)
        total += term
    return total / len(blocks)


def test_mmpmr_oracle_equivalence_50_instances():
    rng = np.random.default_rng(7)
    exact = 0
    for _ in range(50):
        blocks = _random_blocks(rng, int(rng.integers(1, 4)), 3)
        t = float(rng.uniform(-1, 1))
        if minmax_mmpmr(blocks, t) == _minmax_oracle(blocks, t) and prodavg_mmpmr(
            blocks, t
        ) == _prodavg_oracle(blocks, t):
            exact += 1
    _report(
        "MMPMR oracle equivalence (50 tiny instances, exact)",
        exact == 50,
        f"{exact}/50 instances bit-equal to brute force",
    )


# --- criterion 3: dominance ordering --------------------------------------------


def test_prodavg_dominated_by_minmax_1000_instances():
    rng = np.random.default_rng(8)
    violations = 0
    for _ in range(1000):
        blocks = _random_blocks(rng, int(rng.integers(1, 6)), 4)
        t = float(rng.uniform(-1.05, 1.05))
        if prodavg_mmpmr(blocks, t) > minmax_mmpmr(blocks, t):
            violations += 1
    _report(
        "dominance ordering prodavg <= minmax (1000 instances)",
        violations == 0,
        f"{violations} violations",
    )


# --- criterion 4: calibration contract -------------------------------------------


def test_calibration_contract_100_sets():
    rng = np.random.default_rng(9)
    target = 1e-3
    ok = True
    for _ in range(100):
        n = int(rng.integers(1000, 4000))
        scores = rng.normal(loc=0.0, scale=0.3, size=n)
        point = calibrate_threshold(scores, target)
        if not (point.fmr <= target and fmr(scores, point.threshold) == point.fmr):
            ok = False
            break
        lower = scores[scores < point.threshold]
        if lower.size and fmr(scores, float(lower.max())) <= target:
            ok = False
            break
    _report(
        "calibration contract at FMR 1e-3 (100 random score sets)",
        ok,
        "realized FMR <= target and next-lower candidate violates it",
    )


# --- criterion 5: metric sanity ---------------------------------------------------


def test_metric_sanity():
    rng = np.random.default_rng(1)
    near_half = auc(rng.normal(size=1000), rng.normal(size=1000))
    separated_auc = auc([0.7, 0.8, 0.9], [0.1, 0.2, 0.3])
    separated_eer, _ = eer([0.7, 0.8, 0.9], [0.1, 0.2, 0.3])
    pos = list(rng.normal(size=500)) + [0.25] * 10
    neg = list(rng.normal(size=400)) + [0.25] * 5
    complement = auc(pos, neg) + auc(neg, pos)
    ok = (
        abs(near_half - 0.5) < 0.03
        and separated_auc == 1.0
        and separated_eer == 0.0
        and complement == 1.0
    )
    _report(
        "metric sanity (AUC/EER trivial cases, exact complement)",
        ok,
        f"auc(identical)={near_half:.4f}, auc(sep)={separated_auc}, "
        f"eer(sep)={separated_eer}, auc+aucT={complement!r}",
    )


# --- criteria 6 and 7: simulator phenomenology -----------------------------------


def _evaluate_run(seed, rho):
    config = SimConfig(seed=seed, cross_frs_correlation=rho)
    result = run_attack_simulation(config)
    mated, nonmated = result.calibration_scores(result.frs_a.label)
    point = calibrate_threshold(nonmated, 1e-3, mated)
    white_blocks = score_morphs(
        result.attacks[WHITE_BOX], result.probes[result.frs_a.label], result.protocol
    )
    black_blocks = score_morphs(
        result.attacks[BLACK_BOX], result.probes[result.frs_b.label], result.protocol
    )
    white = minmax_mmpmr(white_blocks, point.threshold)
    black = minmax_mmpmr(black_blocks, point.threshold)
    return point, white, black


@pytest.fixture(scope="module")
def sweep():
    runs = {}
    for rho in SWEEP_RHOS:
        runs[rho] = [_evaluate_run(seed, rho) for seed in range(1, N_SEEDS + 1)]
    return runs


def test_simulator_white_box_success(sweep):
    whites = [white for _, white, _ in sweep[0.8]]
    fmrs = [point.fmr for point, _, _ in sweep[0.8]]
    ok = (
        np.mean(whites) >= 0.90
        and min(whites) >= 0.85  # per-seed tolerance of +-0.05
        and max(fmrs) <= 1e-3
    )
    _report(
        "simulator white-box MinMax-MMPMR >= 0.90 at FMR <= 1e-3 (default config)",
        ok,
        f"mean {np.mean(whites):.3f}, min {min(whites):.3f} over {N_SEEDS} seeds, "
        f"max realized FMR {max(fmrs):.1e}",
    )


def test_black_box_degradation_and_transfer_monotonicity(sweep):
    dominance_ok = all(
        black <= white for rho in SWEEP_RHOS for _, white, black in sweep[rho]
    )
    means = [float(np.mean([black for _, _, black in sweep[rho]])) for rho in SWEEP_RHOS]
    swept_up = all(a <= b for a, b in zip(means, means[1:]))
    rank_corr = _spearman(SWEEP_RHOS, means)
    ok = dominance_ok and swept_up and rank_corr > 0.8
    _report(
        "black-box <= white-box on every seed, success monotone in rho",
        ok,
        f"mean black MinMax by rho {dict(zip(SWEEP_RHOS, [round(m, 3) for m in means]))}, "
        f"Spearman {rank_corr:.3f}",
    )


# --- criterion 8: round trip and format robustness --------------------------------


def test_roundtrip_200_sets_and_header_corruption():
    rng = np.random.default_rng(10)
    mismatches = 0
    undetected = 0
    n_corruption_trials = 0
    for case in range(200):
        dim = int(rng.integers(2, 64))
        count = int(rng.integers(1, 8))
        entries = []
        for i in range(count):
            raw = rng.standard_normal(dim)
            entries.append(
                (f"subject-{case}-{i}", f"sample{i}", normalize(raw), float(np.linalg.norm(raw)))
            )
        original = EmbeddingSet.from_embeddings(
            entries, dim=dim, normalized_flag=bool(rng.integers(0, 2))
        )
        buf = io.BytesIO()
        write_embeddings(original, buf)
        data = buf.getvalue()
        if read_embeddings(io.BytesIO(data)) != original:
            mismatches += 1
        for pos in range(HEADER_LEN):
            corrupted = bytearray(data)
            corrupted[pos] ^= 0xFF
            n_corruption_trials += 1
            try:
                read_embeddings(io.BytesIO(bytes(corrupted)))
                undetected += 1
            except MorphkitError:
                pass
    ok = mismatches == 0 and undetected == 0
    _report(
        "round-trip bitwise (200 sets) and header corruption rejection",
        ok,
        f"{mismatches} round-trip mismatches, {undetected}/{n_corruption_trials} "
        f"corruptions accepted",
    )


# --- criterion 9: throughput --------------------------------------------------------


def test_bench_1000_pairs_d512_under_one_second(tmp_path):
    d, n_pairs = 512, 1000
    rng = np.random.default_rng(11)
    entries = []
    pairs = []
    probes = {}
    for p in range(n_pairs):
        a, b = f"s{2 * p:04d}", f"s{2 * p + 1:04d}"
        for name in (a, b):
            entries.append((name, "r0", normalize(rng.standard_normal(d)), 1.0))
            probes[name] = ("r0",)
        pairs.append(MorphPair(a, b, "r0", "r0"))
    emb_path = tmp_path / "refs.femb"
    write_embeddings(EmbeddingSet.from_embeddings(entries, dim=d), emb_path)
    protocol_path = tmp_path / "protocol.txt"
    write_protocol(MorphProtocol(pairs=tuple(pairs), probes=probes), protocol_path)
    report = tmp_path / "bench.csv"
    code = main(
        [
            "bench",
            "--in", str(emb_path),
            "--protocol", str(protocol_path),
            "--reps", "3",
            "--label", "embedding-morph",
            "--out", str(report),
        ]
    )
    manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
    mean = manifest["timings_s"]["mean"]
    ok = code == 0 and mean < 1.0
    _report(
        "bench: 1000-pair morph generation at d=512 under 1 s",
        ok,
        f"mean {mean:.4f}s over 3 reps",
    )
