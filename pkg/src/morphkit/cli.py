"""Command-line front end: morph generation, simulation, calibration,
vulnerability and detection evaluation, and runtime benchmarking.

Every command writes a JSON run manifest next to its outputs recording the
resolved configuration, SHA-256 digests of the exact bytes read, the seed,
the tool version and per-phase wall-clock timings, so any result can be
re-verified byte for byte.  The MORPHKIT_OUT environment variable sets the
default output directory; no other environment switches exist.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dataset_io, metrics, vulnerability
from .detection import evaluate_detection
from .embedding import optimal_morph, weighted_morph
from .errors import EmptyScores, MissingEmbedding, MorphkitError
from .dataset_io import (
    EmbeddingSet,
    ReportTable,
    format_percent,
    read_embeddings,
    read_protocol,
    read_scores,
    write_embeddings,
    write_protocol,
    write_report,
)
from .simulate import BLACK_BOX, WHITE_BOX, SimConfig, run_attack_simulation


@dataclass
class RunManifest:
    """Reproducibility record written alongside every command's outputs."""

    command: str
    tool_version: str = __version__
    seed: int | None = None
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)  # path -> sha256 of bytes read
    outputs: list = field(default_factory=list)
    timings_s: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.inputs[str(path)] = f"sha256:{digest}"

    def write(self, destination) -> None:
        payload = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        dataset_io._write_bytes(destination, payload.encode("utf-8"))
        self.outputs.append(str(destination))


class _Timer:
    def __init__(self, manifest: RunManifest, phase: str):
        self.manifest = manifest
        self.phase = phase

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings_s[self.phase] = time.perf_counter() - self.start
        return False


def _default_out_dir() -> Path:
    return Path(os.environ.get("MORPHKIT_OUT", "."))


def _manifest_path(out, command: str) -> Path:
    if out is not None:
        return Path(str(out) + ".manifest.json")
    return _default_out_dir() / f"{command}.manifest.json"


# ---------------------------------------------------------------------------
# commands


def cmd_morph(args) -> int:
    manifest = RunManifest(command="morph", config={"alpha": args.alpha})
    with _Timer(manifest, "read"):
        embeddings = read_embeddings(args.in_file)
        protocol = read_protocol(args.protocol)
        manifest.add_input(args.in_file)
        manifest.add_input(args.protocol)
    with _Timer(manifest, "compute"):
        entries = []
        for pair in protocol.pairs:
            try:
                rec_a = embeddings.get(pair.subject_a, pair.reference_sample_a)
                rec_b = embeddings.get(pair.subject_b, pair.reference_sample_b)
            except KeyError as exc:
                raise MissingEmbedding(f"reference sample not found: {exc}") from None
            a, b = rec_a.embedding, rec_b.embedding
            if args.alpha is None:
                morph = optimal_morph(a, b)
                raw = float(np.linalg.norm(a.values + b.values))
            else:
                morph = weighted_morph(a, b, args.alpha)
                raw = float(
                    np.linalg.norm(args.alpha * a.values + (1.0 - args.alpha) * b.values)
                )
            entries.append(("morph", pair.morph_id, morph, raw))
        out_set = EmbeddingSet.from_embeddings(entries, dim=embeddings.dim)
    with _Timer(manifest, "write"):
        write_embeddings(out_set, args.out)
        manifest.outputs.append(str(args.out))
    manifest.write(_manifest_path(args.out, "morph"))
    print(f"wrote {len(out_set)} morph embeddings to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    config = SimConfig.from_file(args.config)
    if args.seed is not None:
        config = SimConfig(**{**_config_dict(config), "seed": args.seed})
    out_dir = Path(args.out) if args.out else _default_out_dir()
    manifest = RunManifest(command="simulate", seed=config.seed, config=_config_dict(config))
    manifest.add_input(args.config)
    with _Timer(manifest, "simulate"):
        result = run_attack_simulation(config)
    with _Timer(manifest, "write"):
        out_dir.mkdir(parents=True, exist_ok=True)
        files: dict[str, object] = {}
        for label in (result.frs_a.label, result.frs_b.label):
            files[f"refs_{label}.femb"] = result.references[label]
            files[f"probes_{label}.femb"] = result.probes[label]
        files[f"attack_{WHITE_BOX}.femb"] = result.attacks[WHITE_BOX]
        files[f"attack_{BLACK_BOX}.femb"] = result.attacks[BLACK_BOX]
        for name, embedding_set in files.items():
            write_embeddings(embedding_set, out_dir / name)
            manifest.outputs.append(str(out_dir / name))
        write_protocol(result.protocol, out_dir / "protocol.txt")
        manifest.outputs.append(str(out_dir / "protocol.txt"))
    manifest.write(out_dir / "manifest.json")
    for path in manifest.outputs:
        print(path)
    return 0


def _config_dict(config: SimConfig) -> dict:
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


def _scores_from_input(path, label: str) -> np.ndarray:
    """Scores from a CSV ScoreSet (rows of the given label) or a FEMB set.

    For embedding input, mated scores are all distinct same-subject sample
    pairs and nonmated scores are all cross-subject pairs.
    """
    p = Path(path)
    if p.suffix.lower() == ".csv":
        scores = read_scores(p).scores(label)
        if scores.size == 0:
            raise EmptyScores(f"{path} has no {label!r} rows")
        return scores
    embeddings = read_embeddings(p)
    mat = np.stack([rec.embedding.values for rec in embeddings.records])
    subj = np.array([rec.subject_id for rec in embeddings.records])
    gram = mat @ mat.T
    iu = np.triu_indices(len(embeddings.records), k=1)
    same = subj[iu[0]] == subj[iu[1]]
    selected = gram[iu][same] if label == "mated" else gram[iu][~same]
    if selected.size == 0:
        raise EmptyScores(f"{path} yields no {label} comparisons")
    return selected


def cmd_calibrate(args) -> int:
    manifest = RunManifest(
        command="calibrate", config={"target_fmr": args.target_fmr}
    )
    with _Timer(manifest, "read"):
        nonmated = _scores_from_input(args.nonmated, "nonmated")
        manifest.add_input(args.nonmated)
        mated = None
        if args.mated:
            mated = _scores_from_input(args.mated, "mated")
            manifest.add_input(args.mated)
    with _Timer(manifest, "compute"):
        point = metrics.calibrate_threshold(nonmated, args.target_fmr, mated)
    fnmr_text = "n/a" if point.fnmr is None else f"{point.fnmr:.6f}"
    print(f"threshold={point.threshold!r}")
    print(f"fmr={point.fmr:.6f}")
    print(f"fnmr={fnmr_text}")
    print(f"n_mated={point.source_counts[0]} n_nonmated={point.source_counts[1]}")
    if args.out:
        payload = {
            "threshold": point.threshold,
            "fmr": point.fmr,
            "fnmr": point.fnmr,
            "n_mated": point.source_counts[0],
            "n_nonmated": point.source_counts[1],
        }
        dataset_io._write_bytes(
            args.out, (json.dumps(payload, indent=2) + "\n").encode("utf-8")
        )
        manifest.outputs.append(str(args.out))
    manifest.write(_manifest_path(args.out, "calibrate"))
    return 0


def _resolve_threshold(args, manifest: RunManifest) -> float:
    if args.threshold is not None:
        return args.threshold
    if args.nonmated is None:
        raise EmptyScores("need --threshold or --nonmated scores for calibration")
    nonmated = _scores_from_input(args.nonmated, "nonmated")
    manifest.add_input(args.nonmated)
    point = metrics.calibrate_threshold(nonmated, args.target_fmr)
    manifest.config["calibrated_fmr"] = point.fmr
    return point.threshold


def cmd_eval_vuln(args) -> int:
    manifest = RunManifest(
        command="eval-vuln",
        config={
            "frs_label": args.frs_label,
            "attack_label": args.attack_label,
            "attack_mode": args.attack_mode,
            "target_fmr": args.target_fmr,
        },
    )
    with _Timer(manifest, "read"):
        morphs = read_embeddings(args.morphs)
        probes = read_embeddings(args.probes)
        protocol = read_protocol(args.protocol)
        for path in (args.morphs, args.probes, args.protocol):
            manifest.add_input(path)
        threshold = _resolve_threshold(args, manifest)
        manifest.config["threshold"] = threshold
    with _Timer(manifest, "compute"):
        result = vulnerability.evaluate(
            morphs,
            probes,
            protocol,
            threshold,
            frs_label=args.frs_label,
            attack_label=args.attack_label,
            attack_mode=args.attack_mode,
        )
        table = vulnerability_report_table([result])
    _emit_report(table, args, manifest, "eval-vuln")
    return 0


def vulnerability_report_table(results) -> ReportTable:
    """Tables 3/4 shaped rows: percentages with exactly two decimals."""
    return ReportTable(
        columns=("frs", "attack", "mode", "minmax_mmpmr_pct", "prodavg_mmpmr_pct"),
        rows=tuple(
            (
                r.frs_label,
                r.attack_label,
                r.attack_mode,
                format_percent(r.minmax_mmpmr),
                format_percent(r.prodavg_mmpmr),
            )
            for r in results
        ),
    )


def detection_report_table(results) -> ReportTable:
    """Table 6 shaped rows: AUC with three decimals, EER as a percentage."""
    return ReportTable(
        columns=("attack", "auc", "eer_pct"),
        rows=tuple(
            (r.attack_label, f"{r.auc:.3f}", format_percent(r.eer)) for r in results
        ),
    )


def cmd_eval_detect(args) -> int:
    manifest = RunManifest(command="eval-detect", config={"label": args.label})
    with _Timer(manifest, "read"):
        attack = read_scores(args.attack).scores("attack")
        bonafide = read_scores(args.bonafide).scores("bonafide")
        manifest.add_input(args.attack)
        manifest.add_input(args.bonafide)
    with _Timer(manifest, "compute"):
        result = evaluate_detection(attack, bonafide, args.label)
        table = detection_report_table([result])
    manifest.config["n_attack"] = result.n_attack
    manifest.config["n_bonafide"] = result.n_bonafide
    _emit_report(table, args, manifest, "eval-detect")
    return 0


def cmd_bench(args) -> int:
    manifest = RunManifest(
        command="bench", config={"reps": args.reps, "label": args.label}
    )
    if args.reps < 2:
        raise MorphkitError("bench needs --reps >= 2 for a sample standard deviation")
    with _Timer(manifest, "read"):
        embeddings = read_embeddings(args.in_file)
        protocol = read_protocol(args.protocol)
        manifest.add_input(args.in_file)
        manifest.add_input(args.protocol)
    references = []
    for pair in protocol.pairs:
        try:
            references.append(
                (
                    embeddings.get(pair.subject_a, pair.reference_sample_a).embedding,
                    embeddings.get(pair.subject_b, pair.reference_sample_b).embedding,
                )
            )
        except KeyError as exc:
            raise MissingEmbedding(f"reference sample not found: {exc}") from None
    times = []
    for _ in range(args.reps):
        start = time.perf_counter()
        for a, b in references:
            optimal_morph(a, b)
        times.append(time.perf_counter() - start)
    mean = statistics.fmean(times)
    std = statistics.stdev(times)
    manifest.config["n_pairs"] = len(references)
    manifest.config["dim"] = embeddings.dim
    manifest.timings_s["per_rep"] = times
    manifest.timings_s["mean"] = mean
    manifest.timings_s["std"] = std
    table = ReportTable(
        columns=("attack", "runtime_s", "reps"),
        rows=((args.label, f"{mean:.2f} ± {std:.2f}", str(args.reps)),),
    )
    print(f"{args.label}: {mean:.2f} ± {std:.2f} s over {args.reps} reps "
          f"({len(references)} pairs, d={embeddings.dim})")
    _emit_report(table, args, manifest, "bench")
    return 0


def _emit_report(table: ReportTable, args, manifest: RunManifest, command: str) -> None:
    if args.out:
        write_report(table, args.format, args.out)
        manifest.outputs.append(str(args.out))
        print(f"wrote report to {args.out}")
    else:
        import io as _io

        buf = _io.StringIO()
        write_report(table, args.format, buf)
        sys.stdout.write(buf.getvalue())
    manifest.write(_manifest_path(args.out, command))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphkit",
        description="Embedding-space morphing attacks and vulnerability evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"morphkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("morph", help="generate morph embeddings for protocol pairs")
    p.add_argument("--in", dest="in_file", required=True, help="FEMB embeddings file")
    p.add_argument("--protocol", required=True, help="protocol text file")
    p.add_argument("--out", required=True, help="output FEMB file")
    p.add_argument("--alpha", type=float, default=None,
                   help="blend weight in (0,1); default is the optimal 0.5 morph")
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("simulate", help="run the synthetic attack simulation")
    p.add_argument("--config", required=True, help="key=value SimConfig file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate an operating threshold")
    p.add_argument("--nonmated", required=True,
                   help="nonmated scores (.csv label,score) or embeddings (.femb)")
    p.add_argument("--mated", default=None,
                   help="optional mated scores or embeddings for FNMR")
    p.add_argument("--target-fmr", type=float, default=1e-3, dest="target_fmr")
    p.add_argument("--out", default=None, help="optional JSON output for the point")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval-vuln", help="MMPMR vulnerability evaluation")
    p.add_argument("--morphs", required=True, help="morph embeddings FEMB")
    p.add_argument("--probes", required=True, help="probe embeddings FEMB")
    p.add_argument("--protocol", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--nonmated", default=None,
                   help="nonmated scores/embeddings to calibrate the threshold from")
    p.add_argument("--target-fmr", type=float, default=1e-3, dest="target_fmr")
    p.add_argument("--frs-label", default="FRS", dest="frs_label")
    p.add_argument("--attack-label", default="morph", dest="attack_label")
    p.add_argument("--attack-mode", default=WHITE_BOX, dest="attack_mode",
                   choices=(WHITE_BOX, BLACK_BOX))
    p.add_argument("--format", default="csv", choices=("csv", "markdown"))
    p.add_argument("--out", default=None, help="report file (stdout when omitted)")
    p.set_defaults(func=cmd_eval_vuln)

    p = sub.add_parser("eval-detect", help="detector AUC/EER evaluation")
    p.add_argument("--attack", required=True, help="attack scores CSV")
    p.add_argument("--bonafide", required=True, help="bona fide scores CSV")
    p.add_argument("--label", default="attack")
    p.add_argument("--format", default="csv", choices=("csv", "markdown"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("bench", help="time end-to-end morph generation")
    p.add_argument("--in", dest="in_file", required=True, help="FEMB embeddings file")
    p.add_argument("--protocol", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--label", default="embedding-morph")
    p.add_argument("--format", default="csv", choices=("csv", "markdown"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MorphkitError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
