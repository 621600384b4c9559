"""Persistence for embedding sets, morph protocols, score sets and reports.

Binary embedding interchange ("FEMB", little-endian throughout):

    magic    4 bytes  b"FEMB"
    version  u16      1
    flags    u16      bit 0: stored values are pre-normalized; rest reserved 0
    dim      u32
    count    u64
    record   u16 subject-id byte length, subject-id bytes (UTF-8),
             u16 sample-id byte length, sample-id bytes (UTF-8),
             f32 raw_norm, dim x f32 values

Values are stored in 32-bit floats and round-trip bit-exactly; on read they
are always renormalized in 64-bit arithmetic for computation, whatever the
flag says.  raw_norm keeps the pre-normalization magnitude as provenance.

The protocol format is line-oriented text: `pair A B refA refB` declares a
morph between subjects A and B built from the named reference samples, and
`probe S sample` registers a bona fide probe.  `#` starts a comment.
"""

from __future__ import annotations

import csv
import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .embedding import Embedding, normalize
from .errors import (
    BadMagic,
    CorruptRecord,
    DimensionMismatch,
    DimensionTooSmall,
    DuplicateKey,
    IoError,
    MissingProbes,
    ParseError,
    SelfMorph,
    TrailingData,
    TruncatedFile,
    UnsupportedVersion,
)

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
FLAG_PRENORMALIZED = 0x0001
_HEADER = struct.Struct("<4sHHIQ")
_U16 = struct.Struct("<H")
_F32 = struct.Struct("<f")


# ---------------------------------------------------------------------------
# embedding sets


@dataclass(frozen=True)
class EmbeddingRecord:
    """One keyed embedding: ids, stored float32 values and their provenance.

    `values` holds the exact 32-bit payload written to disk; `embedding`
    is the 64-bit renormalized view used for all arithmetic.
    """

    subject_id: str
    sample_id: str
    raw_norm: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 1:
            raise DimensionMismatch(f"record values must be 1-d, got {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        # quantize to the stored precision so write -> read is the identity
        object.__setattr__(self, "raw_norm", float(np.float32(self.raw_norm)))
        if not (self.raw_norm > 0.0) or not math.isfinite(self.raw_norm):
            raise CorruptRecord(
                f"raw_norm must be a positive finite value, got {self.raw_norm!r}"
            )

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.sample_id)

    @cached_property
    def embedding(self) -> Embedding:
        if not np.isfinite(self.values).all():
            raise CorruptRecord(f"record {self.key} has non-finite values")
        return normalize(self.values.astype(np.float64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.sample_id == other.sample_id
            and self.raw_norm == other.raw_norm
            and self.values.tobytes() == other.values.tobytes()
        )

    def __hash__(self):
        return hash((self.subject_id, self.sample_id))


@dataclass(frozen=True)
class EmbeddingSet:
    """An ordered, uniquely keyed collection of equal-dimension records."""

    dim: int
    records: tuple[EmbeddingRecord, ...]
    normalized_flag: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise DimensionTooSmall(f"dim must be >= 2, got {self.dim}")
        object.__setattr__(self, "records", tuple(self.records))
        index: dict[tuple[str, str], EmbeddingRecord] = {}
        for rec in self.records:
            if rec.values.shape[0] != self.dim:
                raise DimensionMismatch(
                    f"record {rec.key} has dim {rec.values.shape[0]}, set has {self.dim}"
                )
            if rec.key in index:
                raise DuplicateKey(f"duplicate record key {rec.key}")
            index[rec.key] = rec
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._index

    def get(self, subject_id: str, sample_id: str) -> EmbeddingRecord:
        return self._index[(subject_id, sample_id)]

    def subjects(self) -> list[str]:
        seen = dict.fromkeys(rec.subject_id for rec in self.records)
        return list(seen)

    @staticmethod
    def from_embeddings(
        entries, dim: int | None = None, normalized_flag: bool = True
    ) -> "EmbeddingSet":
        """Build a set from (subject_id, sample_id, Embedding, raw_norm) tuples."""
        records = []
        for subject_id, sample_id, emb, raw_norm in entries:
            records.append(
                EmbeddingRecord(
                    subject_id=subject_id,
                    sample_id=sample_id,
                    raw_norm=raw_norm,
                    values=emb.values.astype(np.float32),
                )
            )
        if dim is None:
            if not records:
                raise DimensionTooSmall("cannot infer dim from an empty entry list")
            dim = records[0].values.shape[0]
        return EmbeddingSet(dim=dim, records=tuple(records), normalized_flag=normalized_flag)


def _encode_id(value: str, what: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise CorruptRecord(f"{what} exceeds 65535 bytes")
    return raw


def write_embeddings(embedding_set: EmbeddingSet, destination) -> None:
    """Serialize a set to the FEMB binary format (atomic when given a path)."""
    flags = FLAG_PRENORMALIZED if embedding_set.normalized_flag else 0
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            FEMB_MAGIC, FEMB_VERSION, flags, embedding_set.dim, len(embedding_set.records)
        )
    )
    for rec in embedding_set.records:
        subject = _encode_id(rec.subject_id, "subject_id")
        sample = _encode_id(rec.sample_id, "sample_id")
        buf.write(_U16.pack(len(subject)))
        buf.write(subject)
        buf.write(_U16.pack(len(sample)))
        buf.write(sample)
        buf.write(_F32.pack(rec.raw_norm))
        buf.write(rec.values.tobytes())
    _write_bytes(destination, buf.getvalue())


class _Cursor:
    """Strict forward reader over a byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedFile(
                f"file ends inside {what} (needed {n} bytes, "
                f"{len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def read_embeddings(source) -> EmbeddingSet:
    """Parse a FEMB file, validating structure byte for byte.

    The whole declared content must be present and nothing more; every
    record is renormalized (and thereby validated) eagerly.
    """
    data = _read_bytes(source)
    cur = _Cursor(data)
    magic = cur.take(4, "magic")
    if magic != FEMB_MAGIC:
        raise BadMagic(f"expected {FEMB_MAGIC!r}, got {magic!r}")
    version = _U16.unpack(cur.take(2, "version"))[0]
    if version != FEMB_VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    flags = _U16.unpack(cur.take(2, "flags"))[0]
    if flags & ~FLAG_PRENORMALIZED:
        raise UnsupportedVersion(f"unknown flag bits 0x{flags:04x}")
    dim = struct.unpack("<I", cur.take(4, "dim"))[0]
    if dim < 2:
        raise DimensionTooSmall(f"dim must be >= 2, got {dim}")
    count = struct.unpack("<Q", cur.take(8, "count"))[0]
    records = []
    for i in range(count):
        subject = _decode_id(cur, f"record {i} subject id")
        sample = _decode_id(cur, f"record {i} sample id")
        raw_norm = _F32.unpack(cur.take(4, f"record {i} raw_norm"))[0]
        payload = cur.take(4 * dim, f"record {i} values")
        values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
        rec = EmbeddingRecord(
            subject_id=subject, sample_id=sample, raw_norm=raw_norm, values=values
        )
        rec.embedding  # renormalize now; rejects degenerate payloads early
        records.append(rec)
    if cur.remaining:
        raise TrailingData(f"{cur.remaining} bytes beyond declared {count} records")
    return EmbeddingSet(
        dim=dim, records=tuple(records), normalized_flag=bool(flags & FLAG_PRENORMALIZED)
    )


def _decode_id(cur: _Cursor, what: str) -> str:
    length = _U16.unpack(cur.take(2, what + " length"))[0]
    raw = cur.take(length, what)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptRecord(f"{what} is not valid UTF-8") from exc


def read_embeddings_csv(source) -> EmbeddingSet:
    """Ingest embeddings from CSV with header `subject,sample,v0..v{d-1}`.

    Rows are normalized on ingestion (the original norm is kept as
    raw_norm), so the resulting set always stores unit values.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TruncatedFile("empty CSV, expected a header row") from None
    if len(header) < 4 or header[0] != "subject" or header[1] != "sample":
        raise ParseError(1, "expected header subject,sample,v0..v{d-1}")
    dim = len(header) - 2
    expected = [f"v{i}" for i in range(dim)]
    if header[2:] != expected:
        raise ParseError(1, "value columns must be named v0..v{d-1}")
    entries = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise DimensionMismatch(
                f"line {line_no}: expected {dim + 2} fields, got {len(row)}"
            )
        try:
            raw = np.array([float(x) for x in row[2:]], dtype=np.float64)
        except ValueError:
            raise ParseError(line_no, "non-numeric embedding value") from None
        emb = normalize(raw)
        entries.append((row[0], row[1], emb, float(np.linalg.norm(raw))))
    return EmbeddingSet.from_embeddings(entries, dim=dim, normalized_flag=True)


# ---------------------------------------------------------------------------
# morph protocols


@dataclass(frozen=True)
class MorphPair:
    subject_a: str
    subject_b: str
    reference_sample_a: str
    reference_sample_b: str

    @property
    def morph_id(self) -> str:
        return f"{self.subject_a}+{self.subject_b}"


@dataclass(frozen=True)
class MorphProtocol:
    """Morph source pairs plus the probe samples of every subject involved."""

    pairs: tuple[MorphPair, ...]
    probes: dict[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(
            self, "probes", {s: tuple(p) for s, p in self.probes.items()}
        )
        for pair in self.pairs:
            if pair.subject_a == pair.subject_b:
                raise SelfMorph(f"pair morphs subject {pair.subject_a!r} with itself")
            for subject in (pair.subject_a, pair.subject_b):
                if not self.probes.get(subject):
                    raise MissingProbes(f"subject {subject!r} has no probes")


def read_protocol(source) -> MorphProtocol:
    """Parse and validate the line-oriented protocol format."""
    text = _read_text(source)
    pairs: list[MorphPair] = []
    pair_keys: set[tuple[str, str]] = set()
    probes: dict[str, list[str]] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "pair":
            if len(fields) != 5:
                raise ParseError(line_no, f"pair needs 4 arguments, got {len(fields) - 1}")
            pair = MorphPair(*fields[1:])
            if pair.subject_a == pair.subject_b:
                raise SelfMorph(
                    f"line {line_no}: pair morphs subject {pair.subject_a!r} with itself"
                )
            key = (pair.subject_a, pair.subject_b)
            if key in pair_keys:
                raise ParseError(line_no, f"duplicate pair {key}")
            pair_keys.add(key)
            pairs.append(pair)
        elif kind == "probe":
            if len(fields) != 3:
                raise ParseError(line_no, f"probe needs 2 arguments, got {len(fields) - 1}")
            subject, sample = fields[1], fields[2]
            bucket = probes.setdefault(subject, [])
            if sample in bucket:
                raise ParseError(line_no, f"duplicate probe {subject!r} {sample!r}")
            bucket.append(sample)
        else:
            raise ParseError(line_no, f"unknown directive {kind!r}")
    return MorphProtocol(
        pairs=tuple(pairs), probes={s: tuple(p) for s, p in probes.items()}
    )


def write_protocol(protocol: MorphProtocol, destination) -> None:
    lines = [
        f"pair {p.subject_a} {p.subject_b} {p.reference_sample_a} {p.reference_sample_b}"
        for p in protocol.pairs
    ]
    for subject, samples in protocol.probes.items():
        lines.extend(f"probe {subject} {sample}" for sample in samples)
    _write_bytes(destination, ("\n".join(lines) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# score sets

SCORE_LABELS = ("mated", "nonmated", "attack", "bonafide")


@dataclass(frozen=True)
class ScoreSet:
    """Labeled scores; labels are mated/nonmated/attack/bonafide."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for label, _ in self.entries:
            if label not in SCORE_LABELS:
                raise ParseError(0, f"unknown score label {label!r}")

    def scores(self, label: str) -> np.ndarray:
        return np.array([s for l, s in self.entries if l == label], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)


def read_scores(source) -> ScoreSet:
    """Read a `label,score` CSV into a ScoreSet."""
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TruncatedFile("empty CSV, expected a header row") from None
    if header != ["label", "score"]:
        raise ParseError(1, "expected header label,score")
    entries = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(line_no, f"expected 2 fields, got {len(row)}")
        label = row[0]
        if label not in SCORE_LABELS:
            raise ParseError(line_no, f"unknown score label {label!r}")
        try:
            score = float(row[1])
        except ValueError:
            raise ParseError(line_no, f"non-numeric score {row[1]!r}") from None
        entries.append((label, score))
    return ScoreSet(entries=tuple(entries))


def write_scores(score_set: ScoreSet, destination) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["label", "score"])
    for label, score in score_set.entries:
        writer.writerow([label, repr(score)])
    _write_bytes(destination, out.getvalue().encode("utf-8"))


# ---------------------------------------------------------------------------
# report tables


@dataclass(frozen=True)
class ReportTable:
    """A rendered-values table; formatting is the caller's responsibility."""

    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row has {len(row)} cells, table has {len(self.columns)} columns"
                )


def format_percent(value: float) -> str:
    """Render a fraction as a percentage with exactly 2 decimals."""
    return f"{100.0 * value:.2f}"


def write_report(table: ReportTable, fmt: str, destination) -> None:
    """Emit a table as CSV or Markdown with byte-deterministic output."""
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow(row)
        payload = out.getvalue()
    elif fmt == "markdown":
        lines = [
            "| " + " | ".join(table.columns) + " |",
            "|" + "|".join(" --- " for _ in table.columns) + "|",
        ]
        lines.extend("| " + " | ".join(row) + " |" for row in table.rows)
        payload = "\n".join(lines) + "\n"
    else:
        raise IoError(f"unknown report format {fmt!r}")
    _write_bytes(destination, payload.encode("utf-8"))


# ---------------------------------------------------------------------------
# shared file helpers


def _read_bytes(source) -> bytes:
    if hasattr(source, "read"):
        return source.read()
    try:
        return Path(source).read_bytes()
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _read_text(source) -> str:
    data = _read_bytes(source)
    if isinstance(data, str):
        return data
    return data.decode("utf-8")


def _write_bytes(destination, payload: bytes) -> None:
    if hasattr(destination, "write"):
        try:
            destination.write(payload)
        except TypeError:  # text stream
            destination.write(payload.decode("utf-8"))
        return
    path = Path(destination)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise IoError(str(exc)) from exc
