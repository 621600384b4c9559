"""Batch a pretrained feature extractor over aligned face images.

The model is any TorchScript module taking a float image batch (N, 3, H, W)
in [0, 1] and returning one fixed-dimension vector per image.  Inputs are
assumed aligned and preprocessed; no cropping or detection happens here.
Embeddings are written raw (unnormalized) to the FEMB file, with the norm
recorded per record, plus a text manifest mapping every record back to its
source image.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import (
    IdCollisionError,
    ImageDecodeError,
    MappingError,
    ModelContractError,
    ModelLoadError,
)
from .femb import write_femb

BATCH_SIZE = 32


@dataclass(frozen=True)
class ExportManifestEntry:
    subject_id: str
    sample_id: str
    image_path: str
    raw_norm: float


def load_model(model_file) -> torch.jit.ScriptModule:
    try:
        with warnings.catch_warnings():
            # recent torch deprecates TorchScript, but shipped .pt script
            # modules are the interchange format pretrained extractors use
            warnings.simplefilter("ignore", DeprecationWarning)
            model = torch.jit.load(str(model_file), map_location="cpu")
    except Exception as exc:
        raise ModelLoadError(f"cannot load {model_file}: {exc}") from exc
    model.eval()
    return model


def read_image_list(image_list_file) -> list[str]:
    lines = Path(image_list_file).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def read_mapping(mapping_file) -> dict[str, tuple[str, str]]:
    """`path,subject,sample` CSV; every listed image must have one row."""
    mapping: dict[str, tuple[str, str]] = {}
    used_ids: set[tuple[str, str]] = set()
    with open(mapping_file, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["path", "subject", "sample"]:
            raise MappingError("expected header path,subject,sample")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise MappingError(f"expected 3 fields, got {row!r}")
            path, subject, sample = row
            if path in mapping:
                raise MappingError(f"duplicate mapping row for {path!r}")
            if (subject, sample) in used_ids:
                raise IdCollisionError(f"duplicate (subject, sample) {(subject, sample)}")
            used_ids.add((subject, sample))
            mapping[path] = (subject, sample)
    return mapping


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            array = np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError as exc:
        raise ImageDecodeError(f"image not found: {path}") from exc
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    return array.transpose(2, 0, 1)  # CHW


def _run_batch(model, batch: list[np.ndarray]) -> np.ndarray:
    tensor = torch.from_numpy(np.stack(batch))
    with torch.inference_mode():
        output = model(tensor)
    if not isinstance(output, torch.Tensor):
        raise ModelContractError(f"model returned {type(output).__name__}, not a tensor")
    array = output.detach().cpu().numpy()
    if array.shape[0] != len(batch):
        raise ModelContractError(
            f"model returned {array.shape[0]} rows for a batch of {len(batch)}"
        )
    return array.reshape(len(batch), -1)


def export(model_file, image_list_file, mapping_file, out_femb) -> list[ExportManifestEntry]:
    """Run the model over the listed images and write a FEMB embedding file.

    Record order equals image-list order.  A text manifest with one line per
    record (subject, sample, path, raw norm) is written next to the output.
    Returns the manifest entries.
    """
    model = load_model(model_file)
    image_paths = read_image_list(image_list_file)
    mapping = read_mapping(mapping_file)
    missing = [p for p in image_paths if p not in mapping]
    if missing:
        raise MappingError(f"no mapping for {missing[0]!r} ({len(missing)} unmapped)")

    vectors: list[np.ndarray] = []
    batch: list[np.ndarray] = []

    def flush():
        if batch:
            vectors.extend(_run_batch(model, batch))
            batch.clear()

    shape = None
    for path in image_paths:
        image = load_image(path)
        if batch and (image.shape != shape or len(batch) >= BATCH_SIZE):
            flush()
        shape = image.shape
        batch.append(image)
    flush()

    if not vectors:
        raise MappingError("image list is empty")
    dim = vectors[0].shape[0]
    for vector in vectors:
        if vector.shape[0] != dim:
            raise ModelContractError("model output dimension varies across images")

    records = []
    entries = []
    for path, vector in zip(image_paths, vectors):
        subject, sample = mapping[path]
        records.append((subject, sample, vector))
        entries.append(
            ExportManifestEntry(
                subject_id=subject,
                sample_id=sample,
                image_path=path,
                raw_norm=float(np.linalg.norm(vector.astype(np.float64))),
            )
        )
    write_femb(records, dim=dim, destination=out_femb, normalized=False)

    manifest_path = Path(str(out_femb) + ".manifest.txt")
    lines = [
        f"{e.subject_id}\t{e.sample_id}\t{e.image_path}\t{e.raw_norm!r}" for e in entries
    ]
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return entries
