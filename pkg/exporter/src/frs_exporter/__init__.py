"""Adapter exporting face embeddings from a pretrained extractor to FEMB."""

from .export import ExportManifestEntry, export
from .femb import write_femb
from . import errors

__version__ = "0.1.0"

__all__ = ["export", "write_femb", "ExportManifestEntry", "errors", "__version__"]
