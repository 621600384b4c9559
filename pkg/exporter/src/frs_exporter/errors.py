"""Named errors; each aborts the export with a nonzero exit status."""


class ExportError(Exception):
    @property
    def name(self) -> str:
        return type(self).__name__


class ModelLoadError(ExportError):
    """The model file could not be loaded by the TorchScript loader."""


class ImageDecodeError(ExportError):
    """An image file is missing or cannot be decoded."""


class MappingError(ExportError):
    """The mapping file is malformed or does not cover every listed image."""


class IdCollisionError(ExportError):
    """Two images map to the same (subject, sample) pair."""


class ModelContractError(ExportError):
    """The model output does not satisfy the one-vector-per-image contract."""
