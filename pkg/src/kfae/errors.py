class KfaeError(Exception):
    """Base class for runtime failures reported by the CLI with exit code 1."""


class IngestError(KfaeError):
    pass


class ModelFormatError(KfaeError):
    pass


class TruthError(KfaeError):
    pass


class ExtractionError(KfaeError):
    pass
