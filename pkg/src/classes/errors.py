class FotError(Exception):
    """Root of every error raised deliberately by the pipeline."""


class ConfigError(FotError, ValueError):
    """Missing paths, malformed config files, split or count mismatches."""


class DatasetError(FotError, ValueError):
    """The registry cannot satisfy a sampling or training precondition."""


class SaliencyUnavailableError(FotError, LookupError):
    """No saliency backend is loaded and the cache holds no map for a sample."""


class StageError(FotError):
    """A pipeline stage failed; `stage` names it for the one-line CLI report."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason
