from typing import Optional, Sequence


class EdgeCascadeError(Exception):
    """Base class for every domain error raised by edgecascade."""


class InvalidInput(EdgeCascadeError, ValueError):
    pass


class ShapeError(InvalidInput):
    pass


class FormatError(EdgeCascadeError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TrainingDiverged(EdgeCascadeError):
    def __init__(self, epoch: int, message: str = "loss became non-finite"):
        self.epoch = epoch
        super().__init__(f"Training diverged at epoch {epoch}: {message}")


class ConfigError(EdgeCascadeError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class VerificationFailed(EdgeCascadeError):
    def __init__(self, failed_checks: Sequence[str]):
        self.failed_checks = list(failed_checks)
        super().__init__(f"Verification failed: {', '.join(self.failed_checks)}")
