"""Exception types shared across the library."""


class FewAnnoError(Exception):
    """Base class for all library errors."""


class InvalidInput(FewAnnoError):
    """An argument violates a documented precondition (non-finite values, bad ranges)."""


class ShapeError(FewAnnoError):
    """Array shapes are incompatible with the requested operation."""


class NumericalError(FewAnnoError):
    """A numerical evaluation produced a non-finite intermediate."""


class DegenerateMatrix(FewAnnoError):
    """Smallest singular value is (numerically) zero; ratio-based quantities undefined."""


class NonSmoothPoint(FewAnnoError):
    """Repeated singular values: the requested spectral gradient is not defined here."""


class InvalidEpisode(FewAnnoError):
    """An episode is malformed (empty class, query class absent from support)."""


class TrainingDiverged(FewAnnoError):
    """A training loop produced a non-finite loss."""


class ConfigError(FewAnnoError):
    """An experiment config file is unreadable or contains unknown/invalid keys."""
