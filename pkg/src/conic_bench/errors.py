"""Error types shared across the package.

Every error carries a stable ``code`` string (its class name) so the CLI and
the in-process bindings can surface the same identifier.
"""


class ConicBenchError(ValueError):
    """Base class for all library errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# -- input / format errors (CLI exit code 1) --------------------------------

class ShapeMismatch(ConicBenchError):
    pass


class InvariantViolation(ConicBenchError):
    pass


class MissingMpp(ConicBenchError):
    pass


class ParseError(ConicBenchError):
    pass


class NegativeCount(ConicBenchError):
    pass


class CropOutOfBounds(ConicBenchError):
    pass


class TooFewImages(ConicBenchError):
    pass


class EmptyDataset(ConicBenchError):
    pass


class NonPositiveRadius(ConicBenchError):
    pass


class EmptyMask(ConicBenchError):
    pass


class DisconnectedMask(ConicBenchError):
    pass


class TooFewPatients(ConicBenchError):
    pass


class NonFiniteFeature(ConicBenchError):
    pass


class WidthMismatch(ConicBenchError):
    pass


class LengthMismatch(ConicBenchError):
    pass


class NoComparablePairs(ConicBenchError):
    pass


class ConfigError(ConicBenchError):
    pass


# -- pairing / join errors (CLI exit code 2) ---------------------------------

class PairingError(ConicBenchError):
    """A join between two inputs failed (missing counterpart, orphan id)."""


class ImageIdMismatch(PairingError):
    pass


class OrphanImage(PairingError):
    pass


class IdMismatch(PairingError):
    pass


# -- degenerate-task errors (CLI exit code 3) --------------------------------

class DegenerateTargets(ConicBenchError):
    pass
