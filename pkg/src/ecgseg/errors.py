"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`EcgSegError`, so the CLI
can report the failing stage with the class name verbatim.
"""


class EcgSegError(Exception):
    """Base class for all toolkit errors."""


# signal-core
class ConstantSignal(EcgSegError, ValueError):
    pass


class BandOutOfRange(EcgSegError, ValueError):
    pass


class NonIntegerFactor(EcgSegError, ValueError):
    pass


class InvalidSignal(EcgSegError, ValueError):
    pass


# synth
class ConfigInvalid(EcgSegError, ValueError):
    pass


class NotConverged(EcgSegError):
    """Raised when the spectral adjustment loop gives up.

    Carries the best configuration reached and its similarity score.
    """

    def __init__(self, best_score, best_config=None, iterations=0):
        self.best_score = float(best_score)
        self.best_config = best_config
        self.iterations = iterations
        super().__init__(
            f"spectral alignment not reached after {iterations} iterations "
            f"(best score {self.best_score:.6f})"
        )


# spectral
class ResolutionMismatch(EcgSegError, ValueError):
    pass


class EmptySignal(EcgSegError, ValueError):
    pass


class EmptyBand(EcgSegError, ValueError):
    pass


class ZeroSpectrum(EcgSegError, ValueError):
    pass


class ClassAbsent(EcgSegError, ValueError):
    pass


# transforms
class StepTooLarge(EcgSegError, ValueError):
    pass


class OrderOutOfRange(EcgSegError, ValueError):
    pass


class WindowTooSmall(EcgSegError, ValueError):
    pass


# neural
class ShapeMismatch(EcgSegError, ValueError):
    pass


class ZeroVariance(EcgSegError, FloatingPointError):
    pass


class EmptyDataset(EcgSegError, ValueError):
    pass


class CheckpointError(EcgSegError, ValueError):
    pass


# evaluate
class EmptyInput(EcgSegError, ValueError):
    pass


class SegmentTooShort(EcgSegError, ValueError):
    pass


class LengthMismatch(EcgSegError, ValueError):
    pass


class InsufficientSeeds(EcgSegError, ValueError):
    pass


# ingest
class ParseError(EcgSegError, ValueError):
    """Malformed input file; the message names the line or field."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SpanOutOfRange(EcgSegError, ValueError):
    def __init__(self, index, message):
        self.index = index
        super().__init__(f"span {index}: {message}")


class IoFailure(EcgSegError, OSError):
    pass
