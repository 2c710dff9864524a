"""Exception hierarchy shared across the package."""


class FlockPlanError(Exception):
    """Base class for all errors raised by this package."""


class NegativeFlock(FlockPlanError):
    """Accumulated mortality exceeds the initial bird count."""


class DivisionDomain(FlockPlanError):
    """A quotient was requested with a zero divisor."""


class DegenerateBound(FlockPlanError):
    """Min-max scaling requested over an interval of zero width."""


class OutOfRange(FlockPlanError):
    """A value lies outside its declared bounds (strict normalization mode)."""


class DimensionMismatch(FlockPlanError):
    """Vector/matrix shapes are inconsistent with the operation."""


class ZeroVariance(FlockPlanError):
    """A target column is constant, so R-squared is undefined."""


class Diverged(FlockPlanError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class ConfigDomain(FlockPlanError):
    """A generator or run configuration is malformed."""


class ShapeError(FlockPlanError):
    """A sample or matrix does not have the required shape."""


class InsufficientData(FlockPlanError):
    """Not enough samples for the requested statistic."""


class InsufficientHistory(FlockPlanError):
    """Outlier screening needs a larger history."""


class ParseError(FlockPlanError):
    """A persisted file failed validation; carries a location."""

    def __init__(self, message: str, *, line: int | None = None):
        loc = f" (line {line})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line


class SchemaVersionError(FlockPlanError):
    """A persisted document declares an unsupported schema version."""


class EmptyPopulation(FlockPlanError):
    """Selection requested from an empty population."""


class FitnessNonFinite(FlockPlanError):
    """A fitness evaluation returned NaN or infinity."""

    def __init__(self, genome):
        super().__init__("fitness evaluation returned a non-finite value")
        self.genome = genome


class BudgetExceeded(FlockPlanError):
    """An exhaustive search grid is larger than the evaluation budget."""

    def __init__(self, cardinality: int, budget: int):
        super().__init__(
            f"grid holds {_sci(cardinality)} combinations, budget is {budget}"
        )
        self.cardinality = cardinality
        self.budget = budget


def _sci(n: int) -> str:
    """Format a (possibly astronomically large) integer in scientific notation."""
    s = str(n)
    if len(s) <= 6:
        return s
    mantissa = s[0] + "." + s[1:4]
    return f"{mantissa}e+{len(s) - 1}"


class CrcMismatch(FlockPlanError):
    """Frame checksum verification failed."""


class Truncated(FlockPlanError):
    """Byte string is too short (or inconsistent) to hold a full frame."""


class Oversize(FlockPlanError):
    """Frame payload exceeds the protocol maximum."""


class ProtocolViolation(FlockPlanError):
    """A reply broke the master-slave discipline (e.g. wrong address)."""


class SlaveException(FlockPlanError):
    """The slave answered with an exception frame."""

    def __init__(self, code: int):
        super().__init__(f"slave exception code {code}")
        self.code = code


class Timeout(FlockPlanError):
    """No reply within the transaction deadline, after retries."""


class FlockComplete(FlockPlanError):
    """The simulated flock already reached its final day."""


class AddressCollision(FlockPlanError):
    """Two simulated houses claim the same slave address."""


class NoActiveFlock(FlockPlanError):
    """A mortality entry targets a house without an active flock."""


class StaleDay(FlockPlanError):
    """A mortality entry targets a day other than the house's current day."""
