"""Exception hierarchy shared across the pipeline."""


class HealthAccessError(Exception):
    """Base class for all pipeline errors."""


class ContractError(HealthAccessError):
    """A caller violated an operation's precondition."""


class CorpusFormatError(HealthAccessError):
    """The input file does not look like the expected corpus format."""


class DegenerateInputError(HealthAccessError):
    """Input is structurally valid but statistically degenerate (e.g. zero variance)."""


class SingularDesignError(HealthAccessError):
    """Design matrix is rank deficient."""

    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = tuple(dependent_columns)


class ProtocolError(HealthAccessError):
    """Remote classifier returned a malformed response."""


class BackendUnavailableError(HealthAccessError):
    """Remote classifier could not be reached after retries."""
