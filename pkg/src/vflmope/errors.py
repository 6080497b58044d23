"""Exception taxonomy shared across the package.

Everything raised on purpose derives from VflError so callers can catch one
base type at the CLI boundary.
"""


class VflError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VflError):
    """Array dimensions disagree with what an operation requires."""


class ContractError(VflError):
    """An API precondition was violated (stale cache, missing active block,
    subset outside the gated family, and similar misuse)."""


class ValidationError(VflError):
    """A value is out of range or otherwise malformed (bad probabilities,
    duplicate sample ids, empty datasets, invalid labels, bad config)."""


class ConfigurationError(VflError):
    """Pieces of a setup are individually fine but mutually inconsistent."""


class EmptyFederationError(ConfigurationError):
    """A federation needs at least one participant."""


class NonFiniteGradientError(VflError):
    """A gradient contained NaN or infinity; the optimizer refuses to step."""


class UndefinedContributionError(VflError):
    """All gates are zero, so contribution shares have no defined value."""


class FormatError(VflError):
    """A binary embedding file is malformed. Carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset
