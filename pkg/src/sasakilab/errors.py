"""Exception hierarchy shared by every sasakilab module."""


class SasakiLabError(Exception):
    """Base class for all library errors."""


class DomainError(SasakiLabError):
    """A point lies outside the domain of a map or function."""


class NumericError(SasakiLabError):
    """A non-finite intermediate or a singular matrix was produced."""


class RankError(SasakiLabError):
    """Linear dependence detected where independence is required."""


class SymmetryError(SasakiLabError):
    """An operator is not self-adjoint with respect to the given metric."""


class ConfigError(SasakiLabError):
    """Invalid user configuration (manifest, flags, model name)."""


class ModelError(SasakiLabError):
    """A catalog model failed its own self-validation."""


class StructureError(SasakiLabError):
    """The induced frame is inconsistent (e.g. phi N not tangent)."""


class PreconditionError(SasakiLabError):
    """An operation was called on input that violates its contract."""
