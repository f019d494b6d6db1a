"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent episode configuration."""


class EmbeddingUnavailable(RuntimeError):
    """The embedding backend failed or returned a malformed response."""


class InvariantViolation(RuntimeError):
    """An engine accounting invariant broke; the episode must abort."""
