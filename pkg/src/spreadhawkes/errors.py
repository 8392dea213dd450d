"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model spec, fit config or CLI config is internally inconsistent."""


class SpreadInvariantError(ValueError):
    """An operation would drive the spread below 1 tick."""


class DataFormatError(ValueError):
    """An input file violates the documented CSV/sidecar schema."""


class ExplosionError(RuntimeError):
    """Thinning exceeded its candidate cap; the configuration is explosive."""


class InitializationError(RuntimeError):
    """An optimizer could not start from a finite objective value."""
