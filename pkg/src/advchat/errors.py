"""Error taxonomy shared across the package.

All of these derive from ValueError so callers who do not care about the
distinction can catch one type.  The CLI maps UsageError/ConfigError to
exit code 1 and FormatError to exit code 2.
"""


class DimensionError(ValueError):
    """Shapes or extents do not line up; the message names both sides."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class FormatError(ValueError):
    """A file or wire payload does not match its documented format."""


class UsageError(ValueError):
    """An API contract was violated by the caller."""
