"""Exception types shared across the package.

The CLI maps these onto process exit codes: argument problems exit 2,
data-format problems exit 3, numerical failures exit 4.
"""


class MesonetError(Exception):
    """Base class for all package errors."""


class ArgumentError(MesonetError):
    """A caller-supplied argument is invalid (wrong range, shape, or mode)."""


class DataFormatError(MesonetError):
    """An input file or serialized object could not be parsed."""


class NumericalError(MesonetError):
    """A numerical routine failed (divergence, singularity, degenerate signal).

    ``diagnostics`` carries whatever the failing routine knows: iteration
    counts, residual norms, offending values.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)
