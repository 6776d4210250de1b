"""Exception types shared across the package.

The split mirrors how failures are reported at the command line: malformed
or inconsistent inputs are distinct from numerical degeneracies discovered
mid-computation, and both are distinct from genuine bugs.
"""


class StructflowError(Exception):
    """Base class for all package-specific errors."""


class InputError(StructflowError):
    """Malformed or inconsistent input data (files, schemas, arguments)."""


class NumericalError(StructflowError):
    """Data-dependent numerical degeneracy (e.g. collinear alignment sets,
    empty contact lists, step past the terminal time)."""
