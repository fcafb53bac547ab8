"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: FormatError -> 2,
CompatibilityError -> 3, NumericError -> 4.
"""


class PuclError(Exception):
    """Base class for all package errors."""


class FormatError(PuclError):
    """Malformed input: corpus files, dictionaries, configs."""


class UnknownLabelError(FormatError):
    """A label name not present in the governing label set."""


class CompatibilityError(PuclError):
    """Inputs that are individually valid but do not fit together
    (label-set mismatch, missing gold labels, test == valid split)."""


class NumericError(PuclError):
    """Non-finite values where finite ones are required (gradients, risks)."""
