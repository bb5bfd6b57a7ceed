"""Exception types shared across the package.

The CLI maps these onto exit codes: parameter/usage problems exit 2,
data problems exit 3, numeric failures exit 4.
"""


class PdroItrError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PdroItrError, ValueError):
    """Malformed input: wrong dimensions, empty data, bad CSV, non-finite entries."""


class ParameterError(PdroItrError, ValueError):
    """Invalid hyperparameter, e.g. h <= 0, delta outside [0, 1], alpha <= 0."""


class NumericError(PdroItrError, ArithmeticError):
    """Non-finite values produced during optimization or evaluation."""


class ArmCoverageError(PdroItrError, ValueError):
    """A treatment arm has too few observations to fit on."""


class ClassCoverageError(PdroItrError, ValueError):
    """A source class is absent from the labels, or a label falls outside the class set."""


class PositivityError(PdroItrError, ValueError):
    """A propensity score is not strictly inside (0, 1)."""
