"""
hdfactors.exceptions
~~~~~~~~~~~~~~~~~~~~

This module implements the exceptions raised by the library. Every class
carries the exit code the command-line harness returns for it.
"""


class HDFactorsError(Exception):
    """Base class of all library errors."""

    exit_code = 1


class ConfigError(HDFactorsError, ValueError):
    """An experiment configuration is invalid."""

    exit_code = 2


class DimensionMismatchError(HDFactorsError, ValueError):
    """Two hypervectors (or a vector and a codebook) differ in dimension."""

    exit_code = 3


class DegenerateVectorError(HDFactorsError, ValueError):
    """A zero-norm vector was passed where a direction is required."""

    exit_code = 3


class EmptyBundleError(HDFactorsError, ValueError):
    exit_code = 3


class InvalidObjectError(HDFactorsError, ValueError):
    """A symbolic object does not fit its factor schema."""

    exit_code = 3


class UnknownFactorError(HDFactorsError, KeyError):
    exit_code = 3

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InsufficientPairsError(HDFactorsError, ValueError):
    """More distinct pairs were requested than the schema can provide."""

    exit_code = 4


class ContainerFormatError(HDFactorsError, OSError):
    """A memory container, dataset or image file is malformed."""

    exit_code = 5


class ProbeError(HDFactorsError, RuntimeError):
    """A pipeline failed while probing one (object, unit, value) coordinate."""

    exit_code = 6

    def __init__(self, obj, unit, value, cause):
        self.obj = obj
        self.unit = unit
        self.value = value
        super().__init__(
            "Probe failed at object={}, unit={}, value={}: {}".format(
                obj, unit, value, cause
            )
        )


class AuditError(HDFactorsError, AssertionError):
    """An internal consistency audit did not pass."""

    exit_code = 7
