"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented exit statuses (2 usage/config, 3 validation,
4 numerical failure).
"""


class BreastSSMError(Exception):
    exit_code = 1


class ConfigError(BreastSSMError, ValueError):
    """Missing or malformed configuration, landmark or parameter input."""

    exit_code = 2


class ValidationError(BreastSSMError, ValueError):
    """Input data violates a structural invariant (mesh topology, shapes)."""

    exit_code = 3


class MeshFormatError(ValidationError):
    """A mesh file could not be parsed."""


class NumericalError(BreastSSMError, ArithmeticError):
    """A numerical procedure failed (singular system, divergence, ...)."""

    exit_code = 4
