from __future__ import annotations

import typing

__all__ = [
    'Error', 'UsageError', 'ParseError', 'NumericalError', 'NotHermitian',
    'DimensionMismatch', 'DegenerateDraw', 'BlockLeakage', 'ZeroOperator',
    'NonFiniteLoss', 'SectorResolutionFailure',
]

class Error(Exception):
    """Base error class for everything raised by :mod:`schurqnn`."""

    #: The process exit code the command line reports for this error.
    exit_code: typing.ClassVar[int] = 3

    #: Optional short context, such as the operation or file involved.
    where: str | None

    def __init__(self, message: str | None = None, where: str | None = None):
        if where is not None and message is not None:
            m = f'({where}) {message}'
        elif message is not None:
            m = message
        elif where is not None:
            m = f'in {where}'
        else:
            m = 'unknown'

        super().__init__(m)
        self.where = where

class UsageError(Error):
    """UsageError indicates that an experiment was configured with
    values that cannot be run, or with keys that do not exist.
    """

    exit_code = 2

class ParseError(Error):
    """ParseError indicates that a file was read, but it was not in the
    expected form and could not be parsed."""

    exit_code = 2

class NumericalError(Error):
    """Base class for failures inside a numerical computation."""

class NotHermitian(NumericalError):
    """NotHermitian indicates an operator required to be Hermitian
    differs from its conjugate transpose beyond tolerance.
    """

class DimensionMismatch(NumericalError):
    """DimensionMismatch indicates operators, states or parameter
    vectors whose sizes do not agree.
    """

class DegenerateDraw(NumericalError):
    """DegenerateDraw indicates that every random element drawn while
    decomposing an algebra had accidentally coincident eigenvalues.
    """

class BlockLeakage(NumericalError):
    """BlockLeakage indicates an operator that does not respect the
    sector structure of a decomposition.
    """

class ZeroOperator(NumericalError):
    """ZeroOperator indicates a block with zero trace where a nonzero
    positive operator was required.
    """

class NonFiniteLoss(NumericalError):
    """NonFiniteLoss indicates that training produced a NaN or
    infinite loss or gradient.
    """

class SectorResolutionFailure(NumericalError):
    """SectorResolutionFailure indicates a state that does not lie in a
    single (sector, irrep vector) ray of a decomposition.
    """
