from __future__ import annotations


class AcDcError(Exception):
    """Base class for every failure the toolkit reports; `exit_code` feeds the CLI."""

    exit_code = 1


class InputError(AcDcError, ValueError):
    exit_code = 2


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class InvariantError(InputError):
    pass


class MissingParameter(InputError):
    pass


class UnknownElement(InputError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class DimensionMismatch(InputError):
    pass


class VariantMismatch(InputError):
    pass


class OrientationError(AcDcError):
    exit_code = 3


class CycleForced(OrientationError):
    pass


class CoOrientationConflict(OrientationError):
    pass


class NotAcyclic(OrientationError):
    pass


class UnorientedConverter(OrientationError):
    pass


class ConverterNotOrientable(OrientationError):
    pass


class StructureViolation(AcDcError):
    exit_code = 4


class LeaderNotSelfContained(StructureViolation):
    pass


class NumericalError(AcDcError, ArithmeticError):
    exit_code = 5


class NotStabilizable(NumericalError):
    pass


class NotDetectable(NumericalError):
    pass


class ResidualTooLarge(NumericalError):
    pass


class NotHurwitz(NumericalError):
    pass


class SingularResolvent(NumericalError):
    pass


class GuardViolation(NumericalError):
    pass


class DivisionGuard(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class SizeLimit(NumericalError):
    pass
