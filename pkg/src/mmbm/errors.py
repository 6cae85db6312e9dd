"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
breakdowns from :class:`NumericalError` (CLI exit code 3).
"""
from __future__ import annotations

from dataclasses import dataclass, field


class MmbmError(Exception):
    """Base class for all package errors."""

    code = "MmbmError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InputError(MmbmError, ValueError):
    code = "InputError"


class NumericalError(MmbmError, ArithmeticError):
    code = "NumericalError"


@dataclass(frozen=True)
class Violation:
    """One failed model invariant."""

    code: str
    message: str
    location: dict = field(default_factory=dict)

    def to_dict(self):
        return {"code": self.code, "message": self.message, "location": dict(self.location)}


class ModelValidationError(InputError):
    """Raised by :func:`mmbm.model.validate_model`; carries every violation found."""

    code = "ModelValidationError"

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(msg)

    @property
    def codes(self):
        return [v.code for v in self.violations]

    def to_dict(self):
        return {
            "error": self.code,
            "message": str(self),
            "violations": [v.to_dict() for v in self.violations],
        }


class DegenerateModel(InputError):
    code = "DegenerateModel"


class SignConstraintViolated(InputError):
    code = "SignConstraintViolated"


class ConfigInvalid(InputError):
    code = "ConfigInvalid"


class TooFewCycles(InputError):
    code = "TooFewCycles"


class SingularSystem(NumericalError):
    code = "SingularSystem"


class DegenerateZeroMode(NumericalError):
    code = "DegenerateZeroMode"


class RankDeficient(NumericalError):
    code = "RankDeficient"


class NotSemisimple(NumericalError):
    code = "NotSemisimple"


class SingularA0(NumericalError):
    code = "SingularA0"


class CountMismatch(NumericalError):
    code = "CountMismatch"


class NumericallySingular(NumericalError):
    code = "NumericallySingular"


class RootMultiplicity(NumericalError):
    code = "RootMultiplicity"


class NoRuinObserved(NumericalError):
    """Some dividend replications reached the time cap without ruin."""

    code = "NoRuinObserved"
