"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI reports it in its
error JSON.  The set of codes is closed and listed in ``ERROR_CODES``.
"""

from __future__ import annotations

from typing import Any


class AmwError(Exception):
    """Base class for domain errors."""

    code = "AmwError"

    def __init__(self, message: str = "", **details: Any) -> None:
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": self.code, "message": str(self)}
        out.update({k: v for k, v in self.details.items() if v is not None})
        return out


class MissingColumn(AmwError):
    code = "MissingColumn"


class NonBinaryTreatment(AmwError):
    code = "NonBinaryTreatment"


class NonFiniteValue(AmwError):
    code = "NonFiniteValue"


class EmptyArm(AmwError):
    code = "EmptyArm"


class ZeroVariance(AmwError):
    code = "ZeroVariance"


class SingleClass(AmwError):
    code = "SingleClass"


class Separation(AmwError):
    code = "Separation"


class SingularDesign(AmwError):
    code = "SingularDesign"


class MaxIterExceeded(AmwError):
    code = "MaxIterExceeded"


class ArmTooSmall(AmwError):
    code = "ArmTooSmall"


class EmptyOppositeArm(AmwError):
    code = "EmptyOppositeArm"


class DegeneratePropensity(AmwError):
    code = "DegeneratePropensity"


class KTooLarge(AmwError):
    code = "KTooLarge"


class SplitTooSmall(AmwError):
    code = "SplitTooSmall"


class TooManyFailures(AmwError):
    code = "TooManyFailures"


class ZeroDenominator(AmwError):
    code = "ZeroDenominator"


class IncompatibleEstimand(AmwError):
    code = "IncompatibleEstimand"


class InvalidArgument(AmwError):
    code = "InvalidArgument"


class InputError(AmwError):
    """Input file missing, unreadable or malformed."""

    code = "InputError"


class NuisanceFitError(AmwError):
    """A fitter failed; ``model`` names which one and ``cause`` the original code."""

    code = "NuisanceFitError"

    def __init__(self, model: str, cause: AmwError) -> None:
        super().__init__(f"{model} model: {cause}", model=model, cause=cause.code)
        self.model = model
        self.cause = cause


ERROR_CODES = frozenset(
    cls.code
    for cls in (
        AmwError,
        MissingColumn,
        NonBinaryTreatment,
        NonFiniteValue,
        EmptyArm,
        ZeroVariance,
        SingleClass,
        Separation,
        SingularDesign,
        MaxIterExceeded,
        ArmTooSmall,
        EmptyOppositeArm,
        DegeneratePropensity,
        KTooLarge,
        SplitTooSmall,
        TooManyFailures,
        ZeroDenominator,
        IncompatibleEstimand,
        InvalidArgument,
        InputError,
        NuisanceFitError,
    )
)
