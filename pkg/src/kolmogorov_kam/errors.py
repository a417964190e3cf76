"""Exception and warning classes shared by the whole package."""


class KAMError(Exception):
    """Base class for every error raised by the KAM pipeline."""

    code = "kam_error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ResonanceError(KAMError):
    """A small divisor ``omega . k`` is numerically zero."""

    code = "resonant"

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = None if k is None else tuple(int(x) for x in k)

    def to_dict(self):
        out = super().to_dict()
        if self.k is not None:
            out["k"] = list(self.k)
        return out


class TwistError(KAMError):
    """The averaged action Hessian is singular or leaves the invertibility ball."""

    code = "twist"


class ContractionError(KAMError):
    """``Id + v`` is not a contraction perturbation (majorant of dv >= 1)."""

    code = "contraction"


class DomainError(KAMError):
    """A composed map leaves the domain it is stored on."""

    code = "domain"


class StepSizeError(KAMError):
    """The action shift of a step is not O(epsilon)."""

    code = "step_size"


class ConfigError(KAMError):
    """Invalid run configuration; the message names the offending field."""

    code = "config"

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field

    def to_dict(self):
        out = super().to_dict()
        out["field"] = self.field
        return out


class MajorantOverflowError(KAMError, OverflowError):
    code = "overflow"


class AliasingWarning(RuntimeWarning):
    """Energy above the Fourier cutoff was lost in a collocation step."""


class TruncationWarning(RuntimeWarning):
    """Discarded series tail is larger than the configured tolerance."""


class IntegratorError(KAMError):
    """The flow integrator produced non-finite values."""

    code = "integrator"
