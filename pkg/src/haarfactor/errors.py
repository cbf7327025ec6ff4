"""Exception types.

``StructuredFailure`` marks a mathematical dead end (a selection ran out of
depth, a Neumann series does not converge, ...).  It is distinct from
``ValueError`` which signals bad input; the command line maps the two to
different exit codes.
"""


class StructuredFailure(Exception):
    """A construction could not be completed for mathematical reasons."""

    kind = "failure"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"kind": self.kind, "message": str(self)}
        out.update({k: _plain(v) for k, v in self.details.items()})
        return out


class DepthExhausted(StructuredFailure):
    kind = "depth-exhausted"


class NeumannFailure(StructuredFailure):
    kind = "neumann"


class BudgetExceeded(StructuredFailure):
    kind = "budget"


class InternalInconsistency(RuntimeError):
    """Raised when a guaranteed conclusion fails; indicates a bug."""


def _plain(v):
    if isinstance(v, (int, float, str, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return str(v)
