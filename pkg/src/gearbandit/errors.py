"""Exception types raised across the package."""

from __future__ import annotations


class GearBanditError(Exception):
    """Base class for all errors raised by this package."""


class ModelFormatError(GearBanditError):
    """A model or instance document could not be read or parsed."""


class MismatchedStatesError(GearBanditError):
    """Two policies (or a policy and a model) disagree on the state set."""


class InvalidShiftError(GearBanditError):
    """A gear shift was requested that the policy does not admit."""

    def __init__(self, state: int, gear: int, to_gear: int, reason: str):
        self.state = state
        self.gear = gear
        self.to_gear = to_gear
        super().__init__(
            f"cannot shift state {state} from gear {gear} to {to_gear}: {reason}"
        )


class MpUndefinedError(GearBanditError):
    """Marginal resource metric is not positive, so the MP ratio is undefined.

    This is the positivity-violation signal consumed by the certification
    logic. ``value`` holds the offending marginal resource metric.
    """

    def __init__(self, value: float, state: int | None = None,
                 gear: int | None = None, other_gear: int | None = None):
        self.value = value
        self.state = state
        self.gear = gear
        self.other_gear = other_gear
        where = "" if state is None else f" at state {state}, gears ({gear},{other_gear})"
        super().__init__(f"marginal resource metric {value!r} is not positive{where}")


class ConnectednessError(GearBanditError):
    """The policy family has no legal downshift from the given policy."""

    def __init__(self, message: str, policy=None):
        self.policy = policy
        super().__init__(message)


class UnbracketableError(GearBanditError):
    """No sign change found for a critical-price equation within the search span."""


class MultichainPolicyError(GearBanditError):
    """A policy induces more than one recurrent class under the average criterion."""

    def __init__(self, policy, recurrent_classes):
        self.policy = policy
        self.recurrent_classes = recurrent_classes
        super().__init__(
            f"policy {policy} induces {len(recurrent_classes)} recurrent classes"
        )


class EnumerationCapError(GearBanditError):
    """An exact joint computation exceeds the configured enumeration cap."""

    def __init__(self, size: int, cap: int, detail: str = ""):
        self.size = size
        self.cap = cap
        msg = f"joint enumeration size {size} exceeds cap {cap}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
