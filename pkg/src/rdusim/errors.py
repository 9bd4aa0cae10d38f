"""Exception hierarchy shared by every rdusim module."""


class RduSimError(Exception):
    """Base class for all rdusim errors."""


# fabric
class UnsupportedGeometry(RduSimError):
    pass


class NonPowerOfTwoLanes(RduSimError):
    pass


class IllegalSelection(RduSimError):
    pass


class ConfigInvalid(RduSimError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class WidthMismatch(RduSimError):
    pass


# kernels
class EmptyInput(RduSimError):
    pass


class NonPowerOfTwoLength(RduSimError):
    pass


class PlanInvalid(RduSimError):
    pass


class LengthMismatch(RduSimError):
    pass


class ShapeMismatch(RduSimError):
    pass


class UnderSpecifiedKernel(RduSimError):
    pass


# mapper
class IllegalModeForKernel(RduSimError):
    pass


class Infeasible(RduSimError):
    pass


class KernelTooLarge(Infeasible):
    pass


# perf
class PlanChipMismatch(RduSimError):
    pass


class UnsupportedMode(RduSimError):
    pass


class ZeroTime(RduSimError):
    pass


# config / cli
class ConfigParseError(RduSimError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvariantViolation(RduSimError):
    def __init__(self, rule, message=""):
        self.rule = rule
        super().__init__(f"{rule}" + (f": {message}" if message else ""))
