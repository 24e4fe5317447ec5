"""Exception hierarchy shared by every module.

The CLI maps any :class:`DegenLabError` to exit status 1 and prints its
message verbatim.
"""


class DegenLabError(Exception):
    """Base class for contract errors raised by degenlab."""


class OrbitEscapedError(DegenLabError):
    def __init__(self, msg="orbit escaped representable range"):
        super().__init__(msg)


class NotRegularError(DegenLabError):
    pass


class DegenerateFiberError(DegenLabError):
    def __init__(self, msg="degenerate fiber"):
        super().__init__(msg)


class CriticalPointError(DegenLabError):
    def __init__(self, msg="critical fiber point"):
        super().__init__(msg)


class NewtonDivergenceError(DegenLabError):
    pass


class SamplingError(DegenLabError):
    pass


class ExceptionalParamsError(DegenLabError):
    def __init__(self, msg="limit formula requires |H/G| != |c|"):
        super().__init__(msg)


class InsufficientDataError(DegenLabError):
    pass
