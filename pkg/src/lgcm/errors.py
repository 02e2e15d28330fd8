"""Exception hierarchy shared by every lgcm module."""


class LGCMError(Exception):
    pass


class ShapeError(LGCMError, ValueError):
    pass


class ContractError(LGCMError, RuntimeError):
    """A documented precondition of an operation was violated."""


class ConfigError(LGCMError, ValueError):
    pass


class DataError(LGCMError, ValueError):
    pass


class CheckpointError(LGCMError, ValueError):
    pass


class NumericError(LGCMError, ArithmeticError):
    pass
