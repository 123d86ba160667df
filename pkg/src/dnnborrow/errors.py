"""Exception hierarchy."""


class DnnBorrowError(Exception):
    """Base class for all package errors."""


class NonConvergence(DnnBorrowError):
    def __init__(self, message, rhat=None):
        super().__init__(message)
        self.rhat = rhat


class NumericalFailure(DnnBorrowError):
    pass


class DegenerateChains(DnnBorrowError):
    pass


class ShapeMismatch(DnnBorrowError, ValueError):
    pass


class NonFiniteLoss(DnnBorrowError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class InvalidRange(DnnBorrowError, ValueError):
    pass


class GridExhausted(DnnBorrowError):
    pass


class DesignMismatch(DnnBorrowError):
    pass


class FingerprintMismatch(DnnBorrowError):
    pass


class TooManyExclusions(DnnBorrowError):
    pass
