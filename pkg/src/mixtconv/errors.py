"""Exception types raised across the package."""


class MixTConvError(ValueError):
    """Base class for all validation and numerical errors."""


class InvalidShape(MixTConvError):
    pass


class InvalidAxes(MixTConvError):
    pass


class InvalidPartition(MixTConvError):
    pass


class InvalidKernel(MixTConvError):
    pass


class InvalidLabel(MixTConvError):
    pass


class NumericalFailure(MixTConvError):
    """A loss, gradient or finite difference became non-finite."""
