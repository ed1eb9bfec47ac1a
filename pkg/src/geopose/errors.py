"""Exception hierarchy shared by every geopose module."""


class GeoposeError(Exception):
    """Base class for all errors raised by geopose."""


class InvalidArgumentError(GeoposeError, ValueError):
    pass


class DegenerateScaleError(GeoposeError, ValueError):
    """Raised when the scale least-squares system has no usable height signal."""

    def __init__(self, n_pixels: int, sum_sq: float):
        self.n_pixels = n_pixels
        self.sum_sq = sum_sq
        super().__init__(
            f"degenerate scale: sum of squared heights {sum_sq:.3g} over {n_pixels} valid pixels"
        )


class SingularCameraError(GeoposeError, ValueError):
    pass


class EmptyComparisonError(GeoposeError, ValueError):
    pass


class InsufficientDataError(GeoposeError, ValueError):
    pass
