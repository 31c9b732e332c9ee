"""renderfit: self-supervised 3D shape, pose, texture, and background
recovery from categorized image collections via differentiable
render-and-compare, built on a small reverse-mode autodiff engine."""

__version__ = "0.1.0"


class RenderfitError(Exception):
    """Base class for all library errors; carries a machine-parseable code."""

    code = "E_ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
