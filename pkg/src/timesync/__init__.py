"""Next-intent prediction over asynchronous multi-domain event streams."""

from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
