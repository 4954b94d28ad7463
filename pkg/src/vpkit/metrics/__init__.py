"""Privacy and utility metrics."""

from . import privacy, utility

__all__ = ["privacy", "utility"]
