"""Python bindings for the splatsim simulator."""

from ._splatsim import *  # noqa: F401,F403
from ._splatsim import __version__  # noqa: F401
