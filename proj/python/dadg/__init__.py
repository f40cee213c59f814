"""Domain-generalization training laboratory (adversarial feature learning +
meta-learned cross-domain validation) backed by the C++ core."""

from ._dadg import *  # noqa: F401,F403
from ._dadg import __all__ as _all

__all__ = list(_all)
