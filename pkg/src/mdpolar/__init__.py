"""Link-level simulator and analysis library for key-based MIMO
physical-layer security with channel-adaptive polar coding."""

__version__ = "0.1.0"

from .kernels import HAVE_COMPILED

__all__ = ["HAVE_COMPILED", "__version__"]
