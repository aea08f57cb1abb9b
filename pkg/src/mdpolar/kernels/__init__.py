"""Kernel lane selection: compiled extension if available, numpy fallback.

Set MDPOLAR_PURE=1 to force the pure lane (used by the benchmark and the
cross-lane equivalence tests).
"""

import os

from . import pure

compiled = None
if not os.environ.get("MDPOLAR_PURE"):
    try:
        from . import _core as compiled
    except ImportError:
        compiled = None

HAVE_COMPILED = compiled is not None
active = compiled if HAVE_COMPILED else pure

encode = active.encode
sc_decode = active.sc_decode
scl_decode = active.scl_decode
