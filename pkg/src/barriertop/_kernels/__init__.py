"""Backend selection for the flow stepper.

The compiled extension is preferred when it imported cleanly; otherwise
the pure-Python fallback is used.  ``integrate_callable`` always runs in
Python because it calls back into user code anyway.
"""

from . import pyfallback
from .pyfallback import (  # noqa: F401
    STATUS_ESCAPED,
    STATUS_OK,
    STATUS_STEPFAIL,
    integrate_callable,
)

try:
    from . import _native

    integrate_poly = _native.integrate_poly
    BACKEND = "native"
except ImportError:  # pragma: no cover - depends on build environment
    integrate_poly = pyfallback.integrate_poly
    BACKEND = "python"

integrate_poly_python = pyfallback.integrate_poly


def backend_name():
    return BACKEND
