"""Kernel backend selection.

The compiled extension is preferred when present; the pure-Python loops are
the fallback and the reference semantics. MRACSIM_BACKEND=python or
=compiled forces the choice (forcing an unavailable backend is an error).
"""

import os

from . import _ref

_requested = os.environ.get("MRACSIM_BACKEND", "").strip().lower()
_compiled = None
try:
    from . import _core as _compiled_mod

    if hasattr(_compiled_mod, "run_acc"):
        _compiled = _compiled_mod
except ImportError:
    _compiled = None

if _requested in ("python", "py"):
    _impl = _ref
elif _requested in ("compiled", "c", "ext"):
    if _compiled is None:
        raise ImportError(
            "MRACSIM_BACKEND=compiled but the extension is not built; "
            "run pip install -e . --no-build-isolation"
        )
    _impl = _compiled
elif _requested == "":
    _impl = _compiled if _compiled is not None else _ref
else:
    raise ValueError(f"unknown MRACSIM_BACKEND={_requested!r}")

backend_name = _impl.KERNEL_KIND
run_acc = _impl.run_acc
run_mrac = _impl.run_mrac

STATUS_OK = _ref.STATUS_OK
STATUS_NONFINITE = _ref.STATUS_NONFINITE
STATUS_ALARM = _ref.STATUS_ALARM
STATUS_COLLISION = _ref.STATUS_COLLISION


def available_backends():
    out = {"python": _ref}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def get_backend(name):
    try:
        return available_backends()[name]
    except KeyError:
        raise KeyError(f"backend {name!r} not available") from None
