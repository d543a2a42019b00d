"""Kernel backend selection.

The compiled extension is preferred when importable; ANTIFRAUD_BACKEND forces
a choice ("compiled" or "python"). Both expose the same four kernels.
"""

from __future__ import annotations

import os

from . import _kernels_py

_FORCED = os.environ.get("ANTIFRAUD_BACKEND", "").strip().lower()

if _FORCED == "python":
    kernels = _kernels_py
elif _FORCED == "compiled":
    from . import _fastops as kernels  # ImportError here is intentional: the user demanded it
else:
    try:
        from . import _fastops as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND_NAME: str = kernels.BACKEND_NAME


def get_kernels(name: str | None = None):
    """Kernel module by name; None gives the process default."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _fastops

        return _fastops
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _fastops  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names
