"""Kernel backend selection.

The compiled extension (`bcrnn._fftcore`) is preferred when it imported
cleanly; otherwise the NumPy fallback (`bcrnn._fftpy`) is used. Set
``BCRNN_BACKEND=python`` or ``BCRNN_BACKEND=compiled`` to force a choice.
Both backends implement the same kernel contract and are interchangeable.
"""

import os
from contextlib import contextmanager

from . import _fftpy

try:
    from . import _fftcore
except ImportError:
    _fftcore = None

_BACKENDS = {"python": _fftpy}
if _fftcore is not None:
    _BACKENDS["compiled"] = _fftcore


def available_backends():
    return sorted(_BACKENDS)


def _initial():
    forced = os.environ.get("BCRNN_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(
                f"BCRNN_BACKEND={forced!r} is not available; "
                f"choices: {available_backends()}"
            )
        return _BACKENDS[forced]
    return _BACKENDS.get("compiled", _fftpy)


_active = _initial()


def active():
    """The backend module currently in use."""
    return _active


def select(name):
    """Switch the active backend; returns the previously active one."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {available_backends()}")
    previous = _active
    _active = _BACKENDS[name]
    return previous


@contextmanager
def use(name):
    """Temporarily switch backends (tests and benchmarks)."""
    previous = select(name)
    try:
        yield _BACKENDS[name]
    finally:
        select(previous.name)
