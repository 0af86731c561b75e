"""Small one-dimensional optimisation helpers."""
from __future__ import annotations

import math
from typing import Callable

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(f: Callable[[float], float], lo: float, hi: float,
                       xtol: float = 1e-4) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[lo, hi]`` by golden-section search.

    Returns ``(x, f(x))``. On exact ties the lower abscissa wins, which keeps
    the result deterministic for flat objectives.
    """
    if not lo < hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def golden_section_max(f, lo, hi, xtol=1e-4):
    x, fx = golden_section_min(lambda t: -f(t), lo, hi, xtol)
    return x, -fx
