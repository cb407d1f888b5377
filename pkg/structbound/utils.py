import functools
import time
from typing import Dict, List, Tuple

import numpy as np

from structbound.errors import NumericalBlowup

TIMING_ENABLED = False
timings: List[Tuple[str, float]] = []

OVERFLOW_GUARD = 1e12


def timer(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        if not TIMING_ENABLED:
            return func(*args, **kwargs)
        started = time.monotonic()
        try:
            return func(*args, **kwargs)
        finally:
            timings.append((func.__qualname__, time.monotonic() - started))
    return wrapper


def summarize_timing() -> List[Tuple[str, int, float]]:
    """(function, executions, total seconds), slowest last."""
    totals: Dict[str, Tuple[int, float]] = {}
    for funcname, elapsed in timings:
        count, total = totals.get(funcname, (0, 0.0))
        totals[funcname] = (count + 1, total + elapsed)
    return sorted(((name, count, total) for name, (count, total) in totals.items()), key=lambda row: row[-1])


def format_float(value: float) -> str:
    """17 significant digits, so values survive a write/read cycle unchanged."""
    return "%.17g" % value


def guard(time: float, *arrays: np.ndarray):
    """Raises NumericalBlowup if any entry is non-finite or beyond OVERFLOW_GUARD."""
    for arr in arrays:
        if arr.size == 0:
            continue
        max_abs = float(np.max(np.abs(arr)))
        if not np.isfinite(max_abs) or max_abs > OVERFLOW_GUARD:
            raise NumericalBlowup(time=time, max_abs=max_abs)
