"""Central finite-difference checks for the training gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import GROUPS, ModelParams

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-9  # above central-difference roundoff (~eps * loss / step) for losses of order 10


@dataclass(frozen=True)
class EntryCheck:
    tensor: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        return self.abs_error / scale if scale > 0 else 0.0

    def ok(self, rel_tol: float = REL_TOL, abs_floor: float = ABS_FLOOR) -> bool:
        """Relative agreement, with an absolute floor for near-zero entries."""
        scale = max(abs(self.analytic), abs(self.numeric))
        return self.abs_error <= max(rel_tol * scale, abs_floor)


def central_difference(f: Callable[[], float], array: np.ndarray, index: tuple[int, ...],
                       step: float = FD_STEP) -> float:
    """``(f(x + h) - f(x - h)) / 2h`` for one entry of ``array``, restored afterwards."""
    orig = array[index]
    try:
        array[index] = orig + step
        up = f()
        array[index] = orig - step
        down = f()
    finally:
        array[index] = orig
    return (up - down) / (2.0 * step)


def group_entries(params: ModelParams, group: str) -> list[tuple[str, tuple[int, ...]]]:
    """Every ``(tensor name, index)`` in one parameter group."""
    prefix, names = GROUPS[group]
    named = params.named_tensors()
    out = []
    for name in names:
        key = f"{prefix}.{name}"
        out.extend((key, idx) for idx in np.ndindex(*np.shape(named[key])))
    return out


def check_entries(loss: Callable[[ModelParams], float], params: ModelParams, grads: dict[str, np.ndarray],
                  entries: Sequence[tuple[str, tuple[int, ...]]], step: float = FD_STEP) -> list[EntryCheck]:
    """Compare ``grads`` against central differences of ``loss`` at ``entries``.

    ``params`` is perturbed in place and restored entry by entry.
    """
    named = params.named_tensors()
    out = []
    for key, idx in entries:
        numeric = central_difference(lambda: loss(params), named[key], idx, step)
        out.append(EntryCheck(key, idx, float(grads[key][idx]), numeric))
    return out
