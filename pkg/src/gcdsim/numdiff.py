"""Central finite differences shared by the Newton solver and the
stability analysis."""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np


def central_jacobian(
    fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    rel_step: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian of ``fn`` at ``x`` by central differences.

    The step for column j is ``rel_step * max(1, |x_j|)``.  If a
    perturbed point is infeasible (fn raises), that column falls back to
    a one-sided difference with a warning.  Returns (jacobian, steps).
    """
    x = np.asarray(x, dtype=float)
    f0 = None
    n = len(x)
    cols = []
    steps = np.empty(n)
    for j in range(n):
        h = rel_step * max(1.0, abs(x[j]))
        steps[j] = h
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        try:
            fp = fn(xp)
            fm = fn(xm)
            cols.append((fp - fm) / (2.0 * h))
            continue
        except Exception:
            pass
        if f0 is None:
            f0 = fn(x)
        try:
            fp = fn(xp)
            cols.append((fp - f0) / h)
            warnings.warn(f"one-sided difference in column {j} (backward point infeasible)")
        except Exception:
            fm = fn(xm)
            cols.append((f0 - fm) / h)
            warnings.warn(f"one-sided difference in column {j} (forward point infeasible)")
    return np.column_stack(cols), steps
