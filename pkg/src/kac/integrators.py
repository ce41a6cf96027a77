"""Fixed-step classical Runge-Kutta stepping shared by the hierarchy solvers."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .errors import DivergenceError


def rk4_trajectory(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: Sequence[float],
    dt: float,
    labels: Sequence[str] | None = None,
) -> np.ndarray:
    """Integrate an autonomous system and return its values at ``times``.

    Each gap between consecutive output times is split into equal steps no
    longer than ``dt``.  The first output time is the initial time.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0):
        raise ValueError("output times must be a nondecreasing 1-d sequence")
    y = np.array(y0, dtype=float)
    out = np.empty((times.size, y.size))
    out[0] = y
    for k in range(1, times.size):
        gap = times[k] - times[k - 1]
        steps = int(np.ceil(gap / dt - 1e-9)) if gap > 0 else 0
        if steps:
            h = gap / steps
            for s in range(steps):
                # overflow is reported below as a divergence, not as a warning
                with np.errstate(over="ignore", invalid="ignore"):
                    k1 = rhs(y)
                    k2 = rhs(y + 0.5 * h * k1)
                    k3 = rhs(y + 0.5 * h * k2)
                    k4 = rhs(y + h * k3)
                    y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(y)):
                    bad = int(np.flatnonzero(~np.isfinite(y))[0])
                    name = labels[bad] if labels is not None else str(bad)
                    t_bad = times[k - 1] + (s + 1) * h
                    raise DivergenceError(f"non-finite value in component {name} at t={t_bad:.6g}")
        out[k] = y
    return out
