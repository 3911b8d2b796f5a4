"""Dormand-Prince 5(4) integrator with continuous (dense) output.

Small and specialised: autonomous systems ``y' = f(y)`` of a few
components, forward in time, scalar mixed tolerance. Every accepted step
is kept so the solution can be evaluated anywhere on ``[0, t_end]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StepSizeUnderflow

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
])
# dense output polynomial coefficients (Hairer's contd5, as in scipy)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class DenseSolution:
    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    k: list = field(default_factory=list)  # per-step stage matrices

    @property
    def t_end(self) -> float:
        return self.t[-1]

    def __call__(self, t):
        t = float(t)
        ts = self.t
        if t <= ts[0]:
            return self.y[0].copy()
        if t >= ts[-1]:
            return self.y[-1].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[i + 1] - ts[i]
        x = (t - ts[i]) / h
        K = self.k[i]
        Q = K.T @ _P
        p = np.cumprod(np.full(4, x))
        return self.y[i] + h * (Q @ p)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    y0,
    t_end: float,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    h_min: float = 1e-14,
    max_steps: int = 1_000_000,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DenseSolution:
    """Integrate ``y' = f(y)`` from 0 to ``t_end``.

    ``project`` is applied to every accepted state (used for clamping).
    Raises StepSizeUnderflow if the step size falls below ``h_min * t_end``.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    sol = DenseSolution([0.0], [y.copy()], [])
    if t_end <= 0:
        return sol
    t = 0.0
    f0 = np.asarray(f(y), dtype=float)
    scale = atol + rtol * np.abs(y)
    d0, d1 = np.linalg.norm(y / scale), np.linalg.norm(f0 / scale)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, t_end)
    K = np.empty((7, y.size))
    for _ in range(max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        K[0] = f0
        for s in range(1, 7):
            K[s] = f(y + h * np.dot(_A[s], K[:s]))
        y_new = y + h * (_B @ K)
        err_vec = h * (_E @ K)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
        if err <= 1.0:
            t = t + h if t_end - (t + h) > 1e-15 * t_end else t_end
            if project is not None:
                y_new = project(y_new)
            sol.k.append(K.copy())
            sol.t.append(t)
            sol.y.append(y_new.copy())
            y = y_new
            f0 = np.asarray(f(y), dtype=float)
            fac = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < h_min * t_end and t < t_end:
            raise StepSizeUnderflow(f"step size {h:.3e} underflowed at t={t:.6g}")
    else:
        raise StepSizeUnderflow(f"exceeded {max_steps} steps before t={t_end}")
    return sol
