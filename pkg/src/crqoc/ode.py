"""Adaptive embedded Runge-Kutta integration for matrix-valued ODEs.

Dormand-Prince 5(4) pair with FSAL, elementwise error control over complex
arrays of any shape, and optional breakpoints the stepper never crosses
(needed for piecewise-constant Hamiltonians, where the right-hand side is
discontinuous at slice edges).
"""

from __future__ import annotations

import math

import numpy as np

# Dormand-Prince 5(4) Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    """Step-size underflow or exhausted step budget; carries the failure time."""

    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {t_fail:.9g} ns)")
        self.t_fail = t_fail


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, rtol, atol, span):
    # Hairer-Norsett-Wanner style cheap guess, clipped to the interval
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean(np.abs(y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean(np.abs(f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_adaptive(
    rhs,
    y0: np.ndarray,
    t0: float,
    t1: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    breakpoints=None,
    first_step: float | None = None,
    max_steps: int = 10_000_000,
    post_step=None,
):
    """Integrate dy/dt = rhs(t, y) from t0 to t1.

    Args:
        rhs: callable (t, y) -> dy/dt, y any complex/real ndarray shape.
        y0: initial condition (copied).
        t0, t1: integration interval, t1 > t0.
        rtol, atol: elementwise tolerances for the embedded error estimate.
        breakpoints: optional increasing times in (t0, t1) the stepper must
            land on exactly (right-hand-side discontinuities).
        first_step: optional initial step size.
        max_steps: hard cap on accepted+rejected steps.
        post_step: optional callable y -> y applied after each accepted step.

    Returns:
        (y_final, info) where info holds step statistics.

    Raises:
        IntegrationError: on step-size underflow (carries ``t_fail``).
    """
    if t1 <= t0:
        raise ValueError("integration requires t1 > t0")
    span = t1 - t0
    stops = [t1] if breakpoints is None else [float(b) for b in breakpoints if t0 < b < t1] + [t1]
    stops.sort()

    y = np.array(y0, dtype=complex)
    t = t0
    f = rhs(t, y)
    h = first_step if first_step is not None else _initial_step(rhs, t, y, f, rtol, atol, span)

    n_accepted = n_rejected = 0
    k = [None] * 7
    stop_idx = 0
    h_min_abs = 1e-14 * max(abs(t0), abs(t1), 1.0)

    for _ in range(max_steps):
        while stop_idx < len(stops) and t >= stops[stop_idx] - h_min_abs:
            stop_idx += 1
        if stop_idx >= len(stops):
            break
        t_stop = stops[stop_idx]
        h = min(h, t_stop - t)
        if h < h_min_abs:
            raise IntegrationError("step size underflow", t)

        k[0] = f
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
            k[i] = rhs(t + _C[i] * h, yi)
        y_new = y + h * sum(b * k[i] for i, b in enumerate(_B5) if b != 0.0)
        err = h * sum(e * k[i] for i, e in enumerate(_ERR) if e != 0.0)

        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = _error_norm(err, scale)

        if err_norm <= 1.0:
            t_new = t + h
            if abs(t_new - t_stop) < h_min_abs:
                t_new = t_stop
            t, y = t_new, y_new
            if post_step is not None:
                y = post_step(y)
                f = rhs(t, y)
            else:
                f = k[6]  # FSAL: last stage was evaluated at (t+h, y_new)
            n_accepted += 1
            factor = _MAX_FACTOR if err_norm == 0.0 else min(
                _MAX_FACTOR, _SAFETY * err_norm ** -0.2
            )
        else:
            n_rejected += 1
            factor = max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
        h *= factor
    else:
        raise IntegrationError("exceeded maximum step count", t)

    info = {"n_accepted": n_accepted, "n_rejected": n_rejected, "last_step": h}
    return y, info
