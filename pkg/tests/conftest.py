"""Shared fixtures: device systems, toy models and finite-difference helpers."""

import numpy as np
import pytest

from crqoc.model import DeviceParams, HilbertLayout, TargetGate, build_hamiltonians


@pytest.fixture(scope="session")
def device_params():
    return DeviceParams.from_ghz()


@pytest.fixture(scope="session")
def device_system(device_params):
    """Drift + controls + CNOT goal for the default dispersive-regime device."""
    hams = build_hamiltonians(device_params)
    target = TargetGate.cnot(hams.layout)
    return hams, target


def two_level_system(delta=0.0):
    """Single qubit with sigma_x / sigma_y drives; optional sigma_z drift."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return 0.5 * delta * sz, np.stack([sx, sy])


def central_diff(fun, x, idx, step):
    """Central finite difference of a scalar function along component idx."""
    xp = x.copy()
    xm = x.copy()
    xp[idx] += step
    xm[idx] -= step
    return (fun(xp) - fun(xm)) / (2.0 * step)


def assert_grad_close(analytic, numeric, rel=1e-5, floor=1e-8):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    tol = rel * np.abs(numeric) + floor
    err = np.abs(analytic - numeric)
    assert np.all(err <= tol), (
        f"gradient mismatch: max err {err.max():.3e}, "
        f"worst allowed {tol[np.argmax(err)]:.3e}"
    )
