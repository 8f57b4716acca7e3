"""crqoc: optimal-control toolkit for fast cross-resonance CNOT gates."""

from crqoc.model import (
    CONTROL_NAMES,
    DeviceParams,
    HamiltonianSet,
    HilbertLayout,
    TargetGate,
    annihilation,
    build_hamiltonians,
    computational_projector,
    load_device_params,
)

__all__ = [
    "CONTROL_NAMES",
    "DeviceParams",
    "HamiltonianSet",
    "HilbertLayout",
    "TargetGate",
    "annihilation",
    "build_hamiltonians",
    "computational_projector",
    "load_device_params",
]

__version__ = "0.1.0"
