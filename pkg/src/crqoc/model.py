"""Truncated rotating-frame model of two transmons coupled by a bus resonator.

Everything downstream (propagation, optimization, open-system analysis) works
with the operators built here: a drift Hamiltonian containing the transmon
detunings, anharmonicities, resonator couplings and static frequency offsets,
plus X/Y drive operators per transmon.  All frequencies are angular and in
rad/ns (hbar = 1); device tables quoted in GHz are converted with a factor
of 2*pi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

#: canonical tensor-product order of the subsystems
SUBSYSTEMS = ("transmon1", "transmon2", "resonator")

#: drive operators exposed by build_hamiltonians, in order
CONTROL_NAMES = ("omega_x1", "omega_y1", "omega_x2", "omega_y2")


# ---------------------------------------------------------------------------
# Device parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of the two-transmon/one-resonator model.

    Attributes:
        delta: per-transmon detuning (rad/ns).
        alpha: per-transmon anharmonicity (rad/ns); the device table quotes a
            single shared value, a per-transmon override is allowed.
        g: per-transmon coupling to the resonator (rad/ns).
        delta_cavity: resonator detuning from the principal drive (rad/ns).
        f: static, tunable per-transmon frequency offsets (rad/ns).
        levels: truncation per subsystem as (resonator, transmon1, transmon2).
    """

    delta: tuple[float, float]
    alpha: tuple[float, float]
    g: tuple[float, float]
    delta_cavity: float
    f: tuple[float, float] = (0.0, 0.0)
    levels: tuple[int, int, int] = (3, 3, 3)

    def __post_init__(self):
        if len(self.levels) != 3 or any(n < 2 for n in self.levels):
            raise ValueError("levels must give >= 2 states per subsystem")
        freqs = (*self.delta, *self.alpha, *self.g, self.delta_cavity, *self.f)
        if not all(math.isfinite(x) for x in freqs):
            raise ValueError("device frequencies must be finite")

    @classmethod
    def from_ghz(
        cls,
        delta: tuple[float, float] = (0.0, -0.67),
        alpha: float | tuple[float, float] = -0.32,
        g: tuple[float, float] = (0.1, 0.1),
        delta_cavity: float = 0.4,
        f: tuple[float, float] = (0.0, 0.0),
        levels: tuple[int, int, int] = (3, 3, 3),
    ) -> "DeviceParams":
        """Build from plain-GHz values; defaults are the dispersive-regime set."""
        if isinstance(alpha, (int, float)):
            alpha = (float(alpha), float(alpha))
        return cls(
            delta=(TWO_PI * delta[0], TWO_PI * delta[1]),
            alpha=(TWO_PI * alpha[0], TWO_PI * alpha[1]),
            g=(TWO_PI * g[0], TWO_PI * g[1]),
            delta_cavity=TWO_PI * delta_cavity,
            f=(TWO_PI * f[0], TWO_PI * f[1]),
            levels=tuple(int(n) for n in levels),
        )

    def with_f(self, f: tuple[float, float]) -> "DeviceParams":
        return replace(self, f=(float(f[0]), float(f[1])))

    def with_levels(self, levels: tuple[int, int, int]) -> "DeviceParams":
        return replace(self, levels=tuple(int(n) for n in levels))


def load_device_params(source: str | Path | dict) -> DeviceParams:
    """Read device parameters from a JSON config (values in GHz, non-angular).

    Recognized fields follow the device table: ``Delta`` (resonator detuning),
    ``g1``/``g2``, ``alpha`` (or ``alpha1``/``alpha2``), ``delta1``/``delta2``,
    optional ``f1``/``f2`` and ``levels``.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = dict(source)
    known = {"Delta", "g1", "g2", "alpha", "alpha1", "alpha2",
             "delta1", "delta2", "f1", "f2", "levels"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown device field(s): {sorted(unknown)}")
    if "alpha" in raw and ("alpha1" in raw or "alpha2" in raw):
        raise ValueError("give either 'alpha' or 'alpha1'/'alpha2', not both")
    alpha = (raw.get("alpha1", raw.get("alpha", -0.32)),
             raw.get("alpha2", raw.get("alpha", -0.32)))
    return DeviceParams.from_ghz(
        delta=(raw.get("delta1", 0.0), raw.get("delta2", -0.67)),
        alpha=alpha,
        g=(raw.get("g1", 0.1), raw.get("g2", 0.1)),
        delta_cavity=raw.get("Delta", 0.4),
        f=(raw.get("f1", 0.0), raw.get("f2", 0.0)),
        levels=tuple(raw.get("levels", (3, 3, 3))),
    )


# ---------------------------------------------------------------------------
# Hilbert-space layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HilbertLayout:
    """Tensor-product layout: subsystem order, dimensions and index map.

    The canonical order is transmon1 (x) transmon2 (x) resonator; permuted
    orders are supported so layout independence can be verified.
    """

    dims: tuple[int, int, int]
    order: tuple[str, str, str] = SUBSYSTEMS

    def __post_init__(self):
        if sorted(self.order) != sorted(SUBSYSTEMS):
            raise ValueError(f"order must be a permutation of {SUBSYSTEMS}")
        if len(self.dims) != 3 or any(d < 2 for d in self.dims):
            raise ValueError("each subsystem needs dimension >= 2")

    @classmethod
    def from_params(cls, params: DeviceParams) -> "HilbertLayout":
        n_res, n_t1, n_t2 = params.levels
        return cls(dims=(n_t1, n_t2, n_res))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def subsystem_dim(self, name: str) -> int:
        return self.dims[self.order.index(name)]

    def flat_index(self, n1: int, n2: int, nr: int) -> int:
        """Flat index of the product state with occupations (n1, n2, nr)."""
        occ = {"transmon1": n1, "transmon2": n2, "resonator": nr}
        idx = 0
        for name, d in zip(self.order, self.dims):
            n = occ[name]
            if not 0 <= n < d:
                raise ValueError(f"occupation {n} out of range for {name}")
            idx = idx * d + n
        return idx

    def basis_state(self, n1: int, n2: int, nr: int) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=complex)
        vec[self.flat_index(n1, n2, nr)] = 1.0
        return vec

    def embed(self, op: np.ndarray, subsystem: str) -> np.ndarray:
        """Lift a single-subsystem operator to the full product space."""
        pos = self.order.index(subsystem)
        if op.shape != (self.dims[pos], self.dims[pos]):
            raise ValueError(
                f"operator shape {op.shape} does not match {subsystem} "
                f"dimension {self.dims[pos]}"
            )
        full = np.array([[1.0 + 0.0j]])
        for i, d in enumerate(self.dims):
            factor = op if i == pos else np.eye(d, dtype=complex)
            full = np.kron(full, factor)
        return full

    def occupations(self, flat: int) -> dict[str, int]:
        """Inverse of flat_index, keyed by subsystem name."""
        occ = {}
        for name, d in zip(reversed(self.order), reversed(self.dims)):
            occ[name] = flat % d
            flat //= d
        return occ


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def annihilation(dim: int) -> np.ndarray:
    """Harmonic-ladder lowering operator: a|n> = sqrt(n)|n-1>."""
    if dim < 2:
        raise ValueError(f"annihilation operator needs dim >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


@dataclass(frozen=True)
class HamiltonianSet:
    """Drift plus drive operators on the full truncated space.

    ``controls`` holds, per transmon k, the X quadrature (b_k + b_k^dag) and
    the Y quadrature i(b_k^dag - b_k), ordered as CONTROL_NAMES.
    ``number_ops`` are the transmon number operators the static offsets f_k
    multiply; the optimizer uses them when f is treated as a free scalar.
    """

    drift: np.ndarray
    controls: tuple[np.ndarray, ...]
    number_ops: tuple[np.ndarray, np.ndarray]
    layout: HilbertLayout
    params: DeviceParams

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def control_stack(self) -> np.ndarray:
        return np.stack(self.controls)


def build_hamiltonians(params: DeviceParams, layout: HilbertLayout | None = None) -> HamiltonianSet:
    """Assemble the rotating-frame drift and the four drive operators.

    drift = sum_k [delta_k n_k + alpha_k b_k^dag b_k^dag b_k b_k
                   + g_k (a b_k^dag + a^dag b_k) + f_k n_k] + Delta a^dag a

    Args:
        params: device constants (rad/ns).
        layout: optional explicit layout; must match ``params.levels``.

    Returns:
        HamiltonianSet with Hermitian drift and controls.
    """
    if layout is None:
        layout = HilbertLayout.from_params(params)
    n_res, n_t1, n_t2 = params.levels
    expect = {"transmon1": n_t1, "transmon2": n_t2, "resonator": n_res}
    for name, d in zip(layout.order, layout.dims):
        if expect[name] != d:
            raise ValueError(
                f"layout dimension {d} for {name} does not match levels {params.levels}"
            )

    a = layout.embed(annihilation(n_res), "resonator")
    b = (
        layout.embed(annihilation(n_t1), "transmon1"),
        layout.embed(annihilation(n_t2), "transmon2"),
    )

    drift = params.delta_cavity * (a.conj().T @ a)
    number_ops = []
    controls = []
    for k in range(2):
        bk = b[k]
        bdag = bk.conj().T
        nk = bdag @ bk
        number_ops.append(nk)
        drift = drift + (params.delta[k] + params.f[k]) * nk
        drift = drift + params.alpha[k] * (bdag @ bdag @ bk @ bk)
        drift = drift + params.g[k] * (a @ bdag + a.conj().T @ bk)
        controls.append(bk + bdag)            # X quadrature
        controls.append(1j * (bdag - bk))     # Y quadrature

    # interleaved per transmon above; reorder to (X1, Y1, X2, Y2)
    controls = (controls[0], controls[1], controls[2], controls[3])
    return HamiltonianSet(
        drift=drift,
        controls=controls,
        number_ops=(number_ops[0], number_ops[1]),
        layout=layout,
        params=params,
    )


def hermiticity_defect(op: np.ndarray) -> float:
    """Max absolute elementwise deviation of ``op`` from its adjoint."""
    return float(np.max(np.abs(op - op.conj().T)))


def total_number_op(layout: HilbertLayout) -> np.ndarray:
    """Total excitation number: sum of b_k^dag b_k plus a^dag a."""
    total = np.zeros((layout.dim, layout.dim), dtype=complex)
    for name in SUBSYSTEMS:
        d = layout.subsystem_dim(name)
        total += layout.embed(np.diag(np.arange(d, dtype=complex)), name)
    return total


# ---------------------------------------------------------------------------
# Computational subspace and target gate
# ---------------------------------------------------------------------------


def computational_projector(layout: HilbertLayout) -> np.ndarray:
    """Isometry from the 4-dim qubit subspace into the full space.

    Columns are |q1 q2, n_r=0> for (q1, q2) in |00>, |01>, |10>, |11>.
    """
    p = np.zeros((layout.dim, 4), dtype=complex)
    for col, (q1, q2) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        p[layout.flat_index(q1, q2, 0), col] = 1.0
    return p


def cnot_matrix(control: int = 1) -> np.ndarray:
    """CNOT on the (q1, q2) basis; ``control`` selects the control transmon."""
    if control == 1:
        return np.array(
            [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
            dtype=complex,
        )
    if control == 2:
        return np.array(
            [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]],
            dtype=complex,
        )
    raise ValueError("control transmon must be 1 or 2")


@dataclass(frozen=True)
class TargetGate:
    """A unitary on the computational subspace plus its embedding isometry."""

    gate: np.ndarray
    isometry: np.ndarray

    def __post_init__(self):
        d = self.gate.shape[0]
        if self.gate.shape != (d, d) or self.isometry.shape[1] != d:
            raise ValueError("gate and isometry dimensions are inconsistent")
        if np.max(np.abs(self.gate.conj().T @ self.gate - np.eye(d))) > 1e-12:
            raise ValueError("target gate is not unitary")
        ortho = self.isometry.conj().T @ self.isometry
        if np.max(np.abs(ortho - np.eye(d))) > 1e-12:
            raise ValueError("isometry columns are not orthonormal")

    @property
    def subspace_dim(self) -> int:
        return self.gate.shape[0]

    @classmethod
    def cnot(cls, layout: HilbertLayout, control: int = 1) -> "TargetGate":
        return cls(gate=cnot_matrix(control), isometry=computational_projector(layout))
