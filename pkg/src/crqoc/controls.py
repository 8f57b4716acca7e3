"""Pulse parametrizations and their parameter gradients.

Four ansatz families are supported: plain piecewise-constant (PWC) amplitudes,
Gaussian-filtered PWC pixels on a fine grid, a bounded/windowed Fourier series,
and a two-carrier envelope set in which the assembled drives carry explicit
cosine modulation.  All amplitudes are in rad/ns, times in ns.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from crqoc.model import CONTROL_NAMES, TWO_PI, DeviceParams

_T_SLACK = 1e-12  # tolerance when checking 0 <= t <= T


def _check_time(t: float, duration: float):
    if t < -_T_SLACK or t > duration + _T_SLACK:
        raise ValueError(f"time {t} outside pulse domain [0, {duration}]")


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Fine-grid sampled controls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FineControls:
    """Controls sampled on a uniform fine grid; sample j covers
    [j*dt, (j+1)*dt) and holds the midpoint value."""

    values: np.ndarray  # (N, C)
    dt: float

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("fine control values must be 2-D (samples, controls)")
        if self.dt <= 0:
            raise ValueError("fine step must be positive")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_samples) + 0.5) * self.dt

    def at(self, t: float) -> np.ndarray:
        _check_time(t, self.duration)
        j = min(int(t / self.dt), self.n_samples - 1)
        return self.values[j]

    def durations(self) -> np.ndarray:
        return np.full(self.n_samples, self.dt)


class StaircaseControls:
    """Adapter exposing a FineControls staircase through the analytic-controls
    interface (no free parameters); lets the ODE route propagate a staircase."""

    def __init__(self, fine: FineControls):
        self.fine = fine
        self.n_params = 0

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(1, self.fine.n_samples) * self.fine.dt

    def amplitudes(self, t: float) -> np.ndarray:
        return self.fine.at(t)

    def amplitude_grads(self, t: float) -> np.ndarray:
        return np.zeros((self.fine.n_controls, 0))


# ---------------------------------------------------------------------------
# Piecewise-constant pulses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PwcPulse:
    """Per-control amplitudes on coarse slices, optional bound and zero buffers.

    Attributes:
        values: (M, C) slice amplitudes in rad/ns.
        durations: (M,) slice lengths in ns.
        bound: optional global amplitude bound B.
        buffer: leading/trailing zero time in ns; must align with slice edges
            and the covered slices must hold exact zeros.
    """

    values: np.ndarray
    durations: np.ndarray
    bound: float | None = None
    buffer: float = 0.0

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        durations = np.asarray(self.durations, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "durations", durations)
        if values.shape[0] != durations.shape[0]:
            raise ValueError("values and durations disagree on slice count")
        if np.any(durations <= 0):
            raise ValueError("slice durations must be positive")
        if self.bound is not None and np.any(np.abs(values) > self.bound + 1e-12):
            raise ValueError("amplitude exceeds the configured bound")
        if self.buffer > 0:
            lead = self._buffer_slices(front=True)
            trail = self._buffer_slices(front=False)
            if np.any(values[:lead] != 0.0) or np.any(values[values.shape[0] - trail:] != 0.0):
                raise ValueError("buffer slices must be exactly zero")

    def _buffer_slices(self, front: bool) -> int:
        durs = self.durations if front else self.durations[::-1]
        acc = np.cumsum(durs)
        n = int(np.searchsorted(acc, self.buffer - 1e-9, side="left")) + 1
        if n > len(durs) or abs(acc[n - 1] - self.buffer) > 1e-9:
            raise ValueError("buffer must align with slice edges")
        return n

    @property
    def n_slices(self) -> int:
        return self.values.shape[0]

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return float(np.sum(self.durations))

    @cached_property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def slice_index(self, t: float) -> int:
        """Slice containing t; boundaries belong to the later slice, t = T to
        the last one."""
        _check_time(t, self.duration)
        j = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(max(j, 0), self.n_slices - 1)

    def eval(self, t: float) -> np.ndarray:
        return self.values[self.slice_index(t)]

    def fine_samples(self, dt: float) -> FineControls:
        """Midpoint-sample the staircase on a uniform grid of step dt."""
        n = int(round(self.duration / dt))
        if abs(n * dt - self.duration) > 1e-9:
            raise ValueError("fine step must divide the total duration")
        mid = (np.arange(n) + 0.5) * dt
        idx = np.minimum(np.searchsorted(self.edges, mid, side="right") - 1, self.n_slices - 1)
        return FineControls(values=self.values[idx], dt=dt)

    @classmethod
    def uniform(cls, values: np.ndarray, duration: float, **kwargs) -> "PwcPulse":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        m = values.shape[0]
        return cls(values=values, durations=np.full(m, duration / m), **kwargs)


def eval_pwc(pulse: PwcPulse, t: float) -> np.ndarray:
    """Amplitudes of the slice containing t (right-closed boundaries)."""
    return pulse.eval(t)


# ---------------------------------------------------------------------------
# Gaussian filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    """Gaussian smoothing window applied to fine-sampled staircases.

    The kernel is sampled on the fine grid, truncated at +-truncation*sigma
    and normalized to unit sum, so a long plateau passes with unit gain.
    Boundaries are zero-padded.
    """

    sigma: float = 0.4
    dt_fine: float = 0.2
    truncation: float = 5.0

    def __post_init__(self):
        if self.sigma <= 0 or self.dt_fine <= 0:
            raise ValueError("sigma and dt_fine must be positive")

    def kernel(self) -> np.ndarray:
        # dt <= sigma/2 keeps the sampled-kernel transfer function within a
        # fraction of a percent of the continuous Gaussian (theta-function
        # corrections are exponentially small); 0.2 ns at sigma = 0.4 ns passes
        if self.dt_fine > self.sigma / 2 + 1e-12:
            raise ValueError(
                f"fine step {self.dt_fine} does not resolve sigma={self.sigma}"
                " (need dt_fine <= sigma/2)"
            )
        half = int(math.ceil(self.truncation * self.sigma / self.dt_fine - 1e-9))
        x = np.arange(-half, half + 1) * self.dt_fine
        k = np.exp(-0.5 * (x / self.sigma) ** 2)
        return k / k.sum()

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """Convolve columns with the kernel under zero padding; length is kept."""
        k = self.kernel()
        half = (len(k) - 1) // 2
        samples = np.atleast_2d(samples.T).T
        padded = np.pad(samples, ((half, half), (0, 0)))
        out = np.empty_like(samples)
        for c in range(samples.shape[1]):
            out[:, c] = np.convolve(padded[:, c], k, mode="valid")
        return out


def gaussian_filter(pulse: PwcPulse, spec: FilterSpec) -> FineControls:
    """Fine-sample a staircase and smooth it with the Gaussian window."""
    fine = pulse.fine_samples(spec.dt_fine)
    return FineControls(values=spec.apply(fine.values), dt=spec.dt_fine)


def filter_matrix(pulse: PwcPulse, spec: FilterSpec) -> np.ndarray:
    """Linear map W from coarse slice values to filtered fine samples.

    The filter is linear, so the gradient of any downstream functional pulls
    back through W^T.  Columns are built by filtering unit-pixel staircases,
    which keeps the matrix exactly consistent with ``gaussian_filter``.
    """
    n_fine = int(round(pulse.duration / spec.dt_fine))
    mid = (np.arange(n_fine) + 0.5) * spec.dt_fine
    idx = np.minimum(
        np.searchsorted(pulse.edges, mid, side="right") - 1, pulse.n_slices - 1
    )
    indicator = np.zeros((n_fine, pulse.n_slices))
    indicator[np.arange(n_fine), idx] = 1.0
    return spec.apply(indicator)


# ---------------------------------------------------------------------------
# Bounded, windowed Fourier ansatz
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierAnsatz:
    """Truncated Fourier series per control, saturated and windowed.

    Each control k carries components (A_kj, w_kj, phi_kj); the raw series is
    squashed through B*tanh(raw/B) to enforce the global bound and multiplied
    by a product of two sigmoids enforcing a smooth start and finish.  The
    flat parameter vector concatenates (A, w, phi) triples control by control.
    """

    components: tuple[np.ndarray, ...]
    duration: float
    bound: float
    t_ramp: float = 2.0
    tau_edge: float = 0.25

    def __post_init__(self):
        comps = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.components)
        for c in comps:
            if c.size and c.shape[1] != 3:
                raise ValueError("components must be (m, 3) arrays of (A, w, phi)")
        object.__setattr__(self, "components", comps)
        if self.duration <= 0 or self.bound <= 0:
            raise ValueError("duration and bound must be positive")

    @property
    def n_controls(self) -> int:
        return len(self.components)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.components)

    @property
    def n_params(self) -> int:
        return 3 * sum(self.counts)

    @property
    def params(self) -> np.ndarray:
        if self.n_params == 0:
            return np.zeros(0)
        return np.concatenate([c.ravel() for c in self.components])

    def with_params(self, flat: np.ndarray) -> "FourierAnsatz":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError("parameter vector has the wrong length")
        parts, pos = [], 0
        for m in self.counts:
            parts.append(flat[pos:pos + 3 * m].reshape(m, 3).copy())
            pos += 3 * m
        return replace(self, components=tuple(parts))

    def drop_component(self, control: int, comp: int) -> "FourierAnsatz":
        parts = [c.copy() for c in self.components]
        parts[control] = np.delete(parts[control], comp, axis=0)
        return replace(self, components=tuple(parts))

    def window(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        rise = _sigmoid((t - self.t_ramp) / self.tau_edge)
        fall = _sigmoid((self.duration - self.t_ramp - t) / self.tau_edge)
        return rise * fall

    def raw(self, t: float) -> np.ndarray:
        out = np.empty(self.n_controls)
        for k, c in enumerate(self.components):
            out[k] = np.sum(c[:, 0] * np.cos(c[:, 1] * t + c[:, 2])) if c.size else 0.0
        return out

    def amplitudes(self, t: float) -> np.ndarray:
        _check_time(t, self.duration)
        return self.bound * np.tanh(self.raw(t) / self.bound) * self.window(t)

    def amplitude_grads(self, t: float) -> np.ndarray:
        """Analytic d(amplitude)/d(params), shape (n_controls, n_params)."""
        _check_time(t, self.duration)
        w = float(self.window(t))
        grads = np.zeros((self.n_controls, self.n_params))
        pos = 0
        for k, c in enumerate(self.components):
            m = c.shape[0]
            if m:
                phase = c[:, 1] * t + c[:, 2]
                raw = float(np.sum(c[:, 0] * np.cos(phase)))
                sech2 = 1.0 / np.cosh(raw / self.bound) ** 2
                block = np.empty((m, 3))
                block[:, 0] = np.cos(phase)
                block[:, 1] = -c[:, 0] * t * np.sin(phase)
                block[:, 2] = -c[:, 0] * np.sin(phase)
                grads[k, pos:pos + 3 * m] = (sech2 * w) * block.ravel()
            pos += 3 * m
        return grads


def eval_fourier(ansatz: FourierAnsatz, t: float) -> tuple[np.ndarray, float]:
    """Saturated, windowed amplitudes and the window value at t."""
    return ansatz.amplitudes(t), float(ansatz.window(t))


def fourier_param_grad(ansatz: FourierAnsatz, t: float) -> np.ndarray:
    return ansatz.amplitude_grads(t)


# ---------------------------------------------------------------------------
# Two-carrier envelopes
# ---------------------------------------------------------------------------

#: envelope column order; primes are baseband, double primes are modulated
ENVELOPE_NAMES = (
    "omega_x1p", "omega_x1pp", "omega_y1p", "omega_y1pp",
    "omega_x2p", "omega_x2pp", "omega_y2p", "omega_y2pp",
)


@dataclass(frozen=True)
class TwoCarrierPulse:
    """Eight filtered AWG envelopes assembled onto two carrier frequencies.

    The drives on transmon 1 pick up cos(carrier1 * t) on their double-prime
    envelopes, those on transmon 2 cos(carrier2 * t); with carrier frequencies
    (delta + g, delta - g), delta = delta_2 + f_2, the two tones straddle the
    Rabi-split qubit resonance.
    """

    envelopes: PwcPulse
    carrier1: float
    carrier2: float
    filter: FilterSpec = field(default_factory=lambda: FilterSpec(dt_fine=0.05))

    def __post_init__(self):
        if self.envelopes.n_controls != 8:
            raise ValueError("two-carrier pulse needs 8 envelope columns")

    @property
    def duration(self) -> float:
        return self.envelopes.duration

    @staticmethod
    def carriers_for(params: DeviceParams) -> tuple[float, float]:
        delta = params.delta[1] + params.f[1]
        g = params.g[1]
        return (delta + g, delta - g)

    @cached_property
    def assembled(self) -> FineControls:
        env = gaussian_filter(self.envelopes, self.filter)
        t = env.times
        cos1 = np.cos(self.carrier1 * t)
        cos2 = np.cos(self.carrier2 * t)
        e = env.values
        out = np.stack(
            [
                e[:, 0] + cos1 * e[:, 1],
                e[:, 2] + cos1 * e[:, 3],
                e[:, 4] + cos2 * e[:, 5],
                e[:, 6] + cos2 * e[:, 7],
            ],
            axis=1,
        )
        return FineControls(values=out, dt=self.filter.dt_fine)


def assemble_two_carrier(pulse: TwoCarrierPulse, t: float) -> np.ndarray:
    """The four assembled control amplitudes at time t (fine-grid staircase)."""
    return pulse.assembled.at(t)


# ---------------------------------------------------------------------------
# Initial guess for the cross-resonance drive
# ---------------------------------------------------------------------------


def initial_guess_cr(
    params: DeviceParams,
    duration: float,
    n_slices: int = 500,
    buffer: float = 0.0,
) -> tuple[PwcPulse, tuple[float, float]]:
    """Gaussian cross-resonance drive on transmon 2 with a derivative quadrature.

    Omega_x2 is a 0.4-GHz-amplitude Gaussian centred at T/2 with sigma = T/4;
    Omega_y2 is its time derivative scaled by 1/delta_2; transmon 1 is not
    driven.  Returns the sampled pulse and the static offsets (f1, f2) =
    (0, 2*pi*0.1) rad/ns that accompany the guess.

    Args:
        params: device constants (delta_2 sets the quadrature scale).
        duration: gate time T > 0.
        n_slices: number of uniform slices to sample on.
        buffer: leading/trailing zero time (slices there are forced to zero).

    Returns:
        (pulse, f) with pulse of shape (n_slices, 4).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    mu = duration / 2.0
    sigma = duration / 4.0
    amp = TWO_PI * 0.4
    dt = duration / n_slices
    t = (np.arange(n_slices) + 0.5) * dt
    x2 = amp * np.exp(-((t - mu) ** 2) / (2 * sigma**2))
    y2 = (1.0 / params.delta[1]) * (-(t - mu) / sigma**2) * x2
    values = np.zeros((n_slices, 4))
    values[:, 2] = x2
    values[:, 3] = y2
    if buffer > 0:
        values[t < buffer] = 0.0
        values[t > duration - buffer] = 0.0
    return (
        PwcPulse.uniform(values, duration, buffer=buffer),
        (0.0, TWO_PI * 0.1),
    )


# ---------------------------------------------------------------------------
# Ansatz descriptions and random initialization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PwcSpec:
    """Plain or filtered PWC ansatz: free pixels between zero buffers."""

    duration: float
    n_slices: int
    bound: float | None = None
    buffer: float = 0.0
    init_amp: float = TWO_PI * 0.1
    n_controls: int = 4
    filter: FilterSpec | None = None

    @property
    def slice_width(self) -> float:
        return self.duration / self.n_slices

    @property
    def n_buffer_slices(self) -> int:
        n = int(round(self.buffer / self.slice_width))
        if abs(n * self.slice_width - self.buffer) > 1e-9:
            raise ValueError("buffer must be a whole number of slices")
        return n

    @property
    def n_free_slices(self) -> int:
        return self.n_slices - 2 * self.n_buffer_slices

    @property
    def n_params(self) -> int:
        return self.n_free_slices * self.n_controls

    def make_pulse(self, flat: np.ndarray) -> PwcPulse:
        free = np.asarray(flat, dtype=float).reshape(self.n_free_slices, self.n_controls)
        nb = self.n_buffer_slices
        values = np.zeros((self.n_slices, self.n_controls))
        values[nb:self.n_slices - nb] = free
        return PwcPulse.uniform(values, self.duration, bound=self.bound, buffer=self.buffer)


@dataclass(frozen=True)
class FourierSpec:
    """Bounded windowed Fourier series, m components per control."""

    duration: float
    n_components: int
    bound: float
    omega_max: float = TWO_PI * 1.0
    t_ramp: float = 2.0
    tau_edge: float = 0.25
    n_controls: int = 4

    @property
    def n_params(self) -> int:
        return 3 * self.n_components * self.n_controls

    def make_ansatz(self, flat: np.ndarray) -> FourierAnsatz:
        template = FourierAnsatz(
            components=tuple(
                np.zeros((self.n_components, 3)) for _ in range(self.n_controls)
            ),
            duration=self.duration,
            bound=self.bound,
            t_ramp=self.t_ramp,
            tau_edge=self.tau_edge,
        )
        return template.with_params(flat)


@dataclass(frozen=True)
class TwoCarrierSpec:
    """Eight PWC AWG envelopes, filtered then assembled on two carriers."""

    duration: float
    carrier1: float
    carrier2: float
    pixel: float = 1.0
    bound: float = TWO_PI * 0.4
    buffer: float = 4.0
    filter: FilterSpec = field(default_factory=lambda: FilterSpec(dt_fine=0.05))

    @classmethod
    def for_device(cls, params: DeviceParams, duration: float, **kwargs) -> "TwoCarrierSpec":
        w1, w2 = TwoCarrierPulse.carriers_for(params)
        return cls(duration=duration, carrier1=w1, carrier2=w2, **kwargs)

    @property
    def n_slices(self) -> int:
        n = int(round(self.duration / self.pixel))
        if abs(n * self.pixel - self.duration) > 1e-9:
            raise ValueError("pixel width must divide the duration")
        return n

    @property
    def n_buffer_slices(self) -> int:
        n = int(round(self.buffer / self.pixel))
        if abs(n * self.pixel - self.buffer) > 1e-9:
            raise ValueError("buffer must be a whole number of pixels")
        return n

    @property
    def n_free_slices(self) -> int:
        return self.n_slices - 2 * self.n_buffer_slices

    @property
    def n_params(self) -> int:
        return self.n_free_slices * 8

    def make_pulse(self, flat: np.ndarray) -> TwoCarrierPulse:
        free = np.asarray(flat, dtype=float).reshape(self.n_free_slices, 8)
        nb = self.n_buffer_slices
        values = np.zeros((self.n_slices, 8))
        values[nb:self.n_slices - nb] = free
        env = PwcPulse.uniform(
            values, self.duration, bound=self.bound, buffer=self.buffer
        )
        return TwoCarrierPulse(
            envelopes=env, carrier1=self.carrier1, carrier2=self.carrier2,
            filter=self.filter,
        )


AnsatzSpec = PwcSpec | FourierSpec | TwoCarrierSpec


def random_init(spec: AnsatzSpec, seed: int) -> np.ndarray:
    """Deterministic random parameter vector for any ansatz description."""
    rng = np.random.default_rng(seed)
    if isinstance(spec, PwcSpec):
        amp = spec.bound if spec.bound is not None else spec.init_amp
        return rng.uniform(-amp, amp, size=spec.n_params)
    if isinstance(spec, TwoCarrierSpec):
        return rng.uniform(-spec.bound, spec.bound, size=spec.n_params)
    if isinstance(spec, FourierSpec):
        m = spec.n_components
        out = np.empty(spec.n_params)
        for k in range(spec.n_controls):
            block = np.empty((m, 3))
            block[:, 0] = rng.uniform(-spec.bound / m, spec.bound / m, size=m)
            block[:, 1] = rng.uniform(0.0, spec.omega_max, size=m)
            block[:, 2] = rng.uniform(0.0, TWO_PI, size=m)
            out[3 * m * k:3 * m * (k + 1)] = block.ravel()
        return out
    raise TypeError(f"unknown ansatz spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Import / export
# ---------------------------------------------------------------------------


def controls_to_csv(fine: FineControls, path: str | Path, names=CONTROL_NAMES):
    """Write fine-grid controls as CSV; times in ns, amplitudes in GHz."""
    if len(names) != fine.n_controls:
        raise ValueError("one column name per control is required")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ns"] + [f"{n}_GHz" for n in names])
        for t, row in zip(fine.times, fine.values):
            writer.writerow([f"{t:.9g}"] + [f"{v / TWO_PI:.12g}" for v in row])


def controls_from_csv(path: str | Path) -> FineControls:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    if data.shape[0] < 2:
        raise ValueError("need at least two samples to recover the fine step")
    dt = data[1, 0] - data[0, 0]
    return FineControls(values=data[:, 1:] * TWO_PI, dt=dt)


def ansatz_record(spec: AnsatzSpec, params: np.ndarray, **meta) -> dict:
    """JSON-serializable record of a parameter vector plus ansatz metadata."""
    kind = type(spec).__name__
    fields = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in spec.__dict__.items()
        if not isinstance(v, FilterSpec)
    }
    if getattr(spec, "filter", None) is not None:
        fields["filter"] = dict(spec.filter.__dict__)
    return {"ansatz": {"kind": kind, **fields}, "params": list(map(float, params)), **meta}


def write_ansatz_json(path: str | Path, spec: AnsatzSpec, params: np.ndarray, **meta):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ansatz_record(spec, params, **meta), fh, indent=1, sort_keys=True)
