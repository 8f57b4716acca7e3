"""Gradient-driven pulse optimization.

A limited-memory BFGS with a strong-Wolfe line search minimizes the
gate-overlap goal over the ansatz parameters.  Amplitude bounds are imposed
through a smooth B*tanh(u) reparametrization so curvature assumptions stay
valid; static frequency offsets f_k can be optimized alongside the pulse by
treating the transmon number operators as constant-amplitude controls.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from crqoc.controls import (
    FourierAnsatz,
    FourierSpec,
    PwcSpec,
    TwoCarrierSpec,
    filter_matrix,
    initial_guess_cr,
    random_init,
)
from crqoc.model import HamiltonianSet
from crqoc.propagation import GoalSpec, goat_propagate, infidelity, pwc_goal_and_grad

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_LINE_SEARCH = "line-search-failure"
STATUS_TARGET = "target-reached"
STATUS_ERROR = "error"

_FINISHED = (STATUS_CONVERGED, STATUS_TARGET)


@dataclass(frozen=True)
class OptimizerOptions:
    """Stop criteria and line-search constants of the L-BFGS search."""

    grad_tol: float = 1e-9
    max_iter: int = 2000
    target: float | None = None
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_search_evals: int = 30
    goat_rtol: float = 1e-8
    goat_atol: float = 1e-11


@dataclass
class OptimizationResult:
    """Outcome of one optimization run."""

    x: np.ndarray
    value: float
    trace: np.ndarray
    grad_norm: float
    status: str
    n_iterations: int
    n_evaluations: int
    seed: int | None = None
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# L-BFGS with strong-Wolfe line search
# ---------------------------------------------------------------------------


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic through (a, fa, dfa), (b, fb, dfb); None if bad."""
    d1 = dfa + dfb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0:
        return None
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = dfb - dfa + 2 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (dfb + d2 - d1) / denom
    return x if np.isfinite(x) else None


def _zoom(fun, x, d, phi0, dphi0, lo, hi, c1, c2, budget):
    """Strong-Wolfe zoom stage; lo/hi are (alpha, phi, dphi, f, g) records."""
    for _ in range(budget):
        a_lo, phi_lo, dphi_lo = lo[0], lo[1], lo[2]
        a_hi, phi_hi, dphi_hi = hi[0], hi[1], hi[2]
        alpha = _cubic_min(a_lo, phi_lo, dphi_lo, a_hi, phi_hi, dphi_hi)
        width = abs(a_hi - a_lo)
        inner = min(a_lo, a_hi) + 0.1 * width
        outer = max(a_lo, a_hi) - 0.1 * width
        if alpha is None or not inner <= alpha <= outer:
            alpha = 0.5 * (a_lo + a_hi)
        f_a, g_a = fun(x + alpha * d)
        phi, dphi = f_a, float(g_a @ d)
        if not np.isfinite(phi) or phi > phi0 + c1 * alpha * dphi0 or phi >= phi_lo:
            hi = (alpha, phi, dphi, f_a, g_a)
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, f_a, g_a
            if dphi * (a_hi - a_lo) >= 0:
                hi = lo
            lo = (alpha, phi, dphi, f_a, g_a)
        if width < 1e-14:
            break
    return None


def _strong_wolfe(fun, x, f0, g0, d, alpha0, c1, c2, budget):
    """Bracket + zoom line search enforcing the strong Wolfe conditions."""
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        return None
    prev = (0.0, f0, dphi0, f0, g0)
    alpha = alpha0
    for i in range(budget):
        f_a, g_a = fun(x + alpha * d)
        phi, dphi = f_a, float(g_a @ d)
        if not np.isfinite(phi):
            alpha *= 0.3
            continue
        cur = (alpha, phi, dphi, f_a, g_a)
        if phi > f0 + c1 * alpha * dphi0 or (i > 0 and phi >= prev[1]):
            return _zoom(fun, x, d, f0, dphi0, prev, cur, c1, c2, budget)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f_a, g_a
        if dphi >= 0:
            return _zoom(fun, x, d, f0, dphi0, cur, prev, c1, c2, budget)
        prev = cur
        alpha = min(2.0 * alpha, 1e6)
    return None


def lbfgs_minimize(
    fun, x0: np.ndarray, opts: OptimizerOptions = OptimizerOptions()
) -> OptimizationResult:
    """Minimize a differentiable scalar function given (value, gradient) pairs.

    Two-loop-recursion L-BFGS (memory 10) with a strong-Wolfe line search
    (c1 = 1e-4, c2 = 0.9).  Terminates on the max-norm gradient tolerance,
    the iteration cap, or when the value drops to ``opts.target``.

    Args:
        fun: callable x -> (value, gradient).
        x0: finite starting point.
        opts: stop criteria and line-search constants.

    Returns:
        OptimizationResult; ``trace`` holds the accepted values including the
        starting one and is non-increasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("starting point must be finite")
    t_start = time.perf_counter()

    n_evals = 0

    def evaluated(xq):
        nonlocal n_evals
        n_evals += 1
        f, g = fun(xq)
        return float(f), np.asarray(g, dtype=float)

    f, g = evaluated(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError(f"objective not finite at the starting point (f={f})")
    trace = [f]

    def finish(status, n_iter):
        return OptimizationResult(
            x=x,
            value=f,
            trace=np.array(trace),
            grad_norm=float(np.max(np.abs(g))) if g.size else 0.0,
            status=status,
            n_iterations=n_iter,
            n_evaluations=n_evals,
            wall_time=time.perf_counter() - t_start,
        )

    if opts.target is not None and f <= opts.target:
        return finish(STATUS_TARGET, 0)
    if g.size == 0 or np.max(np.abs(g)) <= opts.grad_tol:
        return finish(STATUS_CONVERGED, 0)

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    for it in range(1, opts.max_iter + 1):
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q

        if d @ g >= 0:  # not a descent direction; drop curvature pairs
            s_hist, y_hist, rho_hist = [], [], []
            d = -g

        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-12))
        hit = _strong_wolfe(
            evaluated, x, f, g, d, alpha0, opts.c1, opts.c2, opts.max_search_evals
        )
        if hit is None and s_hist:
            # retry once along steepest descent with fresh memory
            s_hist, y_hist, rho_hist = [], [], []
            d = -g
            alpha0 = min(1.0, 1.0 / max(np.linalg.norm(g), 1e-12))
            hit = _strong_wolfe(
                evaluated, x, f, g, d, alpha0, opts.c1, opts.c2, opts.max_search_evals
            )
        if hit is None:
            return finish(STATUS_LINE_SEARCH, it - 1)

        alpha, f_new, g_new = hit
        step = alpha * d
        y_vec = g_new - g
        sy = step @ y_vec
        if sy > 1e-10 * np.linalg.norm(step) * np.linalg.norm(y_vec):
            s_hist.append(step)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > opts.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x = x + step
        f, g = f_new, g_new
        trace.append(f)
        if opts.target is not None and f <= opts.target:
            return finish(STATUS_TARGET, it)
        if np.max(np.abs(g)) <= opts.grad_tol:
            return finish(STATUS_CONVERGED, it)

    return finish(STATUS_MAX_ITER, opts.max_iter)


# ---------------------------------------------------------------------------
# Problem definition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizationProblem:
    """Goal, ansatz description and options for one control search.

    ``hams`` must be built with f = (0, 0); the static offsets start from
    ``f_init`` and the flagged ones are appended to the parameter vector.
    """

    hams: HamiltonianSet
    goal: GoalSpec
    ansatz: PwcSpec | FourierSpec | TwoCarrierSpec
    f_init: tuple[float, float] = (0.0, 0.0)
    optimize_f: tuple[bool, bool] = (False, False)
    options: OptimizerOptions = field(default_factory=OptimizerOptions)
    init_style: str = "random"  # or "guess_perturb"
    guess_scale: float = 0.05

    def __post_init__(self):
        if any(abs(v) > 1e-15 for v in self.hams.params.f):
            raise ValueError(
                "build the problem Hamiltonians with f = (0, 0); "
                "offsets enter through f_init"
            )

    @property
    def duration(self) -> float:
        return self.ansatz.duration

    @property
    def n_static(self) -> int:
        return int(self.optimize_f[0]) + int(self.optimize_f[1])

    def full_f(self, static_values: np.ndarray) -> tuple[float, float]:
        """Merge optimized static offsets with the fixed ones."""
        out = list(self.f_init)
        pos = 0
        for k in range(2):
            if self.optimize_f[k]:
                out[k] = float(static_values[pos])
                pos += 1
        return tuple(out)


def problem_fingerprint(problem: OptimizationProblem) -> str:
    """Stable hash of everything that defines the search (for run manifests)."""
    p = problem.hams.params
    spec = problem.ansatz
    payload = {
        "device": {
            "delta": p.delta, "alpha": p.alpha, "g": p.g,
            "delta_cavity": p.delta_cavity, "levels": p.levels,
        },
        "ansatz": {
            "kind": type(spec).__name__,
            **{
                k: (list(v) if isinstance(v, tuple) else getattr(v, "__dict__", v))
                for k, v in spec.__dict__.items()
            },
        },
        "f_init": problem.f_init,
        "optimize_f": problem.optimize_f,
        "options": problem.options.__dict__,
        "init_style": problem.init_style,
        "guess_scale": problem.guess_scale,
        "target_gate": np.asarray(problem.goal.target.gate).tolist(),
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def run_manifest(problem: OptimizationProblem, result: OptimizationResult) -> dict:
    """JSON-serializable record that allows an exact re-run."""
    return {
        "problem_hash": problem_fingerprint(problem),
        "seed": result.seed,
        "options": problem.options.__dict__,
        "result": {
            "value": result.value,
            "status": result.status,
            "n_iterations": result.n_iterations,
            "grad_norm": result.grad_norm,
            "x": [float(v) for v in result.x],
            "f": list(result.info.get("f", problem.f_init)),
        },
    }


# ---------------------------------------------------------------------------
# Staircase (GRAPE-style) objectives
# ---------------------------------------------------------------------------

_ATANH_CLIP = 1.0 - 1e-9


class _StaircaseMap:
    """Differentiable map from optimizer coordinates to fine-grid controls.

    Handles the optional tanh bound, the filter pullback for filtered PWC and
    two-carrier assembly, and the appended static-offset columns.
    """

    def __init__(self, problem: OptimizationProblem):
        spec = problem.ansatz
        self.problem = problem
        self.spec = spec
        self.bound = spec.bound
        self.n_pixels = spec.n_params
        self.n_static = problem.n_static

        template = spec.make_pulse(np.zeros(self.n_pixels))
        if isinstance(spec, TwoCarrierSpec):
            pulse = template.envelopes
            self.w = filter_matrix(pulse, spec.filter)
            times = (np.arange(self.w.shape[0]) + 0.5) * spec.filter.dt_fine
            self.cosines = (
                np.cos(spec.carrier1 * times),
                np.cos(spec.carrier2 * times),
            )
            self.durations = np.full(self.w.shape[0], spec.filter.dt_fine)
        elif spec.filter is not None:
            self.w = filter_matrix(template, spec.filter)
            self.cosines = None
            self.durations = np.full(self.w.shape[0], spec.filter.dt_fine)
        else:
            self.w = None
            self.cosines = None
            self.durations = np.full(spec.n_slices, spec.slice_width)
        nb = spec.n_buffer_slices
        self.free = slice(nb, spec.n_slices - nb)

        ops = [np.asarray(op) for op in problem.hams.controls]
        drift = problem.hams.drift.copy()
        # non-optimized offsets fold into the drift; optimized ones become
        # constant-amplitude columns on the number operators
        for k in range(2):
            if not problem.optimize_f[k]:
                drift = drift + problem.f_init[k] * problem.hams.number_ops[k]
            else:
                ops.append(np.asarray(problem.hams.number_ops[k]))
        self.drift = drift
        self.ops = np.stack(ops)

    # -- coordinate changes -------------------------------------------------

    def nat_to_opt(self, x_nat: np.ndarray) -> np.ndarray:
        x = np.asarray(x_nat, dtype=float)
        pixels, stat = x[: self.n_pixels], x[self.n_pixels:]
        if self.bound is not None:
            pixels = np.arctanh(
                np.clip(pixels / self.bound, -_ATANH_CLIP, _ATANH_CLIP)
            )
        return np.concatenate([pixels, stat])

    def opt_to_nat(self, u: np.ndarray) -> np.ndarray:
        pixels, stat = u[: self.n_pixels], u[self.n_pixels:]
        if self.bound is not None:
            pixels = self.bound * np.tanh(pixels)
        return np.concatenate([pixels, stat])

    # -- forward map ---------------------------------------------------------

    def _pixels_to_full(self, pixels: np.ndarray, n_cols: int) -> np.ndarray:
        full = np.zeros((self.spec.n_slices, n_cols))
        full[self.free] = pixels.reshape(-1, n_cols)
        return full

    def fine_values(self, x_nat: np.ndarray) -> np.ndarray:
        pixels, stat = x_nat[: self.n_pixels], x_nat[self.n_pixels:]
        if self.cosines is not None:
            env = self.w @ self._pixels_to_full(pixels, 8)
            cos1, cos2 = self.cosines
            fine = np.stack(
                [
                    env[:, 0] + cos1 * env[:, 1],
                    env[:, 2] + cos1 * env[:, 3],
                    env[:, 4] + cos2 * env[:, 5],
                    env[:, 6] + cos2 * env[:, 7],
                ],
                axis=1,
            )
        elif self.w is not None:
            fine = self.w @ self._pixels_to_full(pixels, 4)
        else:
            fine = self._pixels_to_full(pixels, 4)
        if self.n_static:
            f_cols = np.broadcast_to(stat, (fine.shape[0], self.n_static))
            fine = np.concatenate([fine, f_cols], axis=1)
        return fine

    def pullback(self, grad_fine: np.ndarray) -> np.ndarray:
        """Adjoint of fine_values: gradient wrt (pixels, static offsets)."""
        g4 = grad_fine[:, :4]
        if self.cosines is not None:
            cos1, cos2 = self.cosines
            g_env = np.stack(
                [
                    g4[:, 0], cos1 * g4[:, 0],
                    g4[:, 1], cos1 * g4[:, 1],
                    g4[:, 2], cos2 * g4[:, 2],
                    g4[:, 3], cos2 * g4[:, 3],
                ],
                axis=1,
            )
            g_pixels = (self.w.T @ g_env)[self.free].ravel()
        elif self.w is not None:
            g_pixels = (self.w.T @ g4)[self.free].ravel()
        else:
            g_pixels = g4[self.free].ravel()
        g_static = grad_fine[:, 4:].sum(axis=0)
        return np.concatenate([g_pixels, g_static])

    def objective(self):
        """Objective in optimizer coordinates: u -> (goal, dgoal/du)."""

        def fun(u):
            x_nat = self.opt_to_nat(u)
            fine = self.fine_values(x_nat)
            value, grad_fine, _ = pwc_goal_and_grad(
                (self.drift, self.ops), (fine, self.durations), self.problem.goal
            )
            grad_nat = self.pullback(grad_fine)
            if self.bound is not None:
                chain = self.bound * (
                    1.0 / np.cosh(u[: self.n_pixels]) ** 2
                )
                grad_nat[: self.n_pixels] *= chain
            return value, grad_nat

        return fun


def grape_optimize(
    problem: OptimizationProblem,
    init: np.ndarray | None = None,
    seed: int | None = None,
    pure_guess: bool = False,
) -> OptimizationResult:
    """Optimize a staircase ansatz (plain/filtered PWC or two-carrier).

    Args:
        problem: with a PwcSpec or TwoCarrierSpec ansatz.
        init: natural-coordinate start (pixel amplitudes + optimized offsets);
            drawn from the problem's init style when omitted.
        seed: seeds the random/perturbed start; recorded in the result.
        pure_guess: with init_style "guess_perturb", skip the perturbation.

    Returns:
        OptimizationResult in natural coordinates; ``info`` holds the final
        offsets and the ansatz spec.
    """
    if not isinstance(problem.ansatz, (PwcSpec, TwoCarrierSpec)):
        raise TypeError("grape_optimize needs a staircase ansatz")
    mapper = _StaircaseMap(problem)
    if init is None:
        init = make_start(problem, seed if seed is not None else 0, pure_guess)
    x_nat = np.asarray(init, dtype=float)
    expected = mapper.n_pixels + mapper.n_static
    if x_nat.size == mapper.n_pixels and mapper.n_static:
        x_nat = np.concatenate([x_nat, _static_init(problem)])
    if x_nat.size != expected:
        raise ValueError(f"initial vector must have {expected} entries")

    result = lbfgs_minimize(mapper.objective(), mapper.nat_to_opt(x_nat), problem.options)
    x_best = mapper.opt_to_nat(result.x)
    result.x = x_best
    result.seed = seed
    result.info = {
        "f": problem.full_f(x_best[mapper.n_pixels:]),
        "spec": problem.ansatz,
    }
    return result


def _static_init(problem: OptimizationProblem) -> np.ndarray:
    return np.array(
        [problem.f_init[k] for k in range(2) if problem.optimize_f[k]], dtype=float
    )


def make_start(problem: OptimizationProblem, seed: int, pure_guess: bool = False) -> np.ndarray:
    """Build an initial natural-coordinate vector for the problem's ansatz."""
    spec = problem.ansatz
    if problem.init_style == "random":
        pixels = random_init(spec, seed)
    elif problem.init_style == "guess_perturb":
        pixels = _guess_pixels(problem)
        if not pure_guess:
            rng = np.random.default_rng(seed)
            pixels = pixels + rng.uniform(-1, 1, size=pixels.shape) * (
                problem.guess_scale * _guess_amplitude(spec)
            )
        if getattr(spec, "bound", None):
            pixels = np.clip(pixels, -spec.bound * _ATANH_CLIP, spec.bound * _ATANH_CLIP)
    else:
        raise ValueError(f"unknown init style '{problem.init_style}'")
    return np.concatenate([pixels, _static_init(problem)])


def _guess_amplitude(spec) -> float:
    return spec.bound if getattr(spec, "bound", None) else 2.0 * np.pi * 0.4


def _guess_pixels(problem: OptimizationProblem) -> np.ndarray:
    """Cross-resonance Gaussian guess sampled into the ansatz pixel grid."""
    spec = problem.ansatz
    params = problem.hams.params
    if isinstance(spec, PwcSpec):
        guess, _ = initial_guess_cr(
            params, spec.duration, n_slices=spec.n_slices, buffer=spec.buffer
        )
        values = guess.values
        if spec.bound is not None:
            values = np.clip(values, -spec.bound * _ATANH_CLIP, spec.bound * _ATANH_CLIP)
        nb = spec.n_buffer_slices
        return values[nb:spec.n_slices - nb].ravel()
    if isinstance(spec, TwoCarrierSpec):
        guess, _ = initial_guess_cr(
            params, spec.duration, n_slices=spec.n_slices, buffer=spec.buffer
        )
        nb = spec.n_buffer_slices
        env = np.zeros((spec.n_free_slices, 8))
        free = guess.values[nb:spec.n_slices - nb]
        env[:, 4] = np.clip(free[:, 2], -spec.bound * _ATANH_CLIP, spec.bound * _ATANH_CLIP)
        env[:, 6] = np.clip(free[:, 3], -spec.bound * _ATANH_CLIP, spec.bound * _ATANH_CLIP)
        return env.ravel()
    if isinstance(spec, FourierSpec):
        return random_init(spec, 0)
    raise TypeError(f"no guess for {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Analytic-ansatz (coupled-EOM) optimization
# ---------------------------------------------------------------------------


class _StaticExtendedControls:
    """Fourier controls plus constant channels for the optimized offsets."""

    def __init__(self, ansatz: FourierAnsatz, static_values: np.ndarray):
        self.ansatz = ansatz
        self.static = np.asarray(static_values, dtype=float)
        self.n_params = ansatz.n_params + self.static.size

    def amplitudes(self, t):
        return np.concatenate([self.ansatz.amplitudes(t), self.static])

    def amplitude_grads(self, t):
        base = self.ansatz.amplitude_grads(t)
        n_s = self.static.size
        out = np.zeros((base.shape[0] + n_s, self.n_params))
        out[: base.shape[0], : base.shape[1]] = base
        out[base.shape[0]:, base.shape[1]:] = np.eye(n_s)
        return out


def _goat_setup(problem: OptimizationProblem):
    ops = [np.asarray(op) for op in problem.hams.controls]
    drift = problem.hams.drift.copy()
    for k in range(2):
        if not problem.optimize_f[k]:
            drift = drift + problem.f_init[k] * problem.hams.number_ops[k]
        else:
            ops.append(np.asarray(problem.hams.number_ops[k]))
    return drift, np.stack(ops)


def goat_optimize(
    problem: OptimizationProblem,
    init: FourierAnsatz | np.ndarray | None = None,
    seed: int | None = None,
) -> OptimizationResult:
    """Optimize an analytic (Fourier) ansatz via the coupled-EOM gradients.

    Args:
        problem: with a FourierSpec ansatz (the spec sets window defaults and
            the bound; an explicit FourierAnsatz ``init`` may carry a
            different, e.g. pruned, component layout).
        init: FourierAnsatz, flat parameter vector, or None for a random
            start by seed.
        seed: seeds the random start; recorded in the result.

    Returns:
        OptimizationResult; ``info['ansatz']`` holds the optimized ansatz.
    """
    spec = problem.ansatz
    if isinstance(init, FourierAnsatz):
        template = init
        x_pulse = init.params
    else:
        if not isinstance(spec, FourierSpec):
            raise TypeError("goat_optimize needs a FourierSpec or explicit ansatz")
        x_pulse = (
            np.asarray(init, dtype=float)
            if init is not None
            else random_init(spec, seed if seed is not None else 0)
        )
        template = spec.make_ansatz(x_pulse)

    drift, ops = _goat_setup(problem)
    n_pulse = template.n_params
    opts = problem.options

    def fun(x):
        ansatz = template.with_params(x[:n_pulse])
        controls = _StaticExtendedControls(ansatz, x[n_pulse:])
        prop = goat_propagate(
            (drift, ops),
            controls,
            problem.duration,
            rtol=opts.goat_rtol,
            atol=opts.goat_atol,
            enforce_unitarity=False,
        )
        res = infidelity(prop, problem.goal)
        return res.value, res.grad

    x0 = np.concatenate([x_pulse, _static_init(problem)])
    result = lbfgs_minimize(fun, x0, opts)
    result.seed = seed
    result.info = {
        "f": problem.full_f(result.x[n_pulse:]),
        "ansatz": template.with_params(result.x[:n_pulse]),
        "spec": spec,
    }
    return result


def prune_fourier(
    problem: OptimizationProblem,
    result: OptimizationResult,
    min_components: int = 1,
) -> list[OptimizationResult]:
    """Iteratively drop the smallest-amplitude Fourier component and reoptimize.

    Ties in |A| are broken toward the lower frequency.  The loop stops when a
    reoptimization fails to converge (or reach the target), or when only
    ``min_components`` would remain; every reoptimization result is returned,
    the terminating one last.
    """
    sequence: list[OptimizationResult] = []
    current = result
    while True:
        ansatz: FourierAnsatz = current.info["ansatz"]
        total = sum(ansatz.counts)
        if total <= min_components:
            break
        candidates = [
            (abs(c[j, 0]), c[j, 1], k, j)
            for k, c in enumerate(ansatz.components)
            for j in range(c.shape[0])
        ]
        _, _, k, j = min(candidates)
        pruned = ansatz.drop_component(k, j)
        reopt = goat_optimize(problem, init=pruned, seed=current.seed)
        sequence.append(reopt)
        if reopt.status not in _FINISHED:
            break
        current = reopt
    return sequence


# ---------------------------------------------------------------------------
# Multi-start orchestration
# ---------------------------------------------------------------------------


@dataclass
class MultistartOutcome:
    best: OptimizationResult
    results: list[OptimizationResult]


def _run_restart(problem: OptimizationProblem, seed: int, pure_guess: bool):
    if isinstance(problem.ansatz, FourierSpec):
        return goat_optimize(problem, seed=seed)
    return grape_optimize(problem, seed=seed, pure_guess=pure_guess)


def multistart(
    problem: OptimizationProblem,
    n_restarts: int,
    base_seed: int = 0,
    stop_at: float | None = None,
    n_workers: int = 1,
) -> MultistartOutcome:
    """Run independent restarts with seeds base_seed .. base_seed+n-1.

    Args:
        problem: optimization problem (its init_style shapes the starts; with
            "guess_perturb" the first restart uses the unperturbed guess).
        n_restarts: number of restarts, >= 1.
        base_seed: first seed.
        stop_at: optional early-exit threshold on the best infidelity; further
            restarts are skipped once some run reaches it (sequential mode).
        n_workers: process count; parallel mode runs all restarts.

    Returns:
        MultistartOutcome with the best result and the full list (individual
        failures are recorded with status "error"; raises only if all fail).
    """
    if n_restarts < 1:
        raise ValueError("need at least one restart")
    seeds = [base_seed + i for i in range(n_restarts)]
    results: list[OptimizationResult] = []

    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(_run_restart, problem, seed, i == 0)
                for i, seed in enumerate(seeds)
            ]
            for seed, fut in zip(seeds, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    results.append(_error_result(seed, exc))
    else:
        for i, seed in enumerate(seeds):
            try:
                res = _run_restart(problem, seed, i == 0)
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                res = _error_result(seed, exc)
            results.append(res)
            if stop_at is not None and res.status != STATUS_ERROR and res.value <= stop_at:
                break

    ok = [r for r in results if r.status != STATUS_ERROR]
    if not ok:
        raise RuntimeError("every restart failed; first error: "
                           f"{results[0].info.get('error')}")
    best = min(ok, key=lambda r: r.value)
    return MultistartOutcome(best=best, results=results)


def _error_result(seed: int, exc: Exception) -> OptimizationResult:
    return OptimizationResult(
        x=np.zeros(0),
        value=np.inf,
        trace=np.zeros(0),
        grad_norm=np.inf,
        status=STATUS_ERROR,
        n_iterations=0,
        n_evaluations=0,
        seed=seed,
        info={"error": repr(exc)},
    )
