"""Model-based inversion of the forward compressor.

Each compressed sample is inverted by resolving which regime (below or
above the linear threshold) and which smoother branches produced it,
root-finding the characteristic function of the candidate envelope in the
above-threshold case, and re-deriving the pre-compression sample from the
recovered gain. Two scalar root finders are provided: plain
Newton-Raphson and a damped least-squares hybrid that falls back from the
Newton step to a gradient-scaled step when the squared residual fails to
decrease.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from numba import njit

from .compressor import CompressorState, _comp_factor, _env_step, _gain_step, _branch_coefficients
from .core import AudioClip, DrcParams

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100
V_FLOOR = 1e-12  # keeps v**(-S) finite; the characteristic function is singular at 0
_THRESHOLD_MARGIN = 1e-9  # relative offset keeping the above-threshold form valid at v_init
_DERIV_TINY = 1e-300

STATUS_BELOW = 0
STATUS_ABOVE = 1
STATUS_DEGENERATE = 2


class SolverKind(Enum):
    NEWTON_RAPHSON = "newton"
    HYBRID_LEAST_SQUARES = "hybrid"

    @classmethod
    def coerce(cls, value) -> "SolverKind":
        if isinstance(value, cls):
            return value
        return cls(str(value))


class NoConvergence(ArithmeticError):
    """Root finder ran out of iterations or slope; carries the best iterate."""

    def __init__(self, best_v: float, best_residual: float, iterations: int):
        self.best_v = best_v
        self.best_residual = best_residual
        self.iterations = iterations
        super().__init__(
            f"no root after {iterations} iterations; best v={best_v:.6e} "
            f"residual={best_residual:.3e}"
        )


@dataclass(frozen=True)
class RootResult:
    root: float
    residual: float
    iterations: int


@njit(cache=True, nogil=True)
def _charf(v, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma):
    a = gamma * kappa * v ** (-S) + (1.0 - gamma) * g_prev
    if p == 1:
        return a * (v - (1.0 - beta) * v_prev) - beta * y_abs
    return a * a * (v * v - (1.0 - beta) * v_prev * v_prev) - beta * y_abs * y_abs


@njit(cache=True, nogil=True)
def _charf_deriv(v, v_prev, g_prev, p, S, kappa, beta, gamma):
    a = gamma * kappa * v ** (-S) + (1.0 - gamma) * g_prev
    a_d = -S * gamma * kappa * v ** (-S - 1.0)
    if p == 1:
        return a_d * (v - (1.0 - beta) * v_prev) + a
    b = v * v - (1.0 - beta) * v_prev * v_prev
    return 2.0 * a * (a_d * b + a * v)


@njit(cache=True, nogil=True)
def _newton_charf(v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter):
    v = v_init if v_init > V_FLOOR else V_FLOOR
    r = _charf(v, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma)
    if abs(r) <= tol:
        return v, r, 0, True
    best_v = v
    best_r = r
    it = 0
    while it < max_iter:
        d = _charf_deriv(v, v_prev, g_prev, p, S, kappa, beta, gamma)
        if abs(d) < _DERIV_TINY:
            break
        v = v - r / d
        if v < V_FLOOR:
            v = V_FLOOR
        it += 1
        r = _charf(v, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma)
        if abs(r) < abs(best_r):
            best_v = v
            best_r = r
        if abs(r) <= tol:
            return v, r, it, True
    return best_v, best_r, it, False


@njit(cache=True, nogil=True)
def _hybrid_charf(v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter):
    v = v_init if v_init > V_FLOOR else V_FLOOR
    fv = _charf(v, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma)
    if abs(fv) <= tol:
        return v, fv, 0, True
    it = 0
    while it < max_iter:
        d = _charf_deriv(v, v_prev, g_prev, p, S, kappa, beta, gamma)
        if abs(d) < _DERIV_TINY:
            break
        it += 1
        # full Newton step first; keep it whenever it reduces the residual
        vn = v - fv / d
        if vn < V_FLOOR:
            vn = V_FLOOR
        fn = _charf(vn, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma)
        if abs(fn) < abs(fv):
            v = vn
            fv = fn
        else:
            # damp toward a scaled descent step on the squared residual
            lam = 1e-3 * d * d
            if lam < _DERIV_TINY:
                lam = _DERIV_TINY
            accepted = False
            for _ in range(64):
                vt = v - (d * fv) / (d * d + lam)
                if vt < V_FLOOR:
                    vt = V_FLOOR
                if vt == v:
                    break  # clamped in place, no progress possible
                ft = _charf(vt, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma)
                if abs(ft) < abs(fv):
                    v = vt
                    fv = ft
                    accepted = True
                    break
                lam *= 10.0
            if not accepted:
                break
        if abs(fv) <= tol:
            return v, fv, it, True
    return v, fv, it, False


@njit(cache=True, nogil=True)
def _solve_charf(solver_id, v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter):
    if solver_id == 0:
        return _newton_charf(v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter)
    return _hybrid_charf(v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter)


@njit(cache=True, nogil=True)
def _invert_sample_impl(
    y, v_prev, g_prev, p, l, S, kappa,
    beta_att, beta_rel, gamma_att, gamma_rel,
    solver_id, tol, max_iter,
):
    """Invert one sample; returns (x, v, g, status, ambiguous, iterations, residual)."""
    if y == 0.0:
        v_new, _ = _env_step(0.0, v_prev, p, beta_att, beta_rel)
        f = _comp_factor(v_new, l, S)
        g_new, _ = _gain_step(f, g_prev, gamma_att, gamma_rel)
        return 0.0, v_new, g_new, STATUS_BELOW, False, 0, 0.0

    y_abs = abs(y)

    # Below-threshold hypothesis: f = 1, so both branch choices are forced
    # (gamma by g_prev < 1, beta by the recovered magnitude) and acceptance
    # reduces to the envelope staying at or under the threshold.
    gamma_b = gamma_att if g_prev < 1.0 else gamma_rel
    g_below = gamma_b + (1.0 - gamma_b) * g_prev
    if g_below > 1.0:
        g_below = 1.0
    x_abs_below = y_abs / g_below
    v_below, _ = _env_step(x_abs_below, v_prev, p, beta_att, beta_rel)
    if v_below <= l:
        return y / g_below, v_below, g_below, STATUS_BELOW, False, 0, 0.0

    # Above-threshold hypothesis: root-find the characteristic function for
    # each branch pair, keep self-consistent candidates, pick the smallest
    # residual (ties fall to the earlier pair in attack-first order).
    v_init = l * (1.0 + _THRESHOLD_MARGIN)
    if v_prev > v_init:
        v_init = v_prev
    total_iters = 0
    n_consistent = 0
    found = False
    best_res = 0.0
    best_v = 0.0
    best_gamma = 0.0
    for bi in range(2):
        beta = beta_att if bi == 0 else beta_rel
        for gi in range(2):
            gamma = gamma_att if gi == 0 else gamma_rel
            v0, res, iters, ok = _solve_charf(
                solver_id, v_init, v_prev, g_prev, y_abs, p, S, kappa, beta, gamma, tol, max_iter
            )
            total_iters += iters
            if not ok or v0 <= l:
                continue
            if p == 1:
                radicand = (v0 - (1.0 - beta) * v_prev) / beta
            else:
                radicand = (v0 * v0 - (1.0 - beta) * v_prev * v_prev) / beta
            if radicand < 0.0:
                continue
            x_abs = radicand if p == 1 else math.sqrt(radicand)
            if (x_abs > v_prev) != (bi == 0):
                continue
            f0 = kappa * v0 ** (-S)
            if (f0 > g_prev) != (gi == 0):
                continue
            n_consistent += 1
            ares = abs(res)
            if not found or ares < best_res:
                found = True
                best_res = ares
                best_v = v0
                best_gamma = gamma
    if found:
        f0 = kappa * best_v ** (-S)
        g_new = best_gamma * f0 + (1.0 - best_gamma) * g_prev
        return y / g_new, best_v, g_new, STATUS_ABOVE, n_consistent > 1, total_iters, best_res

    # No consistent hypothesis: recover with the held gain and advance the
    # state through the forward model so later samples stay plausible.
    x = y / g_prev
    v_new, _ = _env_step(abs(x), v_prev, p, beta_att, beta_rel)
    f = _comp_factor(v_new, l, S)
    g_new, _ = _gain_step(f, g_prev, gamma_att, gamma_rel)
    return x, v_new, g_new, STATUS_DEGENERATE, False, total_iters, 0.0


@njit(cache=True, nogil=True)
def _invert_kernel(
    y, p, l, S, kappa,
    beta_att, beta_rel, gamma_att, gamma_rel,
    solver_id, tol, max_iter,
):
    n = y.shape[0]
    x = np.empty(n)
    v_tr = np.empty(n)
    g_tr = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    ambig = np.zeros(n, dtype=np.bool_)
    iters = np.zeros(n, dtype=np.int64)
    resid = np.zeros(n)
    v = 0.0
    g = 1.0
    for i in range(n):
        xi, v, g, st, am, it, rs = _invert_sample_impl(
            y[i], v, g, p, l, S, kappa,
            beta_att, beta_rel, gamma_att, gamma_rel,
            solver_id, tol, max_iter,
        )
        x[i] = xi
        v_tr[i] = v
        g_tr[i] = g
        status[i] = st
        ambig[i] = am
        iters[i] = it
        resid[i] = rs
    return x, v_tr, g_tr, status, ambig, iters, resid


def characteristic_fn(
    v: float,
    v_prev: float,
    g_prev: float,
    y_abs: float,
    params: DrcParams,
    beta: float,
    gamma: float,
) -> float:
    """Above-threshold characteristic residual at candidate envelope v.

    Zero exactly when v, the previous state and the observed |y| are
    consistent with the forward recursions under the given branch
    coefficients.
    """
    if v <= 0:
        raise ValueError("candidate envelope must be > 0")
    return _charf(
        v, v_prev, g_prev, y_abs,
        int(params.detector), params.slope_exponent, params.gain_scale, beta, gamma,
    )


def characteristic_derivative(
    v: float,
    v_prev: float,
    g_prev: float,
    params: DrcParams,
    beta: float,
    gamma: float,
) -> float:
    """Analytic derivative of characteristic_fn with respect to v."""
    if v <= 0:
        raise ValueError("candidate envelope must be > 0")
    return _charf_deriv(
        v, v_prev, g_prev,
        int(params.detector), params.slope_exponent, params.gain_scale, beta, gamma,
    )


def solve_newton(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    v_init: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RootResult:
    """Newton-Raphson on a scalar residual, iterates clamped to v >= V_FLOOR.

    Raises NoConvergence (carrying the best iterate) when the iteration
    budget is exhausted or the slope underflows.
    """
    if v_init <= 0:
        raise ValueError("v_init must be > 0")
    v = max(v_init, V_FLOOR)
    r = f(v)
    if abs(r) <= tol:
        return RootResult(v, r, 0)
    best_v, best_r = v, r
    it = 0
    while it < max_iter:
        d = fprime(v)
        if abs(d) < _DERIV_TINY:
            raise NoConvergence(best_v, best_r, it)
        v = v - r / d
        if v < V_FLOOR:
            v = V_FLOOR
        it += 1
        r = f(v)
        if abs(r) < abs(best_r):
            best_v, best_r = v, r
        if abs(r) <= tol:
            return RootResult(v, r, it)
    raise NoConvergence(best_v, best_r, it)


def solve_hybrid(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    v_init: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RootResult:
    """Damped least-squares root finder on a scalar residual.

    Tries the full Newton step first and keeps it whenever |f| decreases;
    otherwise interpolates toward a scaled descent step on f**2 by growing
    a damping term until the residual drops. Same contract as solve_newton.
    """
    if v_init <= 0:
        raise ValueError("v_init must be > 0")
    v = max(v_init, V_FLOOR)
    fv = f(v)
    if abs(fv) <= tol:
        return RootResult(v, fv, 0)
    it = 0
    while it < max_iter:
        d = fprime(v)
        if abs(d) < _DERIV_TINY:
            raise NoConvergence(v, fv, it)
        it += 1
        vn = v - fv / d
        if vn < V_FLOOR:
            vn = V_FLOOR
        fn = f(vn)
        if abs(fn) < abs(fv):
            v, fv = vn, fn
        else:
            lam = max(1e-3 * d * d, _DERIV_TINY)
            accepted = False
            for _ in range(64):
                vt = v - (d * fv) / (d * d + lam)
                if vt < V_FLOOR:
                    vt = V_FLOOR
                if vt == v:
                    break
                ft = f(vt)
                if abs(ft) < abs(fv):
                    v, fv = vt, ft
                    accepted = True
                    break
                lam *= 10.0
            if not accepted:
                raise NoConvergence(v, fv, it)
        if abs(fv) <= tol:
            return RootResult(v, fv, it)
    raise NoConvergence(v, fv, it)


@dataclass(frozen=True)
class SampleInversion:
    """Outcome of inverting one sample."""

    status: int  # STATUS_BELOW, STATUS_ABOVE or STATUS_DEGENERATE
    ambiguous: bool
    iterations: int
    residual: float

    @property
    def degenerate(self) -> bool:
        return self.status == STATUS_DEGENERATE


@dataclass
class InversionDiagnostics:
    """Aggregate health report of a clip inversion."""

    degenerate_count: int
    max_residual: float
    branch_ambiguity_count: int
    solver_iterations_total: int
    samples: int
    # populated when invert(..., record_state=True); not serialized
    envelope: Optional[np.ndarray] = None
    gain: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    status: Optional[np.ndarray] = None
    _residual_sum: float = 0.0

    @property
    def degenerate_rate(self) -> float:
        return self.degenerate_count / self.samples if self.samples else 0.0

    @property
    def mean_residual(self) -> float:
        return self._residual_sum / self.samples if self.samples else 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "degenerate_count": self.degenerate_count,
                "max_residual": self.max_residual,
                "branch_ambiguity_count": self.branch_ambiguity_count,
                "solver_iterations_total": self.solver_iterations_total,
                "samples": self.samples,
            },
            indent=2,
        )

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


def _solver_id(solver) -> int:
    return 0 if SolverKind.coerce(solver) is SolverKind.NEWTON_RAPHSON else 1


def invert_sample(
    y_n: float,
    state: CompressorState,
    params: DrcParams,
    fs: float,
    solver=SolverKind.HYBRID_LEAST_SQUARES,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[float, CompressorState, SampleInversion]:
    """Invert a single sample given the carried (envelope, gain) state."""
    bva, bvr, gga, ggr = _branch_coefficients(params, fs)
    x, v, g, status, ambiguous, iterations, residual = _invert_sample_impl(
        float(y_n), state.v_prev, state.g_prev,
        int(params.detector), params.linear_threshold, params.slope_exponent, params.gain_scale,
        bva, bvr, gga, ggr,
        _solver_id(solver), tol, max_iter,
    )
    return x, CompressorState(v, g), SampleInversion(int(status), bool(ambiguous), int(iterations), float(residual))


def invert(
    y: AudioClip,
    params: DrcParams,
    solver=SolverKind.HYBRID_LEAST_SQUARES,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record_state: bool = False,
) -> tuple[AudioClip, InversionDiagnostics]:
    """Reconstruct the pre-compression clip from y and its exact parameters.

    Degenerate samples (no self-consistent hypothesis) are recovered with
    the held gain and counted rather than raised.
    """
    fs = y.sample_rate_hz
    bva, bvr, gga, ggr = _branch_coefficients(params, fs)
    x, v, g, status, ambig, iters, resid = _invert_kernel(
        y.samples,
        int(params.detector), params.linear_threshold, params.slope_exponent, params.gain_scale,
        bva, bvr, gga, ggr,
        _solver_id(solver), tol, max_iter,
    )
    diag = InversionDiagnostics(
        degenerate_count=int(np.count_nonzero(status == STATUS_DEGENERATE)),
        max_residual=float(resid.max()) if resid.size else 0.0,
        branch_ambiguity_count=int(np.count_nonzero(ambig)),
        solver_iterations_total=int(iters.sum()),
        samples=int(y.samples.size),
        _residual_sum=float(resid.sum()),
    )
    if record_state:
        diag.envelope = v
        diag.gain = g
        diag.residuals = resid
        diag.status = status
    return AudioClip(x, fs), diag
