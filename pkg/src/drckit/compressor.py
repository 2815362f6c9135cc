"""Sample-accurate forward dynamic range compressor.

The gain chain per sample: a branch-smoothed detection envelope of |x|,
a static compression factor above the linear threshold, and a
branch-smoothed gain applied multiplicatively to the input. All state
recursions run in double precision regardless of input format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .core import AudioClip, DrcParams

ATTACK = "attack"
RELEASE = "release"


class NonPositiveInput(ValueError):
    pass


def smoothing_coefficient(tau_s: float, fs: float) -> float:
    """One-pole smoothing coefficient 1 - exp(-2.2 / (fs * tau)) in (0, 1)."""
    if tau_s <= 0 or fs <= 0:
        raise NonPositiveInput(f"tau_s and fs must be > 0, got tau_s={tau_s}, fs={fs}")
    return 1.0 - math.exp(-2.2 / (fs * tau_s))


@dataclass(frozen=True)
class CompressorState:
    """Previous-sample envelope and gain carried through the recursion."""

    v_prev: float = 0.0
    g_prev: float = 1.0

    def __post_init__(self):
        if self.v_prev < 0:
            raise ValueError(f"v_prev must be >= 0, got {self.v_prev}")
        if not 0 < self.g_prev <= 1:
            raise ValueError(f"g_prev must be in (0, 1], got {self.g_prev}")


@dataclass(frozen=True)
class CompressorTrace:
    """Per-sample internals of a forward pass.

    ``beta_branch`` / ``gamma_branch`` are boolean arrays, True where the
    envelope / gain smoother took its attack branch.
    """

    v: np.ndarray
    f: np.ndarray
    g: np.ndarray
    beta_branch: np.ndarray
    gamma_branch: np.ndarray

    def __len__(self) -> int:
        return self.v.size

    def write_csv(self, path) -> None:
        """Write `n,v,f,g,beta_branch,gamma_branch` rows, 13 significant digits."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("n,v,f,g,beta_branch,gamma_branch\n")
            for n in range(self.v.size):
                fh.write(
                    "%d,%.12e,%.12e,%.12e,%s,%s\n"
                    % (
                        n,
                        self.v[n],
                        self.f[n],
                        self.g[n],
                        ATTACK if self.beta_branch[n] else RELEASE,
                        ATTACK if self.gamma_branch[n] else RELEASE,
                    )
                )


@njit(cache=True, nogil=True)
def _env_step(x_abs, v_prev, p, beta_att, beta_rel):
    """One envelope update; returns (v, took_attack)."""
    attack = x_abs > v_prev
    beta = beta_att if attack else beta_rel
    if p == 1:
        v = beta * x_abs + (1.0 - beta) * v_prev
    else:
        v = math.sqrt(beta * x_abs * x_abs + (1.0 - beta) * v_prev * v_prev)
    return v, attack


@njit(cache=True, nogil=True)
def _comp_factor(v, l, S):
    if v > l:
        return (l / v) ** S
    return 1.0


@njit(cache=True, nogil=True)
def _gain_step(f, g_prev, gamma_att, gamma_rel):
    """One gain-smoother update; returns (g, took_attack)."""
    attack = f > g_prev
    gamma = gamma_att if attack else gamma_rel
    g = gamma * f + (1.0 - gamma) * g_prev
    if g > 1.0:
        g = 1.0  # the convex combination can round one ulp above 1 when f = g_prev = 1
    return g, attack


@njit(cache=True, nogil=True)
def _compress_kernel(x, p, l, S, beta_att, beta_rel, gamma_att, gamma_rel):
    n = x.shape[0]
    y = np.empty(n)
    v_tr = np.empty(n)
    f_tr = np.empty(n)
    g_tr = np.empty(n)
    b_br = np.zeros(n, dtype=np.bool_)
    g_br = np.zeros(n, dtype=np.bool_)
    v = 0.0
    g = 1.0
    for i in range(n):
        v, b_att = _env_step(abs(x[i]), v, p, beta_att, beta_rel)
        f = _comp_factor(v, l, S)
        g, g_att = _gain_step(f, g, gamma_att, gamma_rel)
        y[i] = x[i] * g
        v_tr[i] = v
        f_tr[i] = f
        g_tr[i] = g
        b_br[i] = b_att
        g_br[i] = g_att
    return y, v_tr, f_tr, g_tr, b_br, g_br


def _branch_coefficients(params: DrcParams, fs: float):
    return (
        smoothing_coefficient(params.tau_v_att_s, fs),
        smoothing_coefficient(params.tau_v_rel_s, fs),
        smoothing_coefficient(params.tau_g_att_s, fs),
        smoothing_coefficient(params.tau_g_rel_s, fs),
    )


def envelope_step(x_abs: float, v_prev: float, params: DrcParams, fs: float):
    """Advance the detection envelope by one sample.

    Returns (v, branch) where branch is "attack" iff x_abs > v_prev.
    """
    if x_abs < 0 or v_prev < 0:
        raise ValueError("x_abs and v_prev must be >= 0")
    beta_att, beta_rel, _, _ = _branch_coefficients(params, fs)
    v, attack = _env_step(x_abs, v_prev, int(params.detector), beta_att, beta_rel)
    return v, ATTACK if attack else RELEASE


def compression_factor(v: float, params: DrcParams) -> float:
    """Static gain curve: (l/v)^(1 - 1/R) above the linear threshold, else 1."""
    if v < 0:
        raise ValueError("envelope must be >= 0")
    return _comp_factor(v, params.linear_threshold, params.slope_exponent)


def gain_step(f: float, g_prev: float, params: DrcParams, fs: float):
    """Advance the smoothed gain by one sample.

    Returns (g, branch) where branch is "attack" iff f > g_prev.
    """
    _, _, gamma_att, gamma_rel = _branch_coefficients(params, fs)
    g, attack = _gain_step(f, g_prev, gamma_att, gamma_rel)
    return g, ATTACK if attack else RELEASE


def compress(
    x: AudioClip, params: DrcParams, with_trace: bool = False
) -> tuple[AudioClip, Optional[CompressorTrace]]:
    """Apply the compressor to a clip; initial state is v=0, g=1.

    Returns the compressed clip and, when requested, the full per-sample
    trace of envelope, compression factor, gain and branch decisions.
    """
    fs = x.sample_rate_hz
    bva, bvr, gga, ggr = _branch_coefficients(params, fs)
    y, v, f, g, bb, gb = _compress_kernel(
        x.samples,
        int(params.detector),
        params.linear_threshold,
        params.slope_exponent,
        bva,
        bvr,
        gga,
        ggr,
    )
    clip = AudioClip(y, fs)
    if not with_trace:
        return clip, None
    return clip, CompressorTrace(v=v, f=f, g=g, beta_branch=bb, gamma_branch=gb)
