"""Reconstruction-quality metrics: sample MSE, log-mel spectral distance, SI-SDR."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.signal import get_window

from .core import AudioClip

SI_SDR_CAP_DB = 200.0
_RMS_SILENCE = 1e-12


class SilentClip(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class RateMismatch(ValueError):
    pass


class ZeroReference(ValueError):
    pass


class ClipTooShort(ValueError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    """Analysis settings for the spectral metrics."""

    fft_size: int = 2048
    hop_size: int = 512
    window: str = "hann"
    n_mels: int = 128
    fmin: float = 0.0
    fmax: Optional[float] = None  # None = Nyquist of the analyzed clip
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.hop_size <= self.fft_size:
            raise ValueError(f"hop_size must be in (0, fft_size], got {self.hop_size}")
        if self.window != "hann":
            raise ValueError("only the Hann window is supported")
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.fmin < 0 or (self.fmax is not None and self.fmin >= self.fmax):
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin}, fmax={self.fmax}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be > 0")


@dataclass(frozen=True)
class MetricReport:
    mse: float
    mel_l2: float
    si_sdr_db: float

    def to_json(self) -> str:
        sdr = self.si_sdr_db
        return json.dumps(
            {
                "mse": self.mse,
                "mel_l2": self.mel_l2,
                "si_sdr_db": "-inf" if math.isinf(sdr) and sdr < 0 else sdr,
            },
            indent=2,
        )

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")


def _check_pair(a: AudioClip, b: AudioClip) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"clip lengths differ: {len(a)} vs {len(b)}")
    if a.sample_rate_hz != b.sample_rate_hz:
        raise RateMismatch(f"sample rates differ: {a.sample_rate_hz} vs {b.sample_rate_hz}")


def rms_normalize(clip: AudioClip) -> AudioClip:
    """Scale the clip to unit RMS."""
    r = clip.rms()
    if r < _RMS_SILENCE:
        raise SilentClip(f"clip RMS {r:.3e} below {_RMS_SILENCE:.0e}")
    return AudioClip(clip.samples / r, clip.sample_rate_hz)


def mse(x_hat: AudioClip, x: AudioClip) -> float:
    """Mean squared sample error between two equal-length clips."""
    _check_pair(x_hat, x)
    d = x_hat.samples - x.samples
    return float(np.mean(np.square(d)))


def si_sdr(x_hat: AudioClip, x: AudioClip) -> float:
    """Scale-invariant signal-to-distortion ratio of x_hat against reference x, in dB.

    The estimate is projected onto the reference (s = alpha * x with
    alpha = <x_hat, x> / <x, x>) before the energy ratio. Perfect
    reconstructions cap at +200 dB; an estimate orthogonal to the
    reference yields -inf.
    """
    _check_pair(x_hat, x)
    ref = x.samples
    est = x_hat.samples
    denom = float(np.dot(ref, ref))
    if denom <= 0.0:
        raise ZeroReference("reference clip is all zero")
    alpha = float(np.dot(est, ref)) / denom
    if alpha == 0.0:
        return float("-inf")
    target = alpha * ref
    target_norm = float(np.linalg.norm(target))
    resid_norm = float(np.linalg.norm(est - target))
    if resid_norm < 1e-20 * target_norm:
        return SI_SDR_CAP_DB
    value = 10.0 * math.log10((target_norm / resid_norm) ** 2)
    return min(value, SI_SDR_CAP_DB)


def stft_magnitude(clip: AudioClip, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Hann-windowed magnitude spectrogram, shape (fft_size/2 + 1, n_frames).

    Frames are centered via reflection padding; n_frames = ceil(N / hop).
    """
    x = clip.samples
    n = x.size
    if n < cfg.fft_size:
        raise ClipTooShort(f"need at least fft_size={cfg.fft_size} samples, got {n}")
    pad = cfg.fft_size // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = -(-n // cfg.hop_size)
    window = get_window("hann", cfg.fft_size, fftbins=True)
    starts = cfg.hop_size * np.arange(n_frames)
    idx = starts[:, None] + np.arange(cfg.fft_size)[None, :]
    frames = xp[idx] * window
    return np.abs(np.fft.rfft(frames, axis=1)).T


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def _filterbank_cached(fft_size: int, n_mels: int, fmin: float, fmax: float, sr: int) -> np.ndarray:
    n_freqs = fft_size // 2 + 1
    freqs = np.linspace(0.0, sr / 2.0, n_freqs)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    f_pts = _mel_to_hz(mel_pts)
    lower = (freqs[None, :] - f_pts[:-2, None]) / (f_pts[1:-1] - f_pts[:-2])[:, None]
    upper = (f_pts[2:, None] - freqs[None, :]) / (f_pts[2:] - f_pts[1:-1])[:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    # area normalization: scale each triangle by 2 / its width in Hz
    weights *= (2.0 / (f_pts[2:] - f_pts[:-2]))[:, None]
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: SpectralConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank matrix, shape (n_mels, fft_size/2 + 1)."""
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate / 2.0
    if cfg.fmin >= fmax:
        raise ValueError(f"need fmin < fmax, got fmin={cfg.fmin}, fmax={fmax}")
    return _filterbank_cached(cfg.fft_size, cfg.n_mels, float(cfg.fmin), float(fmax), int(sample_rate))


def _log_mel(clip: AudioClip, cfg: SpectralConfig) -> np.ndarray:
    fb = mel_filterbank(cfg, clip.sample_rate_hz)
    return np.log(fb @ stft_magnitude(clip, cfg) + cfg.log_floor)


def mel_l2(x_hat: AudioClip, x: AudioClip, cfg: SpectralConfig = SpectralConfig()) -> float:
    """Euclidean norm of the log-magnitude mel-spectrogram difference."""
    _check_pair(x_hat, x)
    return float(np.linalg.norm(_log_mel(x_hat, cfg) - _log_mel(x, cfg)))


def evaluate(x_hat: AudioClip, x: AudioClip, cfg: SpectralConfig = SpectralConfig()) -> MetricReport:
    """RMS-normalize both clips, then compute all three metrics on the pair."""
    _check_pair(x_hat, x)
    xh = rms_normalize(x_hat)
    xr = rms_normalize(x)
    return MetricReport(
        mse=mse(xh, xr),
        mel_l2=mel_l2(xh, xr, cfg),
        si_sdr_db=si_sdr(xh, xr),
    )
