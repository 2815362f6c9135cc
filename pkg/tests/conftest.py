from __future__ import annotations

import numpy as np
import pytest

from drckit import AudioClip


def desk_clip(seed: int, fs: int = 44100, secs: float = 1.0) -> AudioClip:
    """Music-like test signal: mixed sines under a stepped level envelope
    plus a few noise bursts, peak-normalized to 0.95."""
    rng = np.random.default_rng(seed)
    n = int(secs * fs)
    t = np.arange(n) / fs
    x = np.zeros(n)
    for _ in range(int(rng.integers(2, 5))):
        freq = rng.uniform(80.0, 4000.0)
        amp = rng.uniform(0.1, 0.5)
        x += amp * np.sin(2 * np.pi * freq * t + rng.uniform(0.0, 2 * np.pi))
    seg = max(1, n // 8)
    env = np.ones(n)
    for k in range(0, n, seg):
        env[k : k + seg] = rng.uniform(0.05, 1.0)
    x *= env
    for _ in range(3):
        start = int(rng.uniform(0, max(1, n - n // 10)))
        dur = int(rng.uniform(n // 50, n // 10))
        x[start : start + dur] += rng.normal(0.0, 0.2, size=min(dur, n - start))
    return AudioClip(0.95 * x / np.max(np.abs(x)), fs)


@pytest.fixture(scope="session")
def make_clip():
    return desk_clip


@pytest.fixture(scope="session")
def desk_corpus():
    """Twenty seeded 1 s clips at 44.1 kHz."""
    return [desk_clip(seed) for seed in range(20)]


@pytest.fixture(scope="session")
def desk_corpus_16k():
    """Twenty seeded 1 s clips at 16 kHz for the heavier sweeps."""
    return [desk_clip(seed, fs=16000) for seed in range(20)]
