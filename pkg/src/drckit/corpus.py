"""Audio ingestion, gated chunking, dataset construction and noise augmentation."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.io.wavfile import WavFileWarning

from .compressor import compress
from .core import AudioClip, ProfileCatalog
from .metrics import SilentClip

log = logging.getLogger(__name__)


_SILENCE_POWER = 1e-24


class UnsupportedFormat(ValueError):
    pass


class CorruptFile(ValueError):
    pass


_PCM_SCALES = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def read_audio(path) -> AudioClip:
    """Read a WAV file as a mono float64 clip scaled to [-1, 1].

    Multichannel audio is downmixed by the arithmetic channel mean.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if len(magic) < 4:
        raise CorruptFile(f"{path}: file too short to be a WAV container")
    if magic not in (b"RIFF", b"RIFX"):
        raise UnsupportedFormat(f"{path}: not a RIFF/WAV file")
    try:
        with warnings.catch_warnings():
            # scipy downgrades premature EOF to a warning; treat it as corrupt
            warnings.simplefilter("error", WavFileWarning)
            rate, data = wavfile.read(str(path))
    except (ValueError, EOFError, WavFileWarning) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _PCM_SCALES:
        samples = data.astype(np.float64) / _PCM_SCALES[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: unsupported sample format {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples, int(rate))


def write_audio(clip: AudioClip, path, format: str = "float32") -> int:
    """Write a clip as WAV; returns the number of samples clamped (pcm16 only)."""
    path = Path(path)
    if format == "float32":
        wavfile.write(str(path), clip.sample_rate_hz, clip.samples.astype(np.float32))
        return 0
    if format == "pcm16":
        clipped = int(np.count_nonzero((clip.samples < -1.0) | (clip.samples > 1.0)))
        if clipped:
            log.warning("%s: %d samples outside [-1, 1] clamped to full scale", path, clipped)
        scaled = np.clip(clip.samples, -1.0, 1.0) * 32767.0
        wavfile.write(str(path), clip.sample_rate_hz, np.round(scaled).astype(np.int16))
        return clipped
    raise ValueError(f"unknown format {format!r}, expected 'pcm16' or 'float32'")


def chunk_and_gate(
    clip: AudioClip, chunk_secs: float, gate_dbfs: float
) -> list[tuple[int, AudioClip]]:
    """Cut consecutive fixed-length chunks, dropping quiet ones.

    Chunks are exactly floor(chunk_secs * fs) samples from offset 0; the
    trailing remainder is discarded, as is any chunk whose RMS falls below
    gate_dbfs relative to digital full scale.
    """
    if chunk_secs <= 0:
        raise ValueError(f"chunk_secs must be > 0, got {chunk_secs}")
    chunk_len = int(chunk_secs * clip.sample_rate_hz)
    if chunk_len < 1:
        raise ValueError(f"chunk of {chunk_secs}s at {clip.sample_rate_hz}Hz has no samples")
    out = []
    for k in range(len(clip) // chunk_len):
        offset = k * chunk_len
        seg = clip.samples[offset : offset + chunk_len]
        r = math.sqrt(float(np.mean(np.square(seg))))
        if r <= 0.0 or 20.0 * math.log10(r) < gate_dbfs:
            continue
        out.append((offset, AudioClip(seg, clip.sample_rate_hz)))
    return out


@dataclass(frozen=True)
class ChunkManifestEntry:
    source_path: str
    chunk_index: int
    offset_samples: int
    label: str
    output_path: str
    rms_dbfs: float


def build_dataset(
    input_dir,
    catalog: ProfileCatalog,
    chunk_secs: float,
    gate_dbfs: float,
    out_dir,
) -> list[ChunkManifestEntry]:
    """Expand every retained chunk of every WAV under input_dir into one
    labeled output per catalog entry.

    The neutral entry writes the chunk unmodified under label "0"; each
    profile entry writes its compressed version. Outputs are float32 WAVs
    named deterministically; per-file failures are logged and skipped.
    """
    input_dir = Path(input_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: list[ChunkManifestEntry] = []
    for src in sorted(input_dir.glob("*.wav"), key=str):
        try:
            clip = read_audio(src)
            chunks = chunk_and_gate(clip, chunk_secs, gate_dbfs)
        except (ValueError, OSError) as exc:
            log.warning("skipping %s: %s", src, exc)
            continue
        for chunk_index, (offset, chunk) in enumerate(chunks):
            rms_dbfs = 20.0 * math.log10(chunk.rms())
            for entry in catalog:
                if entry.params is None:
                    out_clip = chunk
                else:
                    out_clip, _ = compress(chunk, entry.params)
                out_path = out_dir / f"{src.stem}_c{chunk_index:04d}_{entry.label}.wav"
                write_audio(out_clip, out_path, "float32")
                manifest.append(
                    ChunkManifestEntry(
                        source_path=str(src),
                        chunk_index=chunk_index,
                        offset_samples=offset,
                        label=entry.label,
                        output_path=str(out_path),
                        rms_dbfs=rms_dbfs,
                    )
                )
    return manifest


def write_manifest(entries: list[ChunkManifestEntry], path) -> None:
    """Write the dataset manifest as UTF-8 CSV with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "chunk_index", "offset_samples", "label", "output_path", "rms_dbfs"])
        for e in entries:
            writer.writerow(
                [e.source_path, e.chunk_index, e.offset_samples, e.label, e.output_path,
                 "%.6f" % e.rms_dbfs]
            )


def inject_noise_at_snr(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add seeded zero-mean Gaussian noise at the requested SNR.

    The noise variance is P_signal / 10^(SNR/10) with P_signal the mean
    squared sample value; the same seed reproduces the same output.
    """
    power = float(np.mean(np.square(clip.samples)))
    if power < _SILENCE_POWER:
        raise SilentClip(f"clip power {power:.3e} too low to define an SNR")
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, clip.samples.size)
    return AudioClip(clip.samples + noise, clip.sample_rate_hz)


@dataclass(frozen=True)
class SnrSchedule:
    """Stepped SNR curriculum: start high, drop step_db every epochs_per_step."""

    start_db: float = 65.0
    step_db: float = 5.0
    epochs_per_step: int = 20
    floor_db: float = 20.0

    def __post_init__(self):
        if self.start_db < self.floor_db:
            raise ValueError(f"start_db {self.start_db} below floor_db {self.floor_db}")
        if self.step_db <= 0:
            raise ValueError(f"step_db must be > 0, got {self.step_db}")
        if self.epochs_per_step < 1:
            raise ValueError(f"epochs_per_step must be >= 1, got {self.epochs_per_step}")


def snr_at_epoch(schedule: SnrSchedule, epoch: int) -> float:
    """SNR in dB prescribed by the schedule for a zero-based epoch index."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return max(
        schedule.floor_db,
        schedule.start_db - schedule.step_db * (epoch // schedule.epochs_per_step),
    )
