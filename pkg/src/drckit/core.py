"""Domain types, parameter validation and the built-in compressor profile catalogs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np


class ParamError(ValueError):
    """Base class for compressor parameter validation failures."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class NonPositiveTimeConstant(ParamError):
    pass


class RatioBelowOne(ParamError):
    pass


class InvalidDetector(ParamError):
    pass


class PositiveThreshold(ParamError):
    pass


class UnknownCatalog(KeyError):
    pass


class Detector(IntEnum):
    """Envelope detector law: peak follows |x|, RMS follows sqrt of smoothed x^2."""

    PEAK = 1
    RMS = 2


@dataclass(frozen=True)
class DrcParams:
    """The seven parameters of the gain-model compressor.

    Threshold is in dBFS (<= 0), ratio is the dB-in per dB-out slope (>= 1),
    the four time constants are in seconds (> 0) and control the envelope
    and gain smoothing respectively. ``detector`` selects peak (1) or
    RMS (2) envelope detection.
    """

    threshold_db: float
    ratio: float
    tau_v_att_s: float
    tau_v_rel_s: float
    tau_g_att_s: float
    tau_g_rel_s: float
    detector: Detector = Detector.RMS

    def __post_init__(self):
        if not math.isfinite(self.threshold_db) or self.threshold_db > 0:
            raise PositiveThreshold("threshold_db", f"must be <= 0 dBFS, got {self.threshold_db}")
        if not math.isfinite(self.ratio) or self.ratio < 1:
            raise RatioBelowOne("ratio", f"must be >= 1, got {self.ratio}")
        for name in ("tau_v_att_s", "tau_v_rel_s", "tau_g_att_s", "tau_g_rel_s"):
            tau = getattr(self, name)
            if not math.isfinite(tau) or tau <= 0:
                raise NonPositiveTimeConstant(name, f"must be > 0 seconds, got {tau}")
        if self.detector not in (1, 2):
            raise InvalidDetector("detector", f"must be 1 (peak) or 2 (RMS), got {self.detector}")
        object.__setattr__(self, "detector", Detector(self.detector))

    @property
    def linear_threshold(self) -> float:
        """Threshold on the linear amplitude scale, 10^(dB/20)."""
        return 10.0 ** (self.threshold_db / 20.0)

    @property
    def slope_exponent(self) -> float:
        """Exponent 1 - 1/ratio of the static compression curve."""
        return 1.0 - 1.0 / self.ratio

    @property
    def gain_scale(self) -> float:
        """Scale linear_threshold ** slope_exponent of the static curve."""
        return self.linear_threshold**self.slope_exponent


class DerivedConstants(NamedTuple):
    linear_threshold: float
    slope_exponent: float
    gain_scale: float


def validate_params(raw) -> DrcParams:
    """Return a validated DrcParams from a DrcParams or a field mapping.

    Raises one of PositiveThreshold, RatioBelowOne, NonPositiveTimeConstant
    or InvalidDetector naming the offending field.
    """
    if isinstance(raw, DrcParams):
        # construction already validated; re-run for mutated subclasses
        return DrcParams(
            raw.threshold_db,
            raw.ratio,
            raw.tau_v_att_s,
            raw.tau_v_rel_s,
            raw.tau_g_att_s,
            raw.tau_g_rel_s,
            raw.detector,
        )
    return DrcParams(**dict(raw))


def derived_constants(params: DrcParams) -> DerivedConstants:
    """Linear threshold, slope exponent and gain scale for a parameter set."""
    return DerivedConstants(params.linear_threshold, params.slope_exponent, params.gain_scale)


NEUTRAL_LABEL = "0"


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    params: Optional[DrcParams]  # None marks the neutral (uncompressed) class


@dataclass(frozen=True)
class ProfileCatalog:
    """Ordered, uniquely labeled collection of compressor profiles.

    The reserved label "0" denotes the neutral class (no compression) and
    carries no parameters.
    """

    entries: tuple[CatalogEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        labels = [e.label for e in self.entries]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValueError(f"duplicate catalog labels: {dupes}")
        for e in self.entries:
            if (e.params is None) != (e.label == NEUTRAL_LABEL):
                raise ValueError(
                    f"entry {e.label!r}: only the neutral label {NEUTRAL_LABEL!r} may omit params"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def get(self, label: str) -> CatalogEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def non_neutral(self) -> list[CatalogEntry]:
        return [e for e in self.entries if e.params is not None]


def _profile(threshold_db, ratio, tau_v_att_ms, tau_v_rel_ms, tau_g_att_ms, tau_g_rel_ms,
             detector=Detector.RMS) -> DrcParams:
    # tables carry milliseconds; everything internal is seconds
    return DrcParams(
        threshold_db=threshold_db,
        ratio=ratio,
        tau_v_att_s=tau_v_att_ms / 1000.0,
        tau_v_rel_s=tau_v_rel_ms / 1000.0,
        tau_g_att_s=tau_g_att_ms / 1000.0,
        tau_g_rel_s=tau_g_rel_ms / 1000.0,
        detector=detector,
    )


# Five standard compressor presets (labels A-E). All use a 5 ms envelope
# smoother and the RMS detector.
_SMALL_PROFILES = {
    "A": _profile(-32.0, 3.0, 5.0, 5.0, 13.0, 435.0),
    "B": _profile(-19.9, 1.8, 5.0, 5.0, 11.0, 49.0),
    "C": _profile(-24.4, 3.2, 5.0, 5.0, 5.8, 112.0),
    "D": _profile(-26.3, 7.3, 5.0, 5.0, 9.0, 705.0),
    "E": _profile(-38.0, 4.9, 5.0, 5.0, 13.1, 257.0),
}

# Thirty wider-coverage profiles spanning threshold -60..-20 dBFS, ratio
# 2..15, envelope times 5..130 ms and gain times 10..500 / 25..2000 ms.
# Columns: L (dBFS), R, tau_v_att, tau_v_rel, tau_g_att, tau_g_rel (ms).
_LARGE_TABLE = [
    ("1", -30.6, 2.3, 73.9, 20.3, 451.5, 1153.6),
    ("2", -55.9, 12.1, 25.4, 50.9, 54.1, 1274.5),
    ("3", -55.1, 13.4, 43.3, 76.4, 354.6, 468.4),
    ("4", -39.6, 13.1, 66.2, 10.1, 325.5, 1435.7),
    ("5", -31.4, 12.3, 99.4, 91.7, 160.7, 790.8),
    ("6", -60.0, 15.0, 130.0, 89.2, 393.4, 1758.2),
    ("7", -47.8, 5.4, 50.9, 84.1, 403.1, 1677.6),
    ("8", -46.9, 4.9, 48.4, 66.2, 257.7, 1516.3),
    ("9", -45.3, 2.5, 89.2, 114.7, 344.9, 1234.2),
    ("10", -26.5, 10.8, 114.7, 68.8, 209.2, 145.9),
    ("11", -43.7, 8.4, 35.6, 107.0, 432.1, 750.5),
    ("12", -20.8, 6.5, 84.1, 101.9, 500.0, 347.4),
    ("13", -22.4, 11.3, 124.9, 63.7, 364.3, 831.1),
    ("14", -40.4, 10.0, 112.1, 99.4, 374.0, 1355.1),
    ("15", -52.7, 4.4, 104.5, 35.6, 199.5, 1919.4),
    ("16", -51.8, 2.0, 117.2, 117.2, 277.0, 549.0),
    ("17", -38.0, 5.2, 5.0, 40.7, 296.4, 1717.9),
    ("18", -51.0, 3.3, 28.0, 127.4, 170.4, 669.9),
    ("19", -29.8, 9.2, 33.1, 56.0, 131.6, 1959.7),
    ("20", -29.0, 11.8, 45.8, 81.5, 412.8, 992.3),
    ("21", -28.2, 5.7, 10.1, 17.8, 34.7, 428.1),
    ("22", -50.2, 12.6, 22.9, 122.3, 83.2, 1395.4),
    ("23", -23.3, 12.9, 12.7, 7.6, 112.2, 25.0),
    ("24", -44.5, 7.8, 15.2, 86.6, 306.1, 1838.8),
    ("25", -46.1, 11.0, 122.3, 12.7, 189.8, 1113.3),
    ("26", -56.7, 2.8, 94.3, 28.0, 102.6, 186.2),
    ("27", -24.9, 10.5, 38.2, 43.3, 335.2, 226.5),
    ("28", -48.6, 8.9, 107.0, 104.5, 25.0, 1798.5),
    ("29", -49.4, 10.2, 127.4, 71.3, 92.9, 508.7),
    ("30", -24.1, 14.2, 81.5, 58.6, 180.1, 871.4),
]


def builtin_catalog(name: str) -> ProfileCatalog:
    """Return a built-in catalog: "small" (neutral + A-E) or "large" (neutral + 1-30)."""
    if name == "small":
        entries = [CatalogEntry(NEUTRAL_LABEL, None)]
        entries += [CatalogEntry(label, p) for label, p in _SMALL_PROFILES.items()]
        return ProfileCatalog(entries)
    if name == "large":
        entries = [CatalogEntry(NEUTRAL_LABEL, None)]
        entries += [
            CatalogEntry(label, _profile(L, R, tva, tvr, tga, tgr))
            for label, L, R, tva, tvr, tga, tgr in _LARGE_TABLE
        ]
        return ProfileCatalog(entries)
    raise UnknownCatalog(name)


_PROFILE_FILE_FIELDS = {
    "label",
    "threshold_db",
    "ratio",
    "tau_v_att_ms",
    "tau_v_rel_ms",
    "tau_g_att_ms",
    "tau_g_rel_ms",
    "detector",
}


def parse_profile_obj(obj: dict) -> CatalogEntry:
    """Build one catalog entry from a profile-file JSON object (times in ms)."""
    unknown = set(obj) - _PROFILE_FILE_FIELDS
    if unknown:
        raise ValueError(f"unknown profile fields: {sorted(unknown)}")
    missing = _PROFILE_FILE_FIELDS - set(obj)
    if missing:
        raise ValueError(f"missing profile fields: {sorted(missing)}")
    return CatalogEntry(
        label=str(obj["label"]),
        params=_profile(
            float(obj["threshold_db"]),
            float(obj["ratio"]),
            float(obj["tau_v_att_ms"]),
            float(obj["tau_v_rel_ms"]),
            float(obj["tau_g_att_ms"]),
            float(obj["tau_g_rel_ms"]),
            Detector(int(obj["detector"])),
        ),
    )


def load_catalog(path) -> ProfileCatalog:
    """Load a user catalog from a JSON file: a list of profile objects.

    Times are given in milliseconds; unknown fields are rejected. A neutral
    entry (label "0", no parameters) is prepended automatically.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("profile file must contain a JSON list of profile objects")
    entries = [CatalogEntry(NEUTRAL_LABEL, None)]
    entries += [parse_profile_obj(obj) for obj in data]
    return ProfileCatalog(entries)


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: a float64 sample array in nominal [-1, 1] plus its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64).reshape(-1).copy()
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples contain NaN or Inf")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def rms(self) -> float:
        if not self.samples.size:
            return 0.0
        return float(np.sqrt(np.mean(np.square(self.samples))))
