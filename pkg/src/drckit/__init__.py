"""drckit: reversible dynamic range compression.

A forward gain-model compressor, a model-based decompressor built on
per-sample root finding, evaluation metrics, dataset construction and
experiment harnesses.
"""

from .core import (
    AudioClip,
    CatalogEntry,
    Detector,
    DrcParams,
    ProfileCatalog,
    builtin_catalog,
    derived_constants,
    load_catalog,
    validate_params,
)
from .compressor import CompressorState, CompressorTrace, compress, smoothing_coefficient
from .inverter import (
    InversionDiagnostics,
    NoConvergence,
    SolverKind,
    characteristic_fn,
    invert,
    invert_sample,
    solve_hybrid,
    solve_newton,
)
from .metrics import MetricReport, SpectralConfig, evaluate, mel_l2, mse, rms_normalize, si_sdr
from .corpus import (
    SnrSchedule,
    build_dataset,
    chunk_and_gate,
    inject_noise_at_snr,
    read_audio,
    snr_at_epoch,
    write_audio,
)
from .analysis import (
    BoxStats,
    IdentificationReport,
    SolverReport,
    SweepResult,
    box_stats,
    identify_profile,
    perturbation_sweep,
    solver_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "BoxStats",
    "CatalogEntry",
    "CompressorState",
    "CompressorTrace",
    "Detector",
    "DrcParams",
    "IdentificationReport",
    "InversionDiagnostics",
    "MetricReport",
    "NoConvergence",
    "ProfileCatalog",
    "SnrSchedule",
    "SolverKind",
    "SolverReport",
    "SpectralConfig",
    "SweepResult",
    "box_stats",
    "builtin_catalog",
    "build_dataset",
    "characteristic_fn",
    "chunk_and_gate",
    "compress",
    "derived_constants",
    "evaluate",
    "identify_profile",
    "inject_noise_at_snr",
    "invert",
    "invert_sample",
    "load_catalog",
    "mel_l2",
    "mse",
    "perturbation_sweep",
    "read_audio",
    "rms_normalize",
    "si_sdr",
    "smoothing_coefficient",
    "snr_at_epoch",
    "solve_hybrid",
    "solve_newton",
    "solver_benchmark",
    "validate_params",
    "write_audio",
]
