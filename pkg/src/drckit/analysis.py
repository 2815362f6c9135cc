"""Experiment harnesses: parameter-sensitivity sweeps, solver benchmarks,
box-plot statistics and a non-learning profile-identification ranker."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .compressor import compress
from .core import AudioClip, CatalogEntry, DrcParams, ProfileCatalog
from .inverter import DEFAULT_TOL, SolverKind, invert
from .metrics import SpectralConfig, _log_mel, rms_normalize

PARAM_NAMES = ("L", "R", "tau_v_att", "tau_v_rel", "tau_g_att", "tau_g_rel")

_PARAM_FIELDS = {
    "L": "threshold_db",
    "R": "ratio",
    "tau_v_att": "tau_v_att_s",
    "tau_v_rel": "tau_v_rel_s",
    "tau_g_att": "tau_g_att_s",
    "tau_g_rel": "tau_g_rel_s",
}


class EmptyInput(ValueError):
    pass


class EmptyCatalog(ValueError):
    pass


def _worker_count() -> int:
    env = os.environ.get("DRC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _profile_entries(profiles) -> list[CatalogEntry]:
    if isinstance(profiles, ProfileCatalog):
        return profiles.non_neutral()
    return [e for e in profiles if e.params is not None]


def perturb_params(params: DrcParams, param_name: str, delta: float) -> tuple[DrcParams, bool]:
    """Scale one parameter by (1 + delta), clamped back into the valid domain.

    Returns the new parameter set and whether clamping was applied
    (ratio floored at 1, threshold capped at 0 dB).
    """
    field = _PARAM_FIELDS[param_name]
    value = getattr(params, field) * (1.0 + delta)
    clamped = False
    if param_name == "L" and value > 0.0:
        value, clamped = 0.0, True
    if param_name == "R" and value < 1.0:
        value, clamped = 1.0, True
    return replace(params, **{field: value}), clamped


def delta_grid(steps: int, range_frac: float) -> np.ndarray:
    """`steps` equally spaced relative deltas over [-range_frac, +range_frac]."""
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    if not 0 < range_frac <= 0.5:
        raise ValueError(f"range_frac must be in (0, 0.5], got {range_frac}")
    return np.linspace(-range_frac, range_frac, steps)


@dataclass(frozen=True)
class SweepRow:
    profile: str
    param: str
    delta: float
    clip: int
    mse: float
    mel_l2: float
    clamped: bool = False
    error: Optional[str] = None


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def values(self, param: str, metric: str) -> np.ndarray:
        picked = [getattr(r, metric) for r in self.rows if r.param == param and r.error is None]
        return np.asarray(picked, dtype=np.float64)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["profile", "param", "delta", "clip", "mse", "mel_l2"])
            for r in self.rows:
                writer.writerow(
                    [r.profile, r.param, repr(float(r.delta)), r.clip,
                     "%.12e" % r.mse, "%.12e" % r.mel_l2]
                )


def _sweep_cell_rows(
    clip_id: int,
    clip: AudioClip,
    entry: CatalogEntry,
    deltas: np.ndarray,
    cfg: SpectralConfig,
    solver,
    tol: float,
) -> list[SweepRow]:
    params = entry.params
    try:
        y, _ = compress(clip, params)
        x_ref, _ = invert(y, params, solver, tol)
        ref = rms_normalize(x_ref)
        ref_logmel = _log_mel(ref, cfg)
    except Exception as exc:  # reference failed: flag every cell of this pair
        return [
            SweepRow(entry.label, param_name, float(delta), clip_id,
                     float("nan"), float("nan"), False, str(exc))
            for param_name in PARAM_NAMES
            for delta in deltas
        ]
    rows = []
    for param_name in PARAM_NAMES:
        for delta in deltas:
            try:
                perturbed, clamped = perturb_params(params, param_name, float(delta))
                x_pert, _ = invert(y, perturbed, solver, tol)
                pert = rms_normalize(x_pert)
                cell_mse = float(np.mean(np.square(pert.samples - ref.samples)))
                cell_mel = float(np.linalg.norm(_log_mel(pert, cfg) - ref_logmel))
                rows.append(
                    SweepRow(entry.label, param_name, float(delta), clip_id,
                             cell_mse, cell_mel, clamped)
                )
            except Exception as exc:  # flagged, never aborts the sweep
                rows.append(
                    SweepRow(entry.label, param_name, float(delta), clip_id,
                             float("nan"), float("nan"), False, str(exc))
                )
    return rows


def perturbation_sweep(
    clips: Sequence[AudioClip],
    profiles,
    steps: int = 10,
    range_frac: float = 0.5,
    spectral_cfg: SpectralConfig = SpectralConfig(),
    solver=SolverKind.HYBRID_LEAST_SQUARES,
    tol: float = DEFAULT_TOL,
) -> SweepResult:
    """Measure reconstruction error under single-parameter perturbations.

    Every clip is compressed with each profile's true parameters and
    re-inverted once per (parameter, delta) with that parameter scaled by
    1 + delta; errors are taken against the reconstruction under the true
    parameters, both RMS-normalized.
    """
    deltas = delta_grid(steps, range_frac)
    entries = _profile_entries(profiles)
    tasks = [(ci, clip, entry) for ci, clip in enumerate(clips) for entry in entries]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        results = list(
            pool.map(
                lambda t: _sweep_cell_rows(t[0], t[1], t[2], deltas, spectral_cfg, solver, tol),
                tasks,
            )
        )
    rows: list[SweepRow] = []
    for cell_rows in results:
        rows.extend(cell_rows)
    return SweepResult(rows)


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outlier_count: int


def box_stats(values: Iterable[float]) -> BoxStats:
    """Five-number box summary with 1.5 IQR whiskers and an outlier count."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("box_stats needs at least one value")
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    return BoxStats(
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outlier_count=int(arr.size - inside.size),
    )


def write_box_summary_csv(result: SweepResult, path) -> None:
    """Summarize a sweep as per-parameter box statistics for both metrics."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["param", "metric", "median", "q1", "q3", "wlow", "whigh", "outliers"])
        for param in PARAM_NAMES:
            for metric in ("mse", "mel_l2"):
                vals = result.values(param, metric)
                if vals.size == 0:
                    continue
                b = box_stats(vals)
                writer.writerow(
                    [param, metric, "%.12e" % b.median, "%.12e" % b.q1, "%.12e" % b.q3,
                     "%.12e" % b.whisker_low, "%.12e" % b.whisker_high, b.outlier_count]
                )


@dataclass(frozen=True)
class SolverReport:
    solver: SolverKind
    total_wall_time_s: float
    mean_mse: float
    mean_residual: float
    degenerate_rate: float
    clips: int

    def as_dict(self) -> dict:
        return {
            "solver": self.solver.value,
            "total_wall_time_s": self.total_wall_time_s,
            "mean_mse": self.mean_mse,
            "mean_residual": self.mean_residual,
            "degenerate_rate": self.degenerate_rate,
            "clips": self.clips,
        }


def solver_reports_to_json(reports: Sequence[SolverReport]) -> str:
    return json.dumps([r.as_dict() for r in reports], indent=2)


def solver_benchmark(
    clips: Sequence[AudioClip],
    profiles,
    tol: float = DEFAULT_TOL,
) -> tuple[SolverReport, SolverReport]:
    """Round-trip every clip through every profile with both root finders.

    Wall time covers inversion only (compression is shared); each solver
    runs serially over the full corpus before the next starts. MSE is
    computed on RMS-normalized pairs.
    """
    entries = _profile_entries(profiles)
    if not clips or not entries:
        raise EmptyInput("benchmark needs at least one clip and one profile")
    cells = []
    for clip in clips:
        ref = rms_normalize(clip)
        for entry in entries:
            y, _ = compress(clip, entry.params)
            cells.append((entry.params, y, ref))
    reports = []
    for solver in (SolverKind.NEWTON_RAPHSON, SolverKind.HYBRID_LEAST_SQUARES):
        mse_sum = 0.0
        residual_sum = 0.0
        degenerate = 0
        samples = 0
        wall = 0.0
        for params, y, ref in cells:
            t0 = time.perf_counter()
            x_hat, diag = invert(y, params, solver, tol)
            wall += time.perf_counter() - t0
            est = rms_normalize(x_hat)
            mse_sum += float(np.mean(np.square(est.samples - ref.samples)))
            residual_sum += diag._residual_sum
            degenerate += diag.degenerate_count
            samples += diag.samples
        reports.append(
            SolverReport(
                solver=solver,
                total_wall_time_s=wall,
                mean_mse=mse_sum / len(cells),
                mean_residual=residual_sum / samples,
                degenerate_rate=degenerate / samples,
                clips=len(cells),
            )
        )
    return reports[0], reports[1]


@dataclass(frozen=True)
class IdentificationCandidate:
    label: str
    degenerate_rate: float
    max_residual: float
    mean_residual: float


@dataclass(frozen=True)
class IdentificationReport:
    """Profile hypotheses ranked by inversion self-consistency.

    Rank 1 (first entry) is the candidate with the lowest
    (degenerate_rate, mean_residual) key; `indeterminate` is set when all
    candidates tie, which happens whenever the signal never crosses any
    catalog threshold.
    """

    ranking: tuple[IdentificationCandidate, ...]
    indeterminate: bool

    @property
    def best_label(self) -> str:
        return self.ranking[0].label

    def to_json(self) -> str:
        return json.dumps(
            {
                "indeterminate": self.indeterminate,
                "ranking": [
                    {
                        "label": c.label,
                        "degenerate_rate": c.degenerate_rate,
                        "max_residual": c.max_residual,
                        "mean_residual": c.mean_residual,
                    }
                    for c in self.ranking
                ],
            },
            indent=2,
        )


def identify_profile(
    y: AudioClip,
    catalog: ProfileCatalog,
    solver=SolverKind.HYBRID_LEAST_SQUARES,
    tol: float = DEFAULT_TOL,
) -> IdentificationReport:
    """Rank catalog profiles by how consistently each one inverts the clip.

    Wrong parameters cause branch/regime inconsistencies (degenerate
    samples), so the true profile floats to the top on clean inputs. The
    neutral hypothesis is scored by the fraction of samples whose envelope
    exceeds the most permissive (highest) catalog threshold.
    """
    entries = catalog.non_neutral()
    if not entries:
        raise EmptyCatalog("catalog has no parameterized entries to test")
    candidates = []
    for entry in entries:
        _, diag = invert(y, entry.params, solver, tol)
        candidates.append(
            IdentificationCandidate(
                label=entry.label,
                degenerate_rate=diag.degenerate_rate,
                max_residual=diag.max_residual,
                mean_residual=diag.mean_residual,
            )
        )
    if any(e.label == "0" for e in catalog):
        permissive = max(entries, key=lambda e: e.params.linear_threshold)
        _, trace = compress(y, permissive.params, with_trace=True)
        above = float(np.mean(trace.v > permissive.params.linear_threshold)) if len(y) else 0.0
        candidates.append(IdentificationCandidate("0", above, 0.0, 0.0))
    ranking = tuple(sorted(candidates, key=lambda c: (c.degenerate_rate, c.mean_residual)))
    keys = {(c.degenerate_rate, c.mean_residual) for c in ranking}
    return IdentificationReport(ranking=ranking, indeterminate=len(keys) == 1)
