"""Acceptance suite.

One test per criterion; each prints a single `ACCEPTANCE n: PASS/FAIL`
line (visible with `pytest -s` or on failure) before asserting.

Run with: pytest tests/test_acceptance.py -v -s
"""

import math
import time

import numpy as np
import pytest

from drckit import (
    AudioClip,
    SnrSchedule,
    SolverKind,
    build_dataset,
    builtin_catalog,
    chunk_and_gate,
    compress,
    evaluate,
    identify_profile,
    inject_noise_at_snr,
    invert,
    mel_l2,
    mse,
    perturbation_sweep,
    rms_normalize,
    si_sdr,
    snr_at_epoch,
    write_audio,
)
from drckit.cli import main as cli_main
from drckit.corpus import write_manifest
from drckit.compressor import smoothing_coefficient
from drckit.metrics import SI_SDR_CAP_DB

SMALL = builtin_catalog("small")
TOL = 1e-12


def _report(criterion: int, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def round_trip_stats(desk_corpus):
    """Per-solver aggregates over the 20-clip x 5-profile desk corpus."""
    solvers = (SolverKind.NEWTON_RAPHSON, SolverKind.HYBRID_LEAST_SQUARES)
    mses = {s: [] for s in solvers}
    wall = {s: 0.0 for s in solvers}
    degenerate = {s: 0 for s in solvers}
    max_root_gap = 0.0
    for clip in desk_corpus:
        ref = rms_normalize(clip)
        for entry in SMALL.non_neutral():
            y, _ = compress(clip, entry.params)
            states = {}
            for solver in solvers:
                t0 = time.perf_counter()
                x_hat, diag = invert(y, entry.params, solver, tol=TOL, record_state=True)
                wall[solver] += time.perf_counter() - t0
                est = rms_normalize(x_hat)
                mses[solver].append(float(np.mean((est.samples - ref.samples) ** 2)))
                degenerate[solver] += diag.degenerate_count
                states[solver] = diag
            both = (states[solvers[0]].status == 1) & (states[solvers[1]].status == 1)
            if both.any():
                va = states[solvers[0]].envelope[both]
                vb = states[solvers[1]].envelope[both]
                gap = float(np.max(np.abs(va - vb) / np.maximum(1.0, vb)))
                max_root_gap = max(max_root_gap, gap)
    return {
        "mean_mse": {s: float(np.mean(mses[s])) for s in solvers},
        "wall": wall,
        "degenerate": degenerate,
        "max_root_gap": max_root_gap,
        "cells": len(desk_corpus) * len(SMALL.non_neutral()),
    }


def test_criterion_1_round_trip_fidelity(round_trip_stats):
    mean = round_trip_stats["mean_mse"][SolverKind.HYBRID_LEAST_SQUARES]
    cells = round_trip_stats["cells"]
    passed = mean <= 1e-5
    _report(1, passed, f"hybrid mean MSE {mean:.3e} over {cells} round trips (limit 1e-5)")
    assert passed


def test_criterion_2_solver_comparison(round_trip_stats):
    newton = round_trip_stats["mean_mse"][SolverKind.NEWTON_RAPHSON]
    hybrid = round_trip_stats["mean_mse"][SolverKind.HYBRID_LEAST_SQUARES]
    gap = round_trip_stats["max_root_gap"]
    wall_n = round_trip_stats["wall"][SolverKind.NEWTON_RAPHSON]
    wall_h = round_trip_stats["wall"][SolverKind.HYBRID_LEAST_SQUARES]
    passed = hybrid <= newton and gap <= 1e-8
    _report(
        2,
        passed,
        f"mean MSE hybrid {hybrid:.3e} <= newton {newton:.3e}; "
        f"max root disagreement {gap:.2e} (limit 1e-8); "
        f"wall-time ratio newton/hybrid {wall_n / wall_h:.2f} (reported, not asserted)",
    )
    assert hybrid <= newton
    assert gap <= 1e-8


def test_criterion_3_characteristic_oracle(desk_corpus):
    # independent vectorized evaluation of the characteristic function on
    # every recorded forward-trace sample above threshold
    worst = 0.0
    checked = 0
    for clip in desk_corpus:
        fs = clip.sample_rate_hz
        for entry in SMALL.non_neutral():
            params = entry.params
            y, trace = compress(clip, params, with_trace=True)
            l = params.linear_threshold
            S = params.slope_exponent
            kappa = params.gain_scale
            p = int(params.detector)
            beta = np.where(
                trace.beta_branch,
                smoothing_coefficient(params.tau_v_att_s, fs),
                smoothing_coefficient(params.tau_v_rel_s, fs),
            )
            gamma = np.where(
                trace.gamma_branch,
                smoothing_coefficient(params.tau_g_att_s, fs),
                smoothing_coefficient(params.tau_g_rel_s, fs),
            )
            v = trace.v
            v_prev = np.concatenate(([0.0], v[:-1]))
            g_prev = np.concatenate(([1.0], trace.g[:-1]))
            above = v > l
            a = gamma * kappa * v**-S + (1.0 - gamma) * g_prev
            xi = a**p * (v**p - (1.0 - beta) * v_prev**p) - beta * np.abs(y.samples) ** p
            if above.any():
                worst = max(worst, float(np.max(np.abs(xi[above]))))
                checked += int(above.sum())
    passed = worst < 1e-9
    _report(3, passed, f"max |xi| {worst:.2e} over {checked} above-threshold samples (limit 1e-9)")
    assert checked > 0
    assert passed


def test_criterion_4_sensitivity_ordering(desk_corpus_16k):
    result = perturbation_sweep(desk_corpus_16k, SMALL, steps=10, range_frac=0.5)
    assert len(result.rows) == 20 * 5 * 6 * 10
    medians = {p: float(np.median(result.values(p, "mse"))) for p in
               ("L", "R", "tau_v_att", "tau_v_rel", "tau_g_att", "tau_g_rel")}
    timing = [medians[p] for p in ("tau_v_att", "tau_v_rel", "tau_g_att", "tau_g_rel")]
    ordering = medians["L"] > medians["R"] and all(medians["R"] > t for t in timing)
    margin = all(medians["L"] >= 10.0 * t for t in timing)
    passed = ordering and margin
    detail = ", ".join(f"{k}={v:.3e}" for k, v in medians.items())
    _report(4, passed, f"median MSE {detail}; L>R>timing and L>=10x timing")
    assert ordering
    assert margin


def test_criterion_5_metric_identities(desk_corpus):
    clip = desk_corpus[0]
    fs = clip.sample_rate_hz

    zero_mse = mse(clip, clip) == 0.0
    zero_mel = mel_l2(clip, clip) == 0.0

    noisy = AudioClip(
        clip.samples + 0.05 * np.random.default_rng(99).standard_normal(len(clip)), fs
    )
    base = si_sdr(noisy, clip)
    scale_ok = all(
        abs(si_sdr(AudioClip(c * noisy.samples, fs), clip) - base) <= 1e-6
        for c in (0.01, 0.5, 3.0, 250.0)
    )

    n = 10000
    ref = AudioClip(np.ones(n), fs)
    est = AudioClip(np.ones(n) + np.tile([1.0, -1.0], n // 2) / math.sqrt(10.0), fs)
    ten_db = abs(si_sdr(est, ref) - 10.0) <= 1e-6

    rep_base = evaluate(noisy, clip)
    rep_scaled = evaluate(
        AudioClip(7.3 * noisy.samples, fs), AudioClip(0.11 * clip.samples, fs)
    )
    rescale_ok = (
        abs(rep_scaled.mse - rep_base.mse) <= 1e-9 * max(1.0, abs(rep_base.mse))
        and abs(rep_scaled.mel_l2 - rep_base.mel_l2) <= 1e-9 * max(1.0, abs(rep_base.mel_l2))
        and abs(rep_scaled.si_sdr_db - rep_base.si_sdr_db) <= 1e-9 * max(1.0, abs(rep_base.si_sdr_db))
    )
    self_cap = evaluate(clip, clip).si_sdr_db == SI_SDR_CAP_DB

    passed = zero_mse and zero_mel and scale_ok and ten_db and rescale_ok and self_cap
    _report(
        5,
        passed,
        f"mse(x,x)=0:{zero_mse} mel(x,x)=0:{zero_mel} si_sdr scale-inv:{scale_ok} "
        f"10dB case:{ten_db} evaluate rescale-inv:{rescale_ok} self cap:{self_cap}",
    )
    assert passed


def test_criterion_6_dataset_pipeline(tmp_path, desk_corpus):
    fs = 8000
    src = tmp_path / "src"
    src.mkdir()
    loud = desk_corpus[1].samples[:fs]
    write_audio(AudioClip(loud, fs), src / "loud.wav", "float32")

    out_small = tmp_path / "out_small"
    m1 = build_dataset(src, SMALL, 1.0, -30.0, out_small)
    small_ok = len(m1) == 6 and [e.label for e in m1] == ["0", "A", "B", "C", "D", "E"]

    m_large = build_dataset(src, builtin_catalog("large"), 1.0, -30.0, tmp_path / "out_large")
    large_ok = len(m_large) == 31

    quiet = AudioClip(10 ** (-31 / 20.0) * np.ones(fs), fs)
    keepable = AudioClip(10 ** (-29 / 20.0) * np.ones(fs), fs)
    gate_ok = (
        chunk_and_gate(quiet, 1.0, -30.0) == []
        and len(chunk_and_gate(keepable, 1.0, -30.0)) == 1
    )

    write_manifest(m1, tmp_path / "m1.csv")
    m2 = build_dataset(src, SMALL, 1.0, -30.0, out_small)
    write_manifest(m2, tmp_path / "m2.csv")
    rerun_ok = (tmp_path / "m1.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()

    passed = small_ok and large_ok and gate_ok and rerun_ok
    _report(
        6,
        passed,
        f"small->6:{small_ok} large->31:{large_ok} gate -31 out/-29 in:{gate_ok} "
        f"manifest re-run byte-identical:{rerun_ok}",
    )
    assert passed


def test_criterion_7_augmentation(capsys):
    fs = 44100
    clip = AudioClip(np.tile([1.0, -1.0], 5 * fs // 2), fs)  # exactly unit power
    noisy = inject_noise_at_snr(clip, 20.0, seed=123)
    noise = noisy.samples - clip.samples
    measured = 10.0 * math.log10(np.mean(clip.samples**2) / np.mean(noise**2))
    snr_ok = abs(measured - 20.0) <= 0.5

    sched = SnrSchedule()
    sched_ok = (
        snr_at_epoch(sched, 0) == 65.0
        and snr_at_epoch(sched, 20) == 60.0
        and snr_at_epoch(sched, 10000) == 20.0
    )
    cli_values = []
    for epoch in (0, 20, 10000):
        assert cli_main(["augment", "schedule", "--epoch", str(epoch)]) == 0
        cli_values.append(capsys.readouterr().out.strip())
    cli_ok = cli_values == ["65", "60", "20"]

    passed = snr_ok and sched_ok and cli_ok
    with capsys.disabled():
        _report(
            7,
            passed,
            f"measured SNR {measured:.3f} dB (target 20 +/- 0.5); "
            f"schedule 0/20/10000 -> {'/'.join(cli_values)}",
        )
    assert passed


def test_criterion_8_identification(desk_corpus):
    clean = 0
    rank1 = 0
    total = 0
    for clip in desk_corpus:
        for entry in SMALL.non_neutral():
            y, _ = compress(clip, entry.params)
            report = identify_profile(y, SMALL, tol=TOL)
            cand = {c.label: c for c in report.ranking}[entry.label]
            if cand.degenerate_rate == 0.0 and cand.max_residual <= TOL:
                clean += 1
            if report.ranking[0].label == entry.label:
                rank1 += 1
            total += 1
    clean_ok = clean == total
    passed = clean_ok
    _report(
        8,
        passed,
        f"true profile clean diagnostics {clean}/{total}; "
        f"rank-1 accuracy {rank1}/{total} = {rank1 / total:.2f} (reported, not asserted)",
    )
    assert passed
