import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drckit import AudioClip, Detector, DrcParams, builtin_catalog, compress, smoothing_coefficient
from drckit.compressor import ATTACK, RELEASE, NonPositiveInput, compression_factor, envelope_step, gain_step
from drckit.inverter import characteristic_fn
from tests.conftest import desk_clip

PROFILE_A = builtin_catalog("small").get("A").params

# time constant chosen so 1 - exp(-2.2 / (1000 * tau)) is exactly 0.5
TAU_HALF_1K = 0.00317392908995572


def params_with(p=Detector.RMS, tau_v=0.005, tau_g=0.05, threshold_db=-20.0, ratio=2.0):
    return DrcParams(
        threshold_db=threshold_db,
        ratio=ratio,
        tau_v_att_s=tau_v,
        tau_v_rel_s=tau_v,
        tau_g_att_s=tau_g,
        tau_g_rel_s=tau_g,
        detector=p,
    )


class TestSmoothingCoefficient:
    def test_5ms_at_44100(self):
        assert smoothing_coefficient(0.005, 44100) == pytest.approx(0.00992771588668484, rel=1e-12)

    def test_435ms_at_44100(self):
        assert smoothing_coefficient(0.435, 44100) == pytest.approx(1.1467531236453166e-4, rel=1e-12)

    def test_instant_tracking_limit(self):
        assert smoothing_coefficient(1e-9, 44100) == pytest.approx(1.0)

    def test_rejects_non_positive(self):
        with pytest.raises(NonPositiveInput):
            smoothing_coefficient(0.0, 44100)
        with pytest.raises(NonPositiveInput):
            smoothing_coefficient(0.01, -1)

    def test_in_unit_interval(self):
        for tau in (1e-4, 0.005, 0.435, 2.0):
            c = smoothing_coefficient(tau, 44100)
            assert 0.0 < c < 1.0


class TestEnvelopeStep:
    def test_zero_fixed_point(self):
        v, branch = envelope_step(0.0, 0.0, PROFILE_A, 44100)
        assert v == 0.0
        assert branch == RELEASE

    def test_peak_detector_half_coefficient(self):
        params = params_with(p=Detector.PEAK, tau_v=TAU_HALF_1K)
        v, branch = envelope_step(1.0, 0.0, params, 1000)
        assert branch == ATTACK
        assert v == pytest.approx(0.5, rel=1e-12)

    def test_instant_tracking_release(self):
        params = params_with(tau_v=1e-9)
        v, branch = envelope_step(0.3, 0.9, params, 44100)
        assert branch == RELEASE
        assert v == pytest.approx(0.3, rel=1e-9)

    def test_tie_takes_release(self):
        _, branch = envelope_step(0.5, 0.5, PROFILE_A, 44100)
        assert branch == RELEASE


class TestCompressionFactor:
    def test_at_threshold_boundary(self):
        assert compression_factor(PROFILE_A.linear_threshold, PROFILE_A) == 1.0

    def test_twice_threshold_ratio_two(self):
        params = params_with()
        assert compression_factor(2 * params.linear_threshold, params) == pytest.approx(
            math.sqrt(0.5), rel=1e-12
        )

    def test_zero_envelope(self):
        assert compression_factor(0.0, PROFILE_A) == 1.0


class TestGainStep:
    def test_fixed_point(self):
        g, branch = gain_step(0.7, 0.7, PROFILE_A, 44100)
        assert branch == RELEASE
        assert g == pytest.approx(0.7, rel=1e-15)

    def test_instant_tracking(self):
        params = params_with(tau_g=1e-9)
        g, branch = gain_step(0.6, 1.0, params, 44100)
        assert branch == RELEASE
        assert g == pytest.approx(0.6, rel=1e-9)

    def test_half_coefficient(self):
        params = params_with(tau_g=TAU_HALF_1K)
        g, branch = gain_step(0.5, 1.0, params, 1000)
        assert branch == RELEASE
        assert g == pytest.approx(0.75, rel=1e-12)


class TestCompress:
    def test_silence_fixed_point(self):
        clip = AudioClip(np.zeros(2000), 44100)
        y, trace = compress(clip, PROFILE_A, with_trace=True)
        assert np.array_equal(y.samples, np.zeros(2000))
        assert np.all(trace.g == 1.0)

    def test_below_threshold_passthrough(self):
        clip = AudioClip(np.full(4000, 0.01), 44100)
        y, trace = compress(clip, PROFILE_A, with_trace=True)
        assert np.array_equal(y.samples, clip.samples)
        assert np.all(trace.f == 1.0)

    def test_deterministic(self):
        clip = desk_clip(3)
        y1, _ = compress(clip, PROFILE_A)
        y2, _ = compress(clip, PROFILE_A)
        assert np.array_equal(y1.samples, y2.samples)

    def test_sample_rate_preserved_and_trace_length(self):
        clip = desk_clip(4, fs=22050, secs=0.25)
        y, trace = compress(clip, PROFILE_A, with_trace=True)
        assert y.sample_rate_hz == 22050
        assert len(trace) == len(clip)

    def test_no_trace_by_default(self):
        clip = desk_clip(4, secs=0.05)
        _, trace = compress(clip, PROFILE_A)
        assert trace is None

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_gain_bound_random_signals(self, seed):
        clip = desk_clip(seed, fs=8000, secs=0.1)
        for entry in builtin_catalog("small").non_neutral():
            y, trace = compress(clip, entry.params, with_trace=True)
            assert np.all(np.abs(y.samples) <= np.abs(clip.samples) + 1e-300)
            assert np.all((trace.f > 0) & (trace.f <= 1.0))
            assert np.all((trace.g > 0) & (trace.g <= 1.0))
            assert np.all(trace.v >= 0)
            assert np.all(trace.v <= 1.0)  # RMS detector with |x| <= 1

    def test_branch_consistency(self):
        clip = desk_clip(11, secs=0.2)
        _, trace = compress(clip, PROFILE_A, with_trace=True)
        v_prev = np.concatenate(([0.0], trace.v[:-1]))
        g_prev = np.concatenate(([1.0], trace.g[:-1]))
        assert np.array_equal(trace.beta_branch, np.abs(clip.samples) > v_prev)
        assert np.array_equal(trace.gamma_branch, trace.f > g_prev)

    def test_trace_residual_oracle_unit_sine(self):
        # unit-amplitude 440 Hz sine through profile A: every above-threshold
        # sample of the forward trace must zero the characteristic function
        fs = 44100
        t = np.arange(fs) / fs
        clip = AudioClip(np.sin(2 * np.pi * 440 * t), fs)
        y, trace = compress(clip, PROFILE_A, with_trace=True)
        beta_att = smoothing_coefficient(PROFILE_A.tau_v_att_s, fs)
        beta_rel = smoothing_coefficient(PROFILE_A.tau_v_rel_s, fs)
        gamma_att = smoothing_coefficient(PROFILE_A.tau_g_att_s, fs)
        gamma_rel = smoothing_coefficient(PROFILE_A.tau_g_rel_s, fs)
        l = PROFILE_A.linear_threshold
        v_prev, g_prev = 0.0, 1.0
        checked = 0
        for n in range(len(clip)):
            if trace.v[n] > l:
                xi = characteristic_fn(
                    trace.v[n],
                    v_prev,
                    g_prev,
                    abs(y.samples[n]),
                    PROFILE_A,
                    beta_att if trace.beta_branch[n] else beta_rel,
                    gamma_att if trace.gamma_branch[n] else gamma_rel,
                )
                assert abs(xi) < 1e-9
                checked += 1
            v_prev, g_prev = trace.v[n], trace.g[n]
        assert checked > len(clip) // 2  # the sine does engage the compressor


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        clip = desk_clip(5, secs=0.01)
        _, trace = compress(clip, PROFILE_A, with_trace=True)
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(clip)
        assert list(rows[0]) == ["n", "v", "f", "g", "beta_branch", "gamma_branch"]
        k = len(rows) // 2
        assert float(rows[k]["v"]) == pytest.approx(trace.v[k], rel=1e-12)
        assert float(rows[k]["g"]) == pytest.approx(trace.g[k], rel=1e-12)
        assert rows[k]["beta_branch"] in (ATTACK, RELEASE)
