"""Measurement views: examples from the instrument contracts plus their
Monte-Carlo and analytic oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlab.analysis import (
    eye_diagram,
    evm_rms,
    measure_ber,
    papr_ccdf,
    spectrogram,
    welch_psd,
)
from vlab.core import IqSignal, Rng
from vlab.impairments import add_awgn
from vlab.modem import Scheme, map_bits
from vlab.shaping import PulseKind, PulseShape, group_delay_samples, pulse_shape


def tone(f0, fs, n=65536, amp=1.0):
    k = np.arange(n)
    return IqSignal(amp * np.exp(2j * np.pi * f0 / fs * k), fs)


class TestWelchPsd:
    def test_tone_peak_at_bin_center(self):
        fs = 1e6
        f0 = 125 * fs / 1024  # exact bin center for segment_len 1024
        psd = welch_psd(tone(f0, fs), 1024, 0.5, "rect")
        assert psd.peak_freq_hz() == pytest.approx(f0)
        median_db = float(np.median(psd.power_db))
        assert psd.power_db.max() - median_db >= 30.0

    def test_dc_signal_peaks_at_zero(self):
        sig = IqSignal(np.ones(8192, dtype=complex), 1e3)
        psd = welch_psd(sig, 512, 0.5, "hann")
        assert psd.peak_freq_hz() == pytest.approx(0.0)

    def test_white_noise_flat_within_2_db(self):
        # >= 100 averaged segments via 50% overlap
        rng = Rng(2024)
        sig = IqSignal(rng.complex_normal(51_712), 1.0)
        psd = welch_psd(sig, 1024, 0.5, "hann")
        deviation = psd.power_db - np.mean(psd.power_db)
        assert np.max(np.abs(deviation)) < 2.0

    def test_power_closure_for_arbitrary_signals(self):
        for seed in range(5):
            rng = Rng(seed)
            x = rng.complex_normal(16384, power=float(rng.uniform(0.1, 4.0)))
            sig = IqSignal(x, 2e6)
            for window in ("rect", "hann"):
                psd = welch_psd(sig, 1024, 0.5, window)
                err_db = abs(10 * math.log10(psd.total_power() / sig.power()))
                assert err_db < 0.5

    def test_insufficient_samples_rejected(self):
        with pytest.raises(ValueError, match="insufficient"):
            welch_psd(IqSignal(np.ones(10, dtype=complex), 1.0), 1024)


class TestSpectrogram:
    def test_constant_tone_single_ridge(self):
        fs = 1e6
        spec = spectrogram(tone(fs / 8, fs, 16384), fft_len=256, hop=64)
        ridge = spec.ridge_hz()
        assert np.all(np.abs(ridge - fs / 8) < fs / 256)

    def test_two_hop_fhss_transition_frame(self):
        fs = 1e6
        f1, f2 = -fs / 8, fs / 4
        n = 16384
        hop_at = 8192
        k = np.arange(n)
        x = np.where(k < hop_at, np.exp(2j * np.pi * f1 / fs * k),
                     np.exp(2j * np.pi * f2 / fs * k))
        spec = spectrogram(IqSignal(x, fs), fft_len=256, hop=256, window="hann")
        ridge = spec.ridge_hz()
        is_f2 = np.abs(ridge - f2) < np.abs(ridge - f1)
        transition_frame = int(np.argmax(is_f2))
        expected = hop_at // 256
        assert abs(transition_frame - expected) <= 1

    def test_chirp_ridge_monotone(self):
        fs = 1e6
        n = 32768
        k = np.arange(n)
        f_inst = -fs / 4 + (fs / 2) * k / n
        phase = 2 * np.pi * np.cumsum(f_inst) / fs
        spec = spectrogram(IqSignal(np.exp(1j * phase), fs), fft_len=256, hop=256)
        ridge = spec.ridge_hz()
        assert np.all(np.diff(ridge) >= 0)

    def test_empty_signal_rejected(self):
        with pytest.raises(ValueError):
            spectrogram(IqSignal(np.zeros(0, dtype=complex), 1.0), 256, 64)


class TestPaprCcdf:
    def test_constant_envelope_step(self):
        sig = tone(1000.0, 1e6, n=4096)
        curve = papr_ccdf(sig, np.array([-3.0, -0.1, 0.1, 3.0]))
        assert curve.prob_exceed[0] == 1.0
        assert curve.prob_exceed[1] == 1.0
        assert curve.prob_exceed[2] == 0.0

    def test_two_level_signal(self):
        # half samples at power 2P, half at 0 -> mean P
        x = np.concatenate([np.full(500, math.sqrt(2.0)), np.zeros(500)]).astype(complex)
        curve = papr_ccdf(IqSignal(x, 1.0), np.array([0.5, 2.9, 3.1]))
        assert curve.prob_exceed[0] == 0.5
        assert curve.prob_exceed[1] == 0.5
        assert curve.prob_exceed[2] == 0.0

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero mean power"):
            papr_ccdf(IqSignal(np.zeros(16, dtype=complex), 1.0), np.array([0.0, 1.0]))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_monotonicity_property(self, seed):
        x = Rng(seed).complex_normal(2048)
        curve = papr_ccdf(IqSignal(x, 1.0), np.arange(-2.0, 10.0, 0.5))
        assert np.all(np.diff(curve.prob_exceed) <= 1e-15)

    def test_ofdm_ccdf_vs_independent_oracle(self):
        # Pipeline path: vlab.ofdm modulator. Oracle path: explicit DFT sum
        # with the same statistics, different code.
        from vlab.ofdm import OfdmConfig, ofdm_modulate

        cfg = OfdmConfig(fft_size=512, cp_len=64, n_active=256,
                         scheme=Scheme.QPSK, n_symbols=120, pilot=False)
        bits = Rng(99).bits(cfg.n_data_bits)
        sig = ofdm_modulate(bits, cfg)
        thresholds = np.arange(4.0, 12.01, 0.1)
        papr_pipeline = papr_ccdf(sig, thresholds).papr_at(1e-3)

        rng = Rng(170_000)
        qpsk = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)
        bins = np.concatenate([np.arange(-128, 0), np.arange(1, 129)])
        samples = []
        n = np.arange(512)
        for _ in range(120):
            vals = qpsk[rng.integers(0, 4, 256)]
            block = np.zeros(512, dtype=complex)
            for b, v in zip(bins, vals):
                block += v * np.exp(2j * np.pi * b * n / 512)
            samples.append(block / math.sqrt(256))
        oracle = IqSignal(np.concatenate(samples), 1.0)
        papr_oracle = papr_ccdf(oracle, thresholds).papr_at(1e-3)
        assert abs(papr_pipeline - papr_oracle) <= 0.3


class TestEvm:
    def test_identity_zero(self):
        ref = map_bits(Rng(0).bits(2000), Scheme.QPSK).symbols
        assert evm_rms(ref, ref) == 0.0

    def test_fixed_offset_ten_percent(self):
        ref = map_bits(Rng(1).bits(2000), Scheme.QPSK).symbols
        rx = ref + 0.1
        assert evm_rms(rx, ref) == pytest.approx(10.0, rel=1e-9)

    def test_awgn_snr_relation(self):
        # EVM% -> 100/sqrt(SNR_linear); 1e5 symbols at 20 dB -> 10% +/- 0.5%
        ref = map_bits(Rng(2).bits(200_000), Scheme.QPSK).symbols
        noisy = add_awgn(IqSignal(ref, 1.0), 20.0, Rng(3))
        evm = evm_rms(noisy.samples, ref)
        assert abs(evm - 10.0) < 0.5

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            evm_rms(np.ones(3), np.ones(4))


class TestEyeDiagram:
    def test_alternating_bpsk_traces_identical(self):
        sps = 8
        symbols = np.tile([1.0, -1.0], 64).astype(complex)
        up = np.repeat(symbols, sps)
        grid = eye_diagram(IqSignal(up, 1.0), sps)
        assert np.allclose(grid.traces, grid.traces[0])

    def test_rc_unity_rolloff_nyquist_centers(self):
        shape = PulseShape(PulseKind.RC, rolloff=1.0, span_symbols=16,
                           samples_per_symbol=8)
        stream = map_bits(Rng(5).bits(600), Scheme.BPSK)
        wave = pulse_shape(stream, shape)
        taps_peak_norm = True
        gd = group_delay_samples(shape)
        # scale so symbol instants sit at +-1 (unit-energy taps peak != 1)
        from vlab.shaping import design_filter
        peak = design_filter(shape).max()
        scaled = wave.with_samples(wave.samples / peak)
        grid = eye_diagram(scaled, 8, offset=gd - 8)
        guard = shape.span_symbols // 2  # filter ramp traces at both ends
        center = grid.traces[guard:-guard, 8]
        assert np.all(np.abs(np.abs(center) - 1.0) < 1e-3)

    def test_noise_closes_the_eye(self):
        from vlab.analysis import EyeGrid

        shape = PulseShape(PulseKind.RC, rolloff=1.0, span_symbols=16,
                           samples_per_symbol=8)
        stream = map_bits(Rng(6).bits(600), Scheme.BPSK)
        wave = pulse_shape(stream, shape)
        gd = group_delay_samples(shape)
        guard = shape.span_symbols // 2

        def opening(sig):
            grid = eye_diagram(sig, 8, offset=gd - 8)
            interior = EyeGrid(traces=grid.traces[guard:-guard],
                               samples_per_symbol=8, rail="i")
            return interior.opening_at_center()

        clean = opening(wave)
        noisy = opening(add_awgn(wave, 0.0, Rng(7)))
        assert noisy < clean

    def test_small_sps_rejected(self):
        with pytest.raises(ValueError):
            eye_diagram(IqSignal(np.ones(100, dtype=complex), 1.0), 1)


class TestMeasureBer:
    def test_identical(self):
        bits = Rng(1).bits(1000)
        assert measure_ber(bits, bits) == (0, 0.0)

    def test_complement(self):
        bits = Rng(2).bits(1000)
        errors, rate = measure_ber(bits, 1 - bits)
        assert (errors, rate) == (1000, 1.0)

    def test_single_flip(self):
        bits = Rng(3).bits(1000)
        rx = bits.copy()
        rx[123] ^= 1
        assert measure_ber(bits, rx) == (1, 0.001)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            measure_ber(np.zeros(3, dtype=int), np.zeros(4, dtype=int))
