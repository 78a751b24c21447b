"""Framing, overlap-add, STFT planes, RMS normalization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arn import dsp, tensor
from arn.dsp import (
    DegenerateSignalError,
    StftConfig,
    frame_signal,
    overlap_add,
    rms_normalize,
    stft_parts,
)
from arn.tensor import Tensor

from gradtools import check_grads, finite_diff


class TestFrameSignal:
    def test_short_signal_padding(self):
        x = np.arange(1.0, 8.0)  # M=7
        fm = frame_signal(x, frame_len=4, shift=2)
        assert fm.num_frames == 4  # ceil(7/2)
        np.testing.assert_array_equal(fm.frames.data[3], [7.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(fm.frames.data[0], [1.0, 2.0, 3.0, 4.0])

    def test_frame_count_at_four_seconds(self):
        fm = frame_signal(np.zeros(64000), frame_len=512, shift=32)
        assert fm.num_frames == 2000

    def test_no_overlap_partitions_signal(self):
        x = np.random.default_rng(0).standard_normal(50)
        fm = frame_signal(x, frame_len=8, shift=8)
        flat = fm.frames.data.reshape(-1)
        np.testing.assert_array_equal(flat[:50], x)
        np.testing.assert_array_equal(flat[50:], np.zeros(6))

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            frame_signal(np.zeros(10), frame_len=4, shift=8)  # J > L
        with pytest.raises(ValueError):
            frame_signal(np.zeros(10), frame_len=0, shift=0)
        with pytest.raises(ValueError):
            frame_signal(np.zeros(0), frame_len=4, shift=2)

    def test_row_depends_only_on_past_span(self):
        # changing samples at or beyond t*J + L must leave rows <= t intact
        rng = np.random.default_rng(1)
        x = rng.standard_normal(40)
        t, l, j = 3, 8, 4
        y = x.copy()
        y[t * j + l:] = rng.standard_normal(y[t * j + l:].shape)
        a = frame_signal(x, l, j).frames.data
        b = frame_signal(y, l, j).frames.data
        np.testing.assert_array_equal(a[: t + 1], b[: t + 1])


class TestOverlapAdd:
    @pytest.mark.parametrize("frame_len,shift", [(256, 32), (512, 32), (256, 256)])
    def test_round_trip(self, frame_len, shift):
        x = np.random.default_rng(2).standard_normal(1000).astype(np.float32)
        back = overlap_add(frame_signal(x, frame_len, shift))
        assert back.data.shape == x.shape
        assert np.max(np.abs(back.data - x)) <= 1e-6

    def test_no_overlap_identity(self):
        x = np.random.default_rng(3).standard_normal(64)
        back = overlap_add(frame_signal(x, 16, 16))
        np.testing.assert_array_equal(back.data, x)

    def test_zero_frames_give_zero_signal(self):
        fm = frame_signal(np.ones(30), 8, 4)
        fm.frames = Tensor(np.zeros_like(fm.frames.data))
        np.testing.assert_array_equal(overlap_add(fm).data, np.zeros(30))

    def test_offset_shifts_landing_positions(self):
        fm = frame_signal(np.ones(12), 4, 4)
        out = overlap_add(fm, offset=2)
        # first two samples are covered by no frame
        np.testing.assert_array_equal(out.data[:2], [0.0, 0.0])
        np.testing.assert_array_equal(out.data[2:], np.ones(10))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 300), st.integers(0, 2 ** 31 - 1))
    def test_round_trip_property(self, shift, m, seed):
        rng = np.random.default_rng(seed)
        frame_len = shift + int(rng.integers(0, 64))
        x = rng.standard_normal(m)
        back = overlap_add(frame_signal(x, frame_len, shift))
        np.testing.assert_allclose(back.data, x, atol=1e-9)


class TestStftParts:
    def test_dc_bin_with_rectangular_window(self):
        cfg = StftConfig(fft_size=64, win_len=64, hop=64, window="rect")
        c = 0.75
        parts = stft_parts(np.full(64, c), cfg)
        assert parts.real.shape == (1, 33)
        assert parts.real.data[0, 0] == pytest.approx(c * 64)
        np.testing.assert_allclose(parts.real.data[0, 1:], 0.0, atol=1e-9)
        np.testing.assert_allclose(parts.imag.data[0], 0.0, atol=1e-9)

    def test_matches_numpy_rfft(self):
        cfg = StftConfig(fft_size=64, win_len=48, hop=16)
        x = np.random.default_rng(4).standard_normal(100)
        parts = stft_parts(x, cfg)
        frames = dsp.frame_signal(x, cfg.win_len, cfg.hop).frames.data
        win = dsp._window_array(cfg, np.float64)
        ref = np.fft.rfft(frames * win, n=cfg.fft_size, axis=1)
        np.testing.assert_allclose(parts.real.data, ref.real, atol=1e-9)
        np.testing.assert_allclose(parts.imag.data, ref.imag, atol=1e-9)

    def test_parseval_energy(self):
        cfg = StftConfig(fft_size=128, win_len=128, hop=64)
        x = np.random.default_rng(5).standard_normal(512)
        parts = stft_parts(x, cfg)
        power = parts.real.data ** 2 + parts.imag.data ** 2
        # full-spectrum energy: interior bins appear twice in the real DFT
        weights = np.full(cfg.num_bins, 2.0)
        weights[0] = 1.0
        weights[-1] = 1.0
        spectral = (power * weights).sum()
        frames = dsp.frame_signal(x, cfg.win_len, cfg.hop).frames.data
        win = dsp._window_array(cfg, np.float64)
        temporal = cfg.fft_size * ((frames * win) ** 2).sum()
        assert abs(spectral - temporal) / temporal < 1e-4

    def test_linearity(self):
        cfg = StftConfig(fft_size=32, win_len=32, hop=16)
        rng = np.random.default_rng(6)
        x, y = rng.standard_normal(80), rng.standard_normal(80)
        a, b = 1.7, -0.3
        combined = stft_parts(a * x + b * y, cfg)
        sx, sy = stft_parts(x, cfg), stft_parts(y, cfg)
        np.testing.assert_allclose(
            combined.real.data, a * sx.real.data + b * sy.real.data, atol=1e-6)
        np.testing.assert_allclose(
            combined.imag.data, a * sx.imag.data + b * sy.imag.data, atol=1e-6)

    def test_gradients_flow_to_signal(self):
        cfg = StftConfig(fft_size=16, win_len=16, hop=8)
        s = Tensor(np.random.default_rng(7).standard_normal(64), requires_grad=True)
        wr = np.random.default_rng(8).standard_normal((8, 9))
        wi = np.random.default_rng(9).standard_normal((8, 9))

        def build():
            parts = stft_parts(s, cfg)
            return tensor.sum_all(tensor.mul(parts.real, Tensor(wr))) + \
                tensor.sum_all(tensor.mul(parts.imag, Tensor(wi)))

        tensor.backward(build())

        def f():
            with tensor.no_grad():
                return build().item()

        assert check_grads([s.grad], finite_diff(f, [s.data])) < 1e-5

    def test_empty_signal_rejected(self):
        with pytest.raises(ValueError):
            stft_parts(np.zeros(0), StftConfig())


class TestRmsNormalize:
    def test_gain_doubles_half_rms(self):
        x = np.full(100, 0.5)
        xn, _, gain = rms_normalize(x, x.copy())
        assert gain == pytest.approx(2.0)
        assert dsp.rms(xn) == pytest.approx(1.0)

    def test_snr_between_pair_unchanged(self):
        rng = np.random.default_rng(10)
        s = rng.standard_normal(500)
        n = 0.3 * rng.standard_normal(500)
        x = s + n
        before = np.dot(s, s) / np.dot(n, n)
        xn, sn, gain = rms_normalize(x, s)
        nn = xn - sn
        after = np.dot(sn, sn) / np.dot(nn, nn)
        assert after == pytest.approx(before, rel=1e-9)

    def test_unit_rms_is_identity(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(1000)
        x /= dsp.rms(x)
        xn, cn, gain = rms_normalize(x, x.copy())
        assert gain == pytest.approx(1.0)
        np.testing.assert_allclose(xn, x)

    def test_silent_signal_rejected(self):
        with pytest.raises(DegenerateSignalError):
            rms_normalize(np.zeros(10), np.ones(10))
