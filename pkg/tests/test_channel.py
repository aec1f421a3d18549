import numpy as np
import pytest
from hypothesis import given, strategies as st

from pixelce import channel
from pixelce.channel import PilotObservation, VirtualChannel
from pixelce.errors import ShapeMismatch, TooManyPaths

from conftest import crandn


class TestSynthChannel:
    def test_single_path(self):
        hv = channel.synth_channel(4, 3, 1, seed=0)
        assert np.count_nonzero(hv.h_v) == 1
        assert abs(np.linalg.norm(hv.h_v) - 1) < 1e-12

    def test_full_size_count_and_norm(self):
        hv = channel.synth_channel(16, 72, 6, seed=3)
        assert hv.h_v.shape == (16, 144)
        assert np.count_nonzero(hv.h_v) == 6 == len(hv.support)
        assert abs(np.linalg.norm(hv.h_v) - 1) < 1e-12
        assert all(abs(hv.h_v[r, c]) > 0 for r, c in hv.support)

    def test_dominant_boost(self):
        ratios = []
        for seed in range(100):
            h = np.abs(channel.synth_channel(16, 72, 6, seed=seed).h_v.ravel()) ** 2
            h = np.sort(h[h > 0])
            ratios.append(h[-1] / np.mean(h[:-1]))
        # the boost is set against the realized scattered mean, so every draw lands on it
        assert np.median(ratios) >= 10 ** 2.4 * 0.8
        assert np.mean(np.abs(np.array(ratios) / 10 ** 2.4 - 1) < 0.2) >= 0.95

    def test_deterministic(self):
        a = channel.synth_channel(8, 5, 4, seed=9)
        b = channel.synth_channel(8, 5, 4, seed=9)
        assert np.array_equal(a.h_v, b.h_v) and a.support == b.support

    def test_balanced_polarizations(self):
        theta = phi = 0.0
        for seed in range(400):
            h = channel.synth_channel(4, 6, 3, seed=seed, los_boost_db=0.0).h_v
            theta += np.sum(np.abs(h[:, :6]) ** 2)
            phi += np.sum(np.abs(h[:, 6:]) ** 2)
        assert abs(theta / phi - 1) < 0.15

    def test_too_many_paths(self):
        with pytest.raises(TooManyPaths):
            channel.synth_channel(2, 2, 9, seed=0)

    def test_support_mask(self):
        hv = channel.synth_channel(4, 4, 3, seed=2)
        assert np.array_equal(hv.support_mask(), hv.h_v != 0)

    def test_rejects_odd_columns(self):
        with pytest.raises(ShapeMismatch):
            VirtualChannel(np.zeros((2, 3)))


class TestBsArray:
    def test_scalar(self):
        np.testing.assert_allclose(channel.dft_bs_array(1).e_bs, [[1.0]])

    @pytest.mark.parametrize("n", [2, 5, 16])
    def test_unitary(self, n):
        e = channel.dft_bs_array(n).e_bs
        np.testing.assert_allclose(e.conj().T @ e, np.eye(n), atol=1e-12)

    def test_rows_orthogonal(self):
        e = channel.dft_bs_array(4).e_bs
        assert abs(np.vdot(e[1], e[2])) < 1e-14


class TestObserve:
    def test_identity_sensing_noiseless(self):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        obs = channel.observe(hv, channel.dft_bs_array(4), np.eye(6), 1.0, 0.0, seed=0)
        np.testing.assert_allclose(obs.y_r, hv.h_v, atol=1e-14)

    def test_power_scaling(self, rng):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        pats = crandn(rng, 6, 5)
        obs = channel.observe(hv, channel.dft_bs_array(4), pats, 4.0, 0.0, seed=0)
        np.testing.assert_allclose(obs.y_r, 2 * hv.h_v @ pats, atol=1e-13)

    def test_noise_variance(self, rng):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        pats = crandn(rng, 6, 2500)
        obs = channel.observe(hv, channel.dft_bs_array(4), pats, 1.0, 0.1, seed=5)
        noise = obs.y_r - hv.h_v @ pats
        assert noise.size == 10 ** 4
        assert abs(np.mean(np.abs(noise) ** 2) / 0.1 - 1) < 0.03
        # circular symmetry: real and imaginary parts share the variance
        assert abs(np.var(noise.real) / np.var(noise.imag) - 1) < 0.06

    def test_projection_lossless(self, rng):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        bs = channel.dft_bs_array(4)
        pats = crandn(rng, 6, 7)
        obs = channel.observe(hv, bs, pats, 1.0, 0.0, seed=0)
        y = bs.e_bs.T @ obs.y_r
        np.testing.assert_allclose(y, bs.e_bs.T @ hv.h_v @ pats, atol=1e-10)

    def test_deterministic(self, rng):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        pats = crandn(rng, 6, 4)
        a = channel.observe(hv, channel.dft_bs_array(4), pats, 1.0, 0.3, seed=2)
        b = channel.observe(hv, channel.dft_bs_array(4), pats, 1.0, 0.3, seed=2)
        assert np.array_equal(a.y_r, b.y_r)

    def test_shape_mismatch(self):
        hv = channel.synth_channel(4, 3, 2, seed=1)
        with pytest.raises(ShapeMismatch):
            channel.observe(hv, channel.dft_bs_array(4), np.eye(5), 1.0, 0.0, 0)
        with pytest.raises(ShapeMismatch):
            channel.observe(hv, channel.dft_bs_array(3), np.eye(6), 1.0, 0.0, 0)

    def test_negative_sigma2(self):
        with pytest.raises(ValueError):
            PilotObservation(np.zeros((2, 2)), 1.0, -1.0)


class TestSnrBookkeeping:
    @given(st.floats(-30, 60), st.floats(0.1, 10), st.integers(1, 32), st.integers(1, 80))
    def test_round_trip(self, snr, power, n, k):
        s2 = channel.snr_db_to_sigma2(snr, power, n, k)
        assert abs(channel.sigma2_to_snr_db(s2, power, n, k) - snr) < 1e-12 * max(1, abs(snr))

    def test_per_slot_snr_matches_monte_carlo(self, rng):
        n, k, t, p = 8, 6, 4000, 2.0
        hv = channel.synth_channel(n, k, 4, seed=3)
        pats = crandn(rng, 2 * k, t)
        pats /= np.linalg.norm(pats, axis=0)
        s2 = channel.snr_db_to_sigma2(10.0, p, n, k)
        signal = p * np.mean(np.sum(np.abs(hv.h_v @ pats) ** 2, axis=0))
        assert abs(10 * np.log10(signal / (n * s2)) - 10.0) < 0.3

    def test_noiseless(self):
        assert channel.snr_db_to_sigma2(np.inf, 1.0, 4, 4) == 0.0
        assert channel.sigma2_to_snr_db(0.0, 1.0, 4, 4) == np.inf


class TestChannelIO:
    def test_round_trip(self, tmp_path):
        hv = channel.synth_channel(4, 3, 3, seed=4)
        channel.save_channel(tmp_path / "h.txt", hv, tmp_path / "s.txt")
        back = channel.load_channel(tmp_path / "h.txt", tmp_path / "s.txt", n=4, k=3)
        assert np.array_equal(back.h_v, hv.h_v) and back.support == hv.support

    def test_support_out_of_range(self, tmp_path):
        from pixelce import matio
        from pixelce.errors import MatrixFormatError
        matio.save_matrix(tmp_path / "h.txt", np.zeros((2, 4)))
        matio.save_support(tmp_path / "s.txt", [(5, 0)])
        with pytest.raises(MatrixFormatError):
            channel.load_channel(tmp_path / "h.txt", tmp_path / "s.txt")
