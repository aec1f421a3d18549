import itertools

import numpy as np
import pytest

from pixelce import baselines, bench, channel
from pixelce import estimator as est
from pixelce.channel import VirtualChannel

from conftest import crandn
from test_estimator import small_instance


class TestLS:
    def test_invertible_exact(self, rng):
        e, h = crandn(rng, 6, 6), crandn(rng, 3, 6)
        np.testing.assert_allclose(baselines.ls_estimate(h @ e.T, e).h_v, h, atol=1e-10)

    def test_minimum_norm_on_rank_one(self):
        e = np.array([[1.0, 0.0], [0.0, 0.0]])
        out = baselines.ls_estimate(np.array([[3.0, 0.0]]), e)
        np.testing.assert_allclose(out.h_v, [[3.0, 0.0]], atol=1e-14)

    def test_residual_orthogonal_to_row_space(self, rng):
        e = crandn(rng, 8, 3) @ crandn(rng, 3, 12)
        e = e[:5]
        y = crandn(rng, 4, 5)
        h = baselines.ls_estimate(y, e).h_v
        res = y - h @ e.T
        assert np.max(np.abs(res @ e.conj())) < 1e-9

    def test_equals_lmmse_with_huge_prior(self, rng):
        e, y = crandn(rng, 10, 6), crandn(rng, 3, 10)
        ls = baselines.ls_estimate(y, e).h_v
        lm = baselines.lmmse_estimate(y, e, 1.0, prior_var=1e9).h_v
        np.testing.assert_allclose(lm, ls, atol=1e-6)


class TestLMMSE:
    def test_default_prior(self):
        assert baselines.LMMSE_PRIOR_VAR == 0.008

    def test_vanishing_prior(self, rng):
        out = baselines.lmmse_estimate(crandn(rng, 2, 4), crandn(rng, 4, 6), 0.1, prior_var=1e-14)
        assert np.max(np.abs(out.h_v)) < 1e-10

    def test_identity_halves(self, rng):
        y = crandn(rng, 3, 4)
        np.testing.assert_allclose(baselines.lmmse_estimate(y, np.eye(4), 0.008).h_v, y / 2, atol=1e-12)

    def test_rejects_nonpositive_prior(self):
        with pytest.raises(ValueError):
            baselines.lmmse_estimate(np.zeros((1, 2)), np.eye(2), 1.0, prior_var=0)


class TestOMP:
    def test_identity_spike(self):
        y = np.zeros(6, complex)
        y[4] = 2 - 1j
        h, sup = baselines.omp_row(y, np.eye(6), 0.0)
        assert sup == (4,)
        np.testing.assert_allclose(h, y, atol=1e-14)

    def test_zero_input(self):
        h, sup = baselines.omp_row(np.zeros(4), np.ones((4, 6)), 0.1)
        assert sup == () and np.all(h == 0)

    def test_matches_exhaustive_pairs(self):
        # partial 12-point DFT with coherence 1/4, below the 1/3 OMP recovery bound for two atoms
        rows = [0, 2, 3, 4, 5, 6, 9, 10]
        dft = np.exp(-2j * np.pi * np.outer(rows, np.arange(12)) / 12) / np.sqrt(8)
        rng = np.random.default_rng(21)
        for _ in range(30):
            mix = np.linalg.qr(crandn(rng, 8, 8))[0]
            e = mix @ dft * np.exp(2j * np.pi * rng.random(12))
            truth = np.zeros(12, complex)
            truth[rng.choice(12, 2, replace=False)] = crandn(rng, 2) + 1.0
            y = e @ truth
            h, sup = baselines.omp_row(y, e, 0.0, max_sparsity=2)

            def ls_res(pair):
                a = e[:, list(pair)]
                return np.linalg.norm(y - a @ np.linalg.lstsq(a, y, rcond=None)[0])

            best = min(itertools.combinations(range(12), 2), key=ls_res)
            assert tuple(sorted(sup)) == best
            np.testing.assert_allclose(h, truth, atol=1e-9)

    def test_stops_at_noise_level(self, rng):
        e = crandn(rng, 8, 12)
        y = e[:, 3] * 5 + 0.01 * crandn(rng, 8)
        _, sup = baselines.omp_row(y, e, 0.01 ** 2, stop_coeff=3.0)
        assert sup == (3,)

    def test_sparsity_budget(self, rng):
        with pytest.raises(ValueError):
            baselines.omp_row(crandn(rng, 4), crandn(rng, 4, 6), 0.1, max_sparsity=5)


class TestGenie:
    def test_empty_row(self, rng):
        truth = VirtualChannel(np.zeros((2, 6), complex))
        out = baselines.genie_lmmse(crandn(rng, 2, 4), crandn(rng, 4, 6), 0.1, truth)
        assert np.all(out.h_v == 0)

    def test_noiseless_exact(self, rng):
        hv = channel.synth_channel(3, 3, 3, seed=2)
        e = crandn(rng, 6, 6)
        out = baselines.genie_lmmse(hv.h_v @ e.T, e, 1e-14, hv)
        np.testing.assert_allclose(out.h_v, hv.h_v, atol=1e-7)

    def test_bounds_mmp_gamp_on_average(self):
        genie, gamp = [], []
        for trial in range(200):
            hv, op, yt, s2 = small_instance(trial, snr_db=20.0)
            genie.append(bench.nmse(hv, baselines.genie_lmmse(yt, op, s2, hv)))
            gamp.append(bench.nmse(hv, est.run_mmp_gamp(yt, op, s2)[0]))
        assert np.mean(genie) <= np.mean(gamp)


class TestDeterminism:
    def test_all_baselines_repeat(self):
        hv, op, yt, s2 = small_instance(1)
        for fn in (lambda: baselines.ls_estimate(yt, op), lambda: baselines.lmmse_estimate(yt, op, s2),
                   lambda: baselines.omp_estimate(yt, op, s2),
                   lambda: baselines.genie_lmmse(yt, op, s2, hv)):
            assert np.array_equal(fn().h_v, fn().h_v)
