import csv
import io
import math

import numpy as np
import pytest

from pixelce import bench, channel
from pixelce.bench import Record, SweepConfig
from pixelce.errors import ConfigError, ZeroTruth

SMALL = dict(n=4, q=12, k=6, t_values=(6,), r_values=(6,), paths=3, pattern_rank=6,
             snr_db_values=(10.0, 25.0), trials=6)


class TestNMSE:
    def test_examples(self):
        hv = channel.synth_channel(4, 3, 2, seed=0)
        assert bench.nmse(hv, hv) == 0
        assert bench.nmse(hv, np.zeros_like(hv.h_v)) == pytest.approx(1.0)
        assert bench.nmse(hv, 2 * hv.h_v) == pytest.approx(1.0)

    def test_zero_truth(self):
        with pytest.raises(ZeroTruth):
            bench.nmse(np.zeros((2, 2)), np.ones((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bench.nmse(np.ones((2, 2)), np.ones((2, 4)))


class TestSweepConfig:
    def test_default_dimensions(self):
        cfg = SweepConfig()
        assert (cfg.n, cfg.q, cfg.k, cfg.trials) == (16, 39, 72, 100)

    def test_r_broadcast_and_auto(self):
        assert SweepConfig(t_values=(6, 10), r_values=(4,)).pairs() == [(6, 4), (10, 4)]
        assert SweepConfig(t_values=(6,)).pairs() == [(6, "auto")]

    @pytest.mark.parametrize("kw", [dict(trials=0), dict(t_values=()), dict(estimators=("bogus",)),
                                    dict(t_values=(4,), r_values=(5,)), dict(t_values=(4, 4)),
                                    dict(t_values=(4, 6), r_values=(1, 2, 3)),
                                    dict(snr_db_values=(float("nan"),)), dict(network_z="z.txt")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SweepConfig(**kw)


class TestAggregate:
    def test_mean_then_db(self):
        recs = [Record("ls", 4, 2, 0.0, i, v, None, 0) for i, v in enumerate([0.1, 0.3, float("nan")])]
        (agg,) = bench.aggregate(recs)
        assert agg.trials_ok == 2
        assert agg.nmse_db == pytest.approx(10 * math.log10(0.2), abs=1e-12)

    def test_recompute_from_records(self):
        res = bench.run_sweep(SweepConfig(**SMALL))
        rows = list(csv.DictReader(io.StringIO(res.records_csv())))
        for agg in csv.DictReader(io.StringIO(res.aggregates_csv())):
            vals = [float(r["nmse"]) for r in rows if r["estimator"] == agg["estimator"]
                    and r["T"] == agg["T"] and r["snr_db"] == agg["snr_db"]]
            assert len(vals) == int(agg["trials_ok"]) == SMALL["trials"]
            assert abs(10 * math.log10(math.fsum(vals) / len(vals)) - float(agg["nmse_db"])) < 1e-12


class TestRunSweep:
    def test_noiseless_ls_exact(self):
        cfg = SweepConfig(n=4, q=16, k=6, t_values=(16,), r_values=(12,), pattern_rank=12, paths=3,
                          snr_db_values=(float("inf"),), trials=1, estimators=("ls",))
        res = bench.run_sweep(cfg)
        assert len(res.records) == 1 and res.records[0].nmse < 1e-10

    def test_csv_layout(self):
        res = bench.run_sweep(SweepConfig(**SMALL))
        lines = res.records_csv().splitlines()
        assert lines[0] == ",".join(bench.RECORD_HEADER)
        assert len(lines) == 1 + 2 * 6 * 5
        assert res.aggregates_csv().splitlines()[0] == ",".join(bench.AGGREGATE_HEADER)
        assert all(rec.nmse >= 0 for rec in res.records)
        assert all(rec.runtime_ms is None for rec in res.records)

    def test_timing_opt_in(self):
        res = bench.run_sweep(SweepConfig(**{**SMALL, "trials": 1, "timing": True}))
        assert all(rec.runtime_ms is not None and rec.runtime_ms >= 0 for rec in res.records)

    def test_byte_identical_across_threads(self, tmp_path):
        cfg = SweepConfig(**SMALL)
        a = bench.run_sweep(cfg, threads=1)
        b = bench.run_sweep(cfg, threads=3)
        assert a.records_csv() == b.records_csv()
        assert a.aggregates_csv() == b.aggregates_csv()
        a.write(tmp_path / "a")
        b.write(tmp_path / "b")
        for name in ("records.csv", "aggregate.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_results(self):
        a = bench.run_sweep(SweepConfig(**SMALL))
        b = bench.run_sweep(SweepConfig(**{**SMALL, "seed": 5}))
        assert a.records_csv() != b.records_csv()

    def test_paired_cells_share_channels(self, monkeypatch):
        seen = {}
        real = bench._run_estimator

        def spy(name, y_tilde, op, sigma2, truth, cfg):
            seen.setdefault(sigma2, {})[name] = (truth.h_v.copy(), op.e_eff.copy())
            return real(name, y_tilde, op, sigma2, truth, cfg)

        monkeypatch.setattr(bench, "_run_estimator", spy)
        bench.run_sweep(SweepConfig(**{**SMALL, "trials": 1}))
        cells = list(seen.values())
        ref_h, ref_e = cells[0]["ls"]
        for cell in cells:
            for h, e in cell.values():
                assert np.array_equal(h, ref_h) and np.array_equal(e, ref_e)

    def test_failures_become_nan(self, monkeypatch):
        from pixelce.errors import NumericalFailure

        def boom(*args):
            raise NumericalFailure("forced")

        monkeypatch.setattr(bench, "_run_estimator", boom)
        res = bench.run_sweep(SweepConfig(**{**SMALL, "trials": 2}))
        assert res.failed == len(res.records)
        assert all(agg.trials_ok == 0 for agg in res.aggregates)

    def test_halving_noise_helps(self):
        cfg = SweepConfig(**{**SMALL, "snr_db_values": (20.0, 20.0 + 10 * math.log10(2)),
                             "trials": 100, "estimators": ("gamp",)})
        res = bench.run_sweep(cfg)
        full = np.mean([r.nmse for r in res.records if r.snr_db == 20.0])
        half = np.mean([r.nmse for r in res.records if r.snr_db != 20.0])
        assert half <= 1.05 * full

    def test_log_lines(self):
        lines = []
        bench.run_sweep(SweepConfig(**{**SMALL, "trials": 1, "t_values": (6, 8)}), log=lines.append)
        assert len(lines) == 2 and lines[0].startswith("T=6")
