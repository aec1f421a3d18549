"""Monte-Carlo NMSE sweeps over pilot overhead and SNR.

Every estimator in a cell sees the same truth, operator and observation.
Random streams are keyed so that scheduling never changes results:

* the channel of trial ``i`` depends only on ``(seed, i)``, so every cell
  of a sweep estimates the same set of channels;
* coders, operator and noise depend on ``(seed, T index, i)``; all SNR
  points of a ``(T, r)`` pair reuse one unit-variance noise draw scaled to
  the cell's noise level.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import antenna, baselines, channel, estimator, sensing
from .errors import ConfigError, PixelCEError, ZeroTruth

ESTIMATORS = ("ls", "lmmse", "omp", "gamp", "genie")
NOISELESS_SIGMA2 = 1e-12
RECORD_HEADER = ("estimator", "T", "r", "snr_db", "trial", "nmse", "runtime_ms", "iterations")
AGGREGATE_HEADER = ("estimator", "T", "snr_db", "nmse_db", "trials_ok")

_CHANNEL_STREAM, _PILOT_STREAM, _NOISE_STREAM = 1, 2, 3


def nmse(truth, estimate) -> float:
    """``||H - H_hat||_F^2 / ||H||_F^2``."""
    h = truth.h_v if isinstance(truth, channel.VirtualChannel) else np.asarray(truth)
    e = estimate.h_v if isinstance(estimate, channel.VirtualChannel) else np.asarray(estimate)
    if h.shape != e.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {e.shape}")
    denom = float(np.sum(np.abs(h) ** 2))
    if denom == 0.0:
        raise ZeroTruth("truth has zero Frobenius norm")
    return float(np.sum(np.abs(h - e) ** 2)) / denom


@dataclass(frozen=True)
class SweepConfig:
    """One experiment: a grid of ``(T, r)`` pairs times SNR points.

    ``r_values`` pairs with ``t_values`` element-wise; a single entry is
    broadcast and ``None`` or ``"auto"`` selects the rank automatically.
    ``network_z``/``network_eoc`` load a measured network instead of the
    synthetic one.  ``timing`` fills ``runtime_ms``; it is off by default so
    record files stay byte-identical across runs.
    """

    n: int = 16
    q: int = 39
    k: int = 72
    t_values: tuple = (10,)
    r_values: tuple | None = None
    snr_db_values: tuple = (20.0,)
    paths: int = 6
    trials: int = 100
    seed: int = 0
    estimators: tuple = ESTIMATORS
    power: float = 1.0
    pattern_rank: int = 9
    coupling: float = 4.0
    network_seed: int = 1
    network_z: str | None = None
    network_eoc: str | None = None
    los_boost_db: float = 24.0
    pool_size: int | None = None
    lmmse_prior_var: float = baselines.LMMSE_PRIOR_VAR
    omp_stop_coeff: float = 1.0
    timing: bool = False
    gamp: estimator.EstimatorConfig = field(default_factory=estimator.EstimatorConfig)

    def __post_init__(self):
        for name in ("t_values", "snr_db_values", "estimators"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        object.__setattr__(self, "t_values", tuple(int(t) for t in self.t_values))
        object.__setattr__(self, "snr_db_values", tuple(float(s) for s in self.snr_db_values))
        if self.r_values is not None:
            rv = (self.r_values,) if isinstance(self.r_values, (str, int)) else tuple(self.r_values)
            object.__setattr__(self, "r_values", tuple(v if v == "auto" else int(v) for v in rv))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if min(self.n, self.q, self.k, self.paths) < 1:
            raise ConfigError("n, q, k and paths must be >= 1")
        if not self.t_values or not self.snr_db_values or not self.estimators:
            raise ConfigError("t_values, snr_db_values and estimators must be nonempty")
        if len(set(self.t_values)) != len(self.t_values):
            raise ConfigError("t_values must be distinct")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("estimators must be distinct")
        if any(t < 1 for t in self.t_values):
            raise ConfigError("every T must be >= 1")
        if self.r_values is not None and len(self.r_values) not in (1, len(self.t_values)):
            raise ConfigError("r_values must have one entry or one per T")
        for t, r in self.pairs():
            if r != "auto" and not 1 <= r <= min(t, 2 * self.k):
                raise ConfigError(f"r={r} outside [1, min(T={t}, 2K={2 * self.k})]")
        if any(math.isnan(s) for s in self.snr_db_values):
            raise ConfigError("snr_db_values must not contain NaN")
        if (self.network_z is None) != (self.network_eoc is None):
            raise ConfigError("network_z and network_eoc must be given together")
        if self.power <= 0:
            raise ConfigError("power must be positive")

    def pairs(self) -> list[tuple[int, int | str]]:
        if self.r_values is None:
            rs = ["auto"] * len(self.t_values)
        elif len(self.r_values) == 1:
            rs = list(self.r_values) * len(self.t_values)
        else:
            rs = list(self.r_values)
        return list(zip(self.t_values, rs))

    def ordered_estimators(self) -> tuple[str, ...]:
        return tuple(e for e in ESTIMATORS if e in self.estimators)


@dataclass(frozen=True)
class Record:
    estimator: str
    t: int
    r: int
    snr_db: float
    trial: int
    nmse: float
    runtime_ms: float | None
    iterations: int


@dataclass(frozen=True)
class Aggregate:
    estimator: str
    t: int
    snr_db: float
    nmse_db: float
    trials_ok: int


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


@dataclass
class SweepResult:
    records: list[Record]
    aggregates: list[Aggregate]
    config: SweepConfig | None = None

    @property
    def failed(self) -> int:
        return sum(1 for rec in self.records if math.isnan(rec.nmse))

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for rec in self.records:
            w.writerow([rec.estimator, rec.t, rec.r, _fmt(rec.snr_db), rec.trial, _fmt(rec.nmse),
                        _fmt(rec.runtime_ms), rec.iterations])
        return buf.getvalue()

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for agg in self.aggregates:
            w.writerow([agg.estimator, agg.t, _fmt(agg.snr_db), _fmt(agg.nmse_db), agg.trials_ok])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = (os.path.join(out_dir, "records.csv"), os.path.join(out_dir, "aggregate.csv"))
        for path, text in zip(paths, (self.records_csv(), self.aggregates_csv())):
            with open(path, "w", encoding="ascii", newline="") as fh:
                fh.write(text)
        return paths

    def mean_nmse_db(self, estimator_name: str, t: int, snr_db: float) -> float:
        for agg in self.aggregates:
            if agg.estimator == estimator_name and agg.t == t and agg.snr_db == snr_db:
                return agg.nmse_db
        raise KeyError((estimator_name, t, snr_db))


def aggregate(records, estimator_order=ESTIMATORS) -> list[Aggregate]:
    """Mean NMSE per (estimator, T, SNR) in the linear domain, then dB; NaNs excluded."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.estimator, rec.t, rec.snr_db), []).append(rec.nmse)
    rank = {name: i for i, name in enumerate(estimator_order)}
    out = []
    for (name, t, snr), values in sorted(groups.items(), key=lambda kv: (rank.get(kv[0][0], 99), kv[0][1], kv[0][2])):
        ok = [v for v in values if not math.isnan(v)]
        mean = math.fsum(ok) / len(ok) if ok else float("nan")
        db = 10.0 * math.log10(mean) if ok and mean > 0 else (float("-inf") if ok else float("nan"))
        out.append(Aggregate(name, t, snr, db, len(ok)))
    return out


def build_network(cfg: SweepConfig) -> antenna.PixelNetwork:
    if cfg.network_z is not None:
        return antenna.load_network(cfg.network_z, cfg.network_eoc, cfg.q, cfg.k)
    return antenna.synth_network(cfg.q, cfg.k, cfg.network_seed, cfg.pattern_rank, coupling=cfg.coupling)


def _stream(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _run_estimator(name, y_tilde, op, sigma2, truth, cfg: SweepConfig):
    if name == "ls":
        return baselines.ls_estimate(y_tilde, op), 0
    if name == "lmmse":
        return baselines.lmmse_estimate(y_tilde, op, sigma2, cfg.lmmse_prior_var), 0
    if name == "omp":
        return baselines.omp_estimate(y_tilde, op, sigma2, stop_coeff=cfg.omp_stop_coeff), 0
    if name == "gamp":
        est, diag = estimator.run_mmp_gamp(y_tilde, op, sigma2, cfg.gamp)
        return est, diag.iterations
    if name == "genie":
        return baselines.genie_lmmse(y_tilde, op, sigma2, truth, cfg.gamp.var_floor), 0
    raise ConfigError(f"unknown estimator {name}")


def run_trial(cfg: SweepConfig, net, t_index: int, trial: int) -> list[Record]:
    """All SNR points and estimators of one ``(T, r)`` pair for one trial."""
    t, r_req = cfg.pairs()[t_index]
    names = cfg.ordered_estimators()
    bs = channel.dft_bs_array(cfg.n)
    records = []

    def nan_rows(r_val):
        return [Record(name, t, r_val, snr, trial, float("nan"), None, 0)
                for snr in cfg.snr_db_values for name in names]

    try:
        truth = channel.synth_channel(cfg.n, cfg.k, cfg.paths, _stream(cfg.seed, _CHANNEL_STREAM, trial),
                                      cfg.los_boost_db)
        coders = sensing.select_coders(net, t, cfg.pool_size, _stream(cfg.seed, _PILOT_STREAM, t_index, trial))
        op = sensing.build_operator(net, coders, cfg.power, r_req)
    except (PixelCEError, np.linalg.LinAlgError):
        return nan_rows(0 if r_req == "auto" else r_req)

    clean = channel.observe(truth, bs, op.patterns, cfg.power, 0.0, None).y_r
    noise_rng = _stream(cfg.seed, _NOISE_STREAM, t_index, trial)
    unit = (noise_rng.standard_normal(clean.shape) + 1j * noise_rng.standard_normal(clean.shape)) / np.sqrt(2)
    # the beamspace projection is unitary, so white noise stays white after it
    unit = bs.e_bs.conj() @ unit
    for snr in cfg.snr_db_values:
        sigma2 = channel.snr_db_to_sigma2(snr, cfg.power, cfg.n, cfg.k)
        obs = channel.PilotObservation(clean + np.sqrt(sigma2) * unit, cfg.power, sigma2, snr)
        y_tilde = sensing.project_observation(obs, op)
        sigma2_est = max(sigma2, NOISELESS_SIGMA2)
        for name in names:
            start = time.perf_counter()
            try:
                est, iters = _run_estimator(name, y_tilde, op, sigma2_est, truth, cfg)
                value = nmse(truth, est)
            except (PixelCEError, np.linalg.LinAlgError, FloatingPointError):
                value, iters = float("nan"), 0
            elapsed = (time.perf_counter() - start) * 1e3 if cfg.timing else None
            records.append(Record(name, t, op.rank_r, snr, trial, value, elapsed, int(iters)))
    return records


def run_sweep(cfg: SweepConfig, threads: int = 1, log=None) -> SweepResult:
    """Run every cell; results are ordered by (T, SNR, trial, estimator) regardless of ``threads``."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    net = build_network(cfg)
    tasks = [(ti, tr) for ti in range(len(cfg.t_values)) for tr in range(cfg.trials)]
    if threads == 1:
        results = [run_trial(cfg, net, ti, tr) for ti, tr in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: run_trial(cfg, net, *job), tasks))
    by_task = dict(zip(tasks, results))
    order = {name: i for i, name in enumerate(ESTIMATORS)}
    snr_rank = {s: i for i, s in enumerate(cfg.snr_db_values)}
    records = []
    for ti in range(len(cfg.t_values)):
        block = [rec for tr in range(cfg.trials) for rec in by_task[(ti, tr)]]
        block.sort(key=lambda rec: (snr_rank[rec.snr_db], rec.trial, order[rec.estimator]))
        records.extend(block)
        if log is not None:
            log(f"T={cfg.t_values[ti]}: {cfg.trials} trials x {len(cfg.snr_db_values)} SNR points done")
    return SweepResult(records, aggregate(records), cfg)
