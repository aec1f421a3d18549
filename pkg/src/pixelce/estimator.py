"""MMP-initialized two-module message passing with EM-learned Bernoulli-Gaussian priors.

Each row ``y_n = E h_n + noise`` of the projected observation is estimated
independently:

* Module A fuses a diagonal Gaussian prior with the linear measurement
  (LMMSE, covariance diagonalized);
* Module B fuses the Module A extrinsic message with a Bernoulli-Gaussian
  prior on every entry of the row;
* modules exchange extrinsic messages (Gaussian division) with damping, and
  the BG hyperparameters are re-estimated by EM after every Module B pass;
* the first Module A prior and the BG hyperparameters come from a
  multipath-matching-pursuit search over candidate supports.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .channel import VirtualChannel
from .errors import NumericalFailure, ShapeMismatch
from .sensing import SensingOperator

VAR_FLOOR = 1e-12
VAR_CAP = 1e6
LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1.0 - 1e-6
EMPTY_SIGNAL_TOL = 1e-14
LAMBDA_INIT_RULES = ("support", "energy")


@dataclass(frozen=True)
class GaussianMessage:
    """Mean vector with a diagonal covariance."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex).reshape(-1)
        var = np.broadcast_to(np.asarray(self.var, dtype=float), mean.shape).copy()
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)


@dataclass(frozen=True)
class BGParams:
    lam: float
    theta: complex
    phi: float

    def clamped(self, lam_min=LAMBDA_MIN, lam_max=LAMBDA_MAX, phi_min=VAR_FLOOR) -> "BGParams":
        return BGParams(float(np.clip(self.lam, lam_min, lam_max)), complex(self.theta),
                        float(max(self.phi, phi_min)))


@dataclass(frozen=True)
class EstimatorConfig:
    """Iteration, search and prior settings.

    ``mmp_pairs`` seeds the support search with the ``mmp_beam`` best column
    pairs found by exhaustive search.  ``lambda_init`` picks the initial sparsity rate: ``"support"`` uses
    ``|S*| / 2K``, ``"energy"`` the fraction of ``||y||^2`` explained by the
    MMP fit.  A row whose residual energy at any iteration exceeds
    ``divergence_factor`` times ``max(MMP residual energy, r sigma2)`` is
    treated as diverged and falls back to the MMP estimate.
    """

    max_iters: int = 50
    tol: float = 1e-6
    damping: float = 0.7
    mmp_branch: int = 12
    mmp_depth: int = 8
    mmp_beam: int = 12
    mmp_pairs: bool = True
    beta_coeff: float = 8.0
    lambda_init: str = "support"
    divergence_factor: float = 10.0
    var_floor: float = VAR_FLOOR
    var_cap: float = VAR_CAP
    lambda_min: float = LAMBDA_MIN
    lambda_max: float = LAMBDA_MAX
    em_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        for name in ("max_iters", "mmp_branch", "mmp_depth", "mmp_beam"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.tol <= 0 or self.beta_coeff < 0 or self.var_floor <= 0 or self.var_cap <= 0:
            raise ValueError("tolerances, floors and caps must be positive")
        if self.lambda_init not in LAMBDA_INIT_RULES:
            raise ValueError(f"lambda_init must be one of {LAMBDA_INIT_RULES}")
        if self.divergence_factor <= 1.0:
            raise ValueError("divergence_factor must exceed 1")
        if not 0.0 < self.lambda_min < self.lambda_max < 1.0:
            raise ValueError("need 0 < lambda_min < lambda_max < 1")


def module_a_posterior(prior: GaussianMessage, y_n, e_eff, sigma2: float,
                       var_floor: float = VAR_FLOOR) -> GaussianMessage:
    """LMMSE fusion of ``prior`` with ``y_n = e_eff h + CN(0, sigma2 I)``.

    Posterior covariance ``(diag(prior.var)^-1 + E^H E / sigma2)^-1`` is
    reduced to its diagonal.
    """
    y_n = np.asarray(y_n, dtype=complex)
    e_eff = np.asarray(e_eff, dtype=complex)
    if e_eff.shape != (y_n.size, prior.mean.size):
        raise ShapeMismatch(f"e_eff {e_eff.shape} vs y {y_n.shape} and prior {prior.mean.shape}")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    try:
        mean, var = K.module_a(prior.mean, np.maximum(prior.var, var_floor), y_n, e_eff,
                               float(sigma2), float(var_floor))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Module A solve failed: {exc}") from exc
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
        raise NumericalFailure("Module A produced non-finite moments")
    return GaussianMessage(mean, var)


def extrinsic(posterior: GaussianMessage, prior: GaussianMessage, var_cap: float = VAR_CAP,
              damping: float = 1.0, previous: GaussianMessage | None = None) -> GaussianMessage:
    """Divide ``prior`` out of ``posterior``; optionally damp against ``previous``.

    Entries with non-positive precision difference carry no information and
    are set to variance ``var_cap`` with the posterior mean.
    """
    mean, var = K.extrinsic(posterior.mean, posterior.var, prior.mean, prior.var, float(var_cap))
    if previous is not None and damping < 1.0:
        mean = damping * mean + (1.0 - damping) * previous.mean
        var = damping * var + (1.0 - damping) * previous.var
    return GaussianMessage(mean, var)


def module_b_posterior(prior: GaussianMessage, bg: BGParams, var_floor: float = VAR_FLOOR):
    """Bernoulli-Gaussian denoiser.

    Returns ``(posterior, pi, tau, nu)`` where ``pi`` is the per-entry
    activity probability and ``(tau, nu)`` the mean/variance of the active
    component's posterior.
    """
    mean, var, pi, tau, nu = K.bg_denoise(prior.mean, np.maximum(prior.var, var_floor),
                                          float(bg.lam), complex(bg.theta), float(bg.phi),
                                          float(var_floor))
    return GaussianMessage(mean, var), pi, tau, nu


def em_update(pi, tau, nu, bg: BGParams, lam_min=LAMBDA_MIN, lam_max=LAMBDA_MAX,
              phi_min=VAR_FLOOR) -> BGParams:
    lam, theta, phi = K.em_step(np.asarray(pi, float), np.asarray(tau, complex), np.asarray(nu, float),
                                float(bg.lam), complex(bg.theta), float(bg.phi),
                                float(lam_min), float(lam_max), float(phi_min))
    return BGParams(float(lam), complex(theta), float(phi))


@dataclass
class MMPResult:
    prior: GaussianMessage
    bg: BGParams
    support: tuple[int, ...]
    score: float
    empty: bool = False


def mmp_scale(y_n, e_eff, sigma2: float, cfg: EstimatorConfig):
    """(v_init, beta) used by the support score for one row."""
    r = e_eff.shape[0]
    ynorm2 = float(np.sum(np.abs(y_n) ** 2))
    col_energy = float(np.sum(np.abs(e_eff) ** 2)) / e_eff.shape[1]
    v_init = ynorm2 / (r * col_energy)
    beta = cfg.beta_coeff * sigma2 / ynorm2
    return v_init, beta


def mmp_initialize(y_n, e_eff, sigma2: float, cfg: EstimatorConfig = EstimatorConfig(),
                   n_slots: int | None = None) -> MMPResult:
    """Support search giving the first Module A prior and the BG hyperparameters.

    ``n_slots`` is the pilot count T that normalizes the initial prior
    variance (defaults to the row length r).  An all-zero row returns a zero
    prior with the minimum sparsity rate.
    """
    y_n = np.asarray(y_n, dtype=complex)
    e_eff = np.asarray(e_eff, dtype=complex)
    r, two_k = e_eff.shape
    t = r if n_slots is None else int(n_slots)
    ynorm2 = float(np.sum(np.abs(y_n) ** 2))
    if np.sqrt(ynorm2) < EMPTY_SIGNAL_TOL:
        prior = GaussianMessage(np.zeros(two_k, complex), np.full(two_k, cfg.var_floor))
        return MMPResult(prior, BGParams(cfg.lambda_min, 0j, cfg.var_floor), (), 1.0, empty=True)

    v_init, beta = mmp_scale(y_n, e_eff, sigma2, cfg)
    ratio = sigma2 / v_init
    depth = min(cfg.mmp_depth, r, two_k)
    seed_sup, _ = K.omp(y_n, e_eff, depth, np.sqrt(r * sigma2))
    # every OMP prefix and, optionally, the best pairs overall seed the search
    pairs = K.best_pairs(y_n, e_eff, float(ratio), int(cfg.mmp_beam)) if cfg.mmp_pairs and depth >= 2 \
        else np.zeros((0, 2), dtype=np.int64)
    m, p = seed_sup.size, pairs.shape[0]
    seeds = np.zeros((max(m + p, 1), max(m, 2)), dtype=np.int64)
    sizes = np.zeros(max(m + p, 1), dtype=np.int64)
    for i in range(m):
        seeds[i, : i + 1] = seed_sup[: i + 1]
        sizes[i] = i + 1
    seeds[m:m + p, :2] = pairs
    sizes[m:m + p] = 2
    sup, coef, score = K.mmp_search(y_n, e_eff, float(ratio), float(beta), int(cfg.mmp_branch),
                                    int(depth), int(cfg.mmp_beam), seeds, sizes)
    h = np.zeros(two_k, dtype=complex)
    h[sup] = coef
    res = y_n - e_eff @ h
    prior = GaussianMessage(h, np.full(two_k, max(float(np.sum(np.abs(res) ** 2)) / t, cfg.var_floor)))
    if sup.size:
        if cfg.lambda_init == "energy":
            lam = float(np.sum(np.abs(e_eff @ h) ** 2)) / ynorm2
        else:
            lam = sup.size / two_k
        theta = float(np.sum(np.abs(coef))) / sup.size
        phi = float(np.sum(np.abs(coef - theta) ** 2)) / sup.size
    else:
        lam, theta, phi = cfg.lambda_min, 0.0, cfg.var_floor
    bg = BGParams(lam, complex(theta), phi).clamped(cfg.lambda_min, cfg.lambda_max, cfg.var_floor)
    return MMPResult(prior, bg, tuple(int(s) for s in sup), float(score))


def support_score(y_n, e_eff, support, sigma2: float, cfg: EstimatorConfig = EstimatorConfig()) -> float:
    """Score of one candidate support, same rule the search uses."""
    v_init, beta = mmp_scale(y_n, e_eff, sigma2, cfg)
    _, res = K.ridge_fit(np.asarray(y_n, complex), np.asarray(e_eff, complex),
                         np.asarray(sorted(support), dtype=np.int64), float(sigma2 / v_init))
    return float(np.sum(np.abs(res) ** 2) / np.sum(np.abs(y_n) ** 2) + beta * len(support))


@dataclass
class RowDiagnostics:
    row: int
    iterations: int
    residual: float
    lam: float
    theta: complex
    phi: float
    support_size: int
    failed: bool = False


@dataclass
class Diagnostics:
    rows: list[RowDiagnostics] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return int(sum(r.iterations for r in self.rows))

    @property
    def failed_rows(self) -> list[int]:
        return [r.row for r in self.rows if r.failed]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "iterations", "residual", "lambda", "theta_re", "theta_im", "phi",
                    "support_size", "failed"])
        for r in self.rows:
            w.writerow([r.row, r.iterations, repr(r.residual), repr(r.lam), repr(r.theta.real),
                        repr(r.theta.imag), repr(r.phi), r.support_size, int(r.failed)])
        return buf.getvalue()


def estimate_row(y_n, e_eff, sigma2: float, cfg: EstimatorConfig = EstimatorConfig(),
                 n_slots: int | None = None):
    """MMP-GAMP estimate of a single row.  Returns (estimate, RowDiagnostics)."""
    y_n = np.asarray(y_n, dtype=complex)
    init = mmp_initialize(y_n, e_eff, sigma2, cfg, n_slots)
    if init.empty:
        return init.prior.mean, RowDiagnostics(-1, 0, 0.0, init.bg.lam, init.bg.theta, init.bg.phi, 0)
    failed = False
    res_mmp = float(np.sum(np.abs(y_n - e_eff @ init.prior.mean) ** 2))
    res_limit = cfg.divergence_factor * max(res_mmp, y_n.size * sigma2)
    try:
        est, _, iters, lam, theta, phi, status = K.gamp_row(
            y_n, e_eff, float(sigma2), init.prior.mean, init.prior.var,
            float(init.bg.lam), complex(init.bg.theta), float(init.bg.phi),
            int(cfg.max_iters), float(cfg.tol), float(cfg.damping), float(cfg.var_floor),
            float(cfg.var_cap), float(cfg.lambda_min), float(cfg.lambda_max), float(cfg.var_floor),
            bool(cfg.em_enabled), float(res_limit))
        failed = status != K.OK
    except np.linalg.LinAlgError:
        failed, iters = True, 0
    if failed:
        est = init.prior.mean
        lam, theta, phi = init.bg.lam, init.bg.theta, init.bg.phi
    residual = float(np.linalg.norm(y_n - e_eff @ est))
    return est, RowDiagnostics(-1, int(iters), residual, float(lam), complex(theta), float(phi),
                               len(init.support), failed)


def run_mmp_gamp(y_tilde, op: SensingOperator | np.ndarray, sigma2: float,
                 cfg: EstimatorConfig = EstimatorConfig()):
    """Row-wise MMP-GAMP over the projected observation ``y_tilde`` (N x r).

    ``op`` is a SensingOperator or a bare ``e_eff`` matrix.  Returns the
    estimated VirtualChannel and per-row Diagnostics.
    """
    e_eff, n_slots = _operator_parts(op)
    y_tilde = np.atleast_2d(np.asarray(y_tilde, dtype=complex))
    if y_tilde.shape[1] != e_eff.shape[0]:
        raise ShapeMismatch(f"y_tilde has {y_tilde.shape[1]} columns, operator rank is {e_eff.shape[0]}")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    out = np.zeros((y_tilde.shape[0], e_eff.shape[1]), dtype=complex)
    diag = Diagnostics()
    for n, y_n in enumerate(y_tilde):
        out[n], rd = estimate_row(y_n, e_eff, sigma2, cfg, n_slots)
        diag.rows.append(replace(rd, row=n))
    return VirtualChannel(out), diag


def _operator_parts(op):
    if isinstance(op, SensingOperator):
        return np.ascontiguousarray(op.e_eff), op.t
    e = np.ascontiguousarray(np.asarray(op, dtype=complex))
    return e, e.shape[0]
