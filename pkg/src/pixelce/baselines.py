"""Reference estimators sharing the ``(y_tilde, op, sigma2)`` interface."""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .channel import VirtualChannel
from .estimator import VAR_FLOOR, GaussianMessage, _operator_parts, module_a_posterior
from .sensing import RANK_RTOL

LMMSE_PRIOR_VAR = 0.008


def ls_estimate(y_tilde, op, sigma2: float | None = None) -> VirtualChannel:
    """Minimum-norm least squares per row via the pseudoinverse of ``e_eff``."""
    e_eff, _ = _operator_parts(op)
    pinv = np.linalg.pinv(e_eff, rcond=RANK_RTOL)
    return VirtualChannel(np.atleast_2d(y_tilde) @ pinv.T)


def lmmse_estimate(y_tilde, op, sigma2: float, prior_var: float = LMMSE_PRIOR_VAR) -> VirtualChannel:
    """Zero-mean, ``prior_var * I`` prior fused with each row (no sparsity)."""
    if prior_var <= 0:
        raise ValueError("prior_var must be positive")
    e_eff, _ = _operator_parts(op)
    two_k = e_eff.shape[1]
    prior = GaussianMessage(np.zeros(two_k, complex), np.full(two_k, float(prior_var)))
    rows = [module_a_posterior(prior, y, e_eff, sigma2, var_floor=min(VAR_FLOOR, prior_var)).mean
            for y in np.atleast_2d(y_tilde)]
    return VirtualChannel(np.array(rows))


def omp_row(y_n, e_eff, sigma2: float, max_sparsity: int | None = None, stop_coeff: float = 1.0):
    """OMP on one row; stops at residual norm ``stop_coeff * sqrt(r) * sigma``.

    Returns ``(estimate, support)`` with the support in selection order.
    """
    e_eff = np.ascontiguousarray(np.asarray(e_eff, dtype=complex))
    r, two_k = e_eff.shape
    max_sparsity = r if max_sparsity is None else int(max_sparsity)
    if max_sparsity > r:
        raise ValueError("max_sparsity cannot exceed the measurement count r")
    sup, coef = K.omp(np.asarray(y_n, dtype=complex), e_eff, max_sparsity,
                      float(stop_coeff * np.sqrt(r * max(sigma2, 0.0))))
    h = np.zeros(two_k, dtype=complex)
    h[sup] = coef
    return h, tuple(int(s) for s in sup)


def omp_estimate(y_tilde, op, sigma2: float, max_sparsity: int | None = None,
                 stop_coeff: float = 1.0) -> VirtualChannel:
    e_eff, _ = _operator_parts(op)
    rows = [omp_row(y, e_eff, sigma2, max_sparsity, stop_coeff)[0] for y in np.atleast_2d(y_tilde)]
    return VirtualChannel(np.array(rows))


def genie_lmmse(y_tilde, op, sigma2: float, truth: VirtualChannel,
                var_floor: float = VAR_FLOOR) -> VirtualChannel:
    """LMMSE with oracle support: prior variance ``|h_nk|^2`` on the true support."""
    e_eff, _ = _operator_parts(op)
    y_tilde = np.atleast_2d(y_tilde)
    mask = truth.support_mask()
    out = np.zeros((y_tilde.shape[0], e_eff.shape[1]), dtype=complex)
    for n, y in enumerate(y_tilde):
        if not mask[n].any():
            continue
        var = np.where(mask[n], np.abs(truth.h_v[n]) ** 2, var_floor)
        prior = GaussianMessage(np.zeros(e_eff.shape[1], complex), np.maximum(var, var_floor))
        out[n] = module_a_posterior(prior, y, e_eff, sigma2, var_floor).mean
    return VirtualChannel(out)
