"""Hot per-row kernels.

Every function here is written in the numpy subset numba understands.  With
numba available they are compiled with ``@njit``; setting the environment
variable ``PIXELCE_DISABLE_NUMBA=1`` (or lacking numba) runs the identical
source as plain numpy.  The choice is made once, at import time.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("PIXELCE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    USE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag in a subprocess
    USE_NUMBA = False


def _jit(fn):
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


BACKEND = "numba" if USE_NUMBA else "numpy"

# status codes returned by gamp_row
OK = 0
NONFINITE = 1
DIVERGED = 2


@_jit
def module_a(prior_mean, prior_var, y, e, sigma2, var_floor):
    """LMMSE posterior mean and covariance diagonal.

    Solves in the smaller dimension: Woodbury (r x r) when r <= 2K,
    information form (2K x 2K) otherwise.
    """
    r, n = e.shape
    if r <= n:
        ed = e * prior_var  # E diag(d), broadcast over columns
        g = ed @ e.conj().T
        for i in range(r):
            g[i, i] += sigma2
        rhs = np.empty((r, n + 1), dtype=np.complex128)
        rhs[:, 0] = y - e @ prior_mean
        rhs[:, 1:] = e
        sol = np.linalg.solve(g, rhs)
        mean = prior_mean + prior_var * (e.conj().T @ sol[:, 0])
        quad = np.real(np.sum(e.conj() * sol[:, 1:], axis=0))
        var = prior_var - prior_var * prior_var * quad
    else:
        info = (e.conj().T @ e) / sigma2
        for i in range(n):
            info[i, i] += 1.0 / prior_var[i]
        rhs = np.zeros((n, n + 1), dtype=np.complex128)
        rhs[:, 0] = prior_mean / prior_var + (e.conj().T @ y) / sigma2
        for i in range(n):
            rhs[i, i + 1] = 1.0
        sol = np.linalg.solve(info, rhs)
        mean = sol[:, 0].copy()
        var = np.empty(n)
        for i in range(n):
            var[i] = sol[i, i + 1].real
    var = np.maximum(var, var_floor)
    return mean, var


@_jit
def extrinsic(mean_pos, var_pos, mean_pri, var_pri, var_cap):
    """Elementwise Gaussian division posterior / prior."""
    n = mean_pos.shape[0]
    mean = np.empty(n, dtype=np.complex128)
    var = np.empty(n)
    for k in range(n):
        prec = 1.0 / var_pos[k] - 1.0 / var_pri[k]
        if prec <= 0.0:
            var[k] = var_cap
            mean[k] = mean_pos[k]
        else:
            v = 1.0 / prec
            var[k] = v
            mean[k] = v * (mean_pos[k] / var_pos[k] - mean_pri[k] / var_pri[k])
    return mean, var


@_jit
def bg_denoise(m, c, lam, theta, phi, var_floor):
    """Bernoulli-Gaussian posterior moments for a CN(m, c) message per entry.

    Returns (mean, var, pi, tau, nu).  The activity probability is computed
    from the log-likelihood ratio to stay finite for extreme inputs.
    """
    n = m.shape[0]
    mean = np.empty(n, dtype=np.complex128)
    var = np.empty(n)
    pi = np.empty(n)
    tau = np.empty(n, dtype=np.complex128)
    nu = np.empty(n)
    log_odds = np.log(lam) - np.log1p(-lam)
    for k in range(n):
        ck = c[k]
        s = phi + ck
        d_on = m[k] - theta
        llr = (log_odds + np.log(ck / s)
               - (d_on.real * d_on.real + d_on.imag * d_on.imag) / s
               + (m[k].real * m[k].real + m[k].imag * m[k].imag) / ck)
        if llr >= 0.0:
            p = 1.0 / (1.0 + np.exp(-llr))
        else:
            z = np.exp(llr)
            p = z / (1.0 + z)
        t = (phi * m[k] + ck * theta) / s
        v = ck * phi / s
        pi[k] = p
        tau[k] = t
        nu[k] = v
        mean[k] = p * t
        at2 = t.real * t.real + t.imag * t.imag
        vk = p * (at2 + v) - p * p * at2
        var[k] = vk if vk > var_floor else var_floor
    return mean, var, pi, tau, nu


@_jit
def em_step(pi, tau, nu, lam, theta, phi, lam_min, lam_max, phi_min):
    total = np.sum(pi)
    if total < 1e-10:
        return lam, theta, phi
    lam_new = total / pi.shape[0]
    theta_new = np.sum(pi * tau) / total
    d = tau - theta_new
    phi_new = np.sum(pi * ((d.real * d.real + d.imag * d.imag) + nu)) / total
    lam_new = min(max(lam_new, lam_min), lam_max)
    phi_new = max(phi_new, phi_min)
    return lam_new, theta_new, phi_new


@_jit
def gamp_row(y, e, sigma2, mean0, var0, lam, theta, phi, max_iters, tol, damping,
             var_floor, var_cap, lam_min, lam_max, phi_min, em_enabled, res_limit):
    """Module A / Module B message passing with EM for one row.

    Stops with DIVERGED as soon as the residual energy of the Module B
    posterior mean exceeds ``res_limit``.
    Returns (estimate, posterior var, iterations, lam, theta, phi, status).
    """
    prior_m = mean0.copy()
    prior_v = np.maximum(var0, var_floor)
    b_m = np.zeros_like(mean0)
    b_v = np.ones(mean0.shape[0])
    est = mean0.copy()
    est_var = prior_v.copy()
    prev = mean0.copy()
    it = 0
    for it in range(1, max_iters + 1):
        a_m, a_v = module_a(prior_m, prior_v, y, e, sigma2, var_floor)
        nb_m, nb_v = extrinsic(a_m, a_v, prior_m, prior_v, var_cap)
        if it == 1:
            b_m, b_v = nb_m, nb_v
        else:
            b_m = damping * nb_m + (1.0 - damping) * b_m
            b_v = damping * nb_v + (1.0 - damping) * b_v
        est, est_var, pi, tau, nu = bg_denoise(b_m, b_v, lam, theta, phi, var_floor)
        na_m, na_v = extrinsic(est, est_var, b_m, b_v, var_cap)
        prior_m = damping * na_m + (1.0 - damping) * prior_m
        prior_v = np.maximum(damping * na_v + (1.0 - damping) * prior_v, var_floor)
        if em_enabled:
            lam, theta, phi = em_step(pi, tau, nu, lam, theta, phi, lam_min, lam_max, phi_min)
        if not (np.all(np.isfinite(est)) and np.all(np.isfinite(prior_m))):
            return mean0.copy(), var0.copy(), it, lam, theta, phi, NONFINITE
        if _norm2(y - e @ est) > res_limit:
            return mean0.copy(), var0.copy(), it, lam, theta, phi, DIVERGED
        if it > 1:
            ref = max(np.sqrt(np.sum(np.abs(prev) ** 2)), 1e-12)
            if np.sqrt(np.sum(np.abs(est - prev) ** 2)) / ref < tol:
                break
        prev = est.copy()
    return est, est_var, it, lam, theta, phi, OK


@_jit
def ridge_fit(y, e, support, ratio):
    """Ridge estimate restricted to ``support``: (A^H A + ratio I)^-1 A^H y.

    Equals ``v E_S^H (v E_S E_S^H + sigma2 I)^-1 y`` with ratio = sigma2 / v.
    Returns (coefficients on support, residual vector).
    """
    s = support.shape[0]
    if s == 0:
        return np.zeros(0, dtype=np.complex128), y.copy()
    a = np.empty((e.shape[0], s), dtype=np.complex128)
    for j in range(s):
        a[:, j] = e[:, support[j]]
    g = a.conj().T @ a
    for j in range(s):
        g[j, j] += ratio
    coef = np.linalg.solve(g, a.conj().T @ y)
    return coef, y - a @ coef


@_jit
def ls_fit(y, e, support):
    s = support.shape[0]
    a = np.empty((e.shape[0], s), dtype=np.complex128)
    for j in range(s):
        a[:, j] = e[:, support[j]]
    coef = np.linalg.lstsq(a, y)[0]
    return coef, y - a @ coef


@_jit
def _norm2(v):
    return np.sum(v.real * v.real + v.imag * v.imag)


@_jit
def omp(y, e, max_sparsity, stop_norm):
    """Orthogonal matching pursuit.  Returns (support in selection order, coefficients)."""
    two_k = e.shape[1]
    colnorm = np.sqrt(np.sum(e.real * e.real + e.imag * e.imag, axis=0))
    support = np.empty(max_sparsity, dtype=np.int64)
    coef = np.zeros(0, dtype=np.complex128)
    res = y.copy()
    used = np.zeros(two_k, dtype=np.bool_)
    count = 0
    while count < max_sparsity:
        if np.sqrt(_norm2(res)) <= stop_norm:
            break
        corr = np.abs(e.conj().T @ res)
        best = -1
        best_val = 0.0
        for j in range(two_k):
            if used[j] or colnorm[j] <= 0.0:
                continue
            val = corr[j] / colnorm[j]
            if val > best_val:
                best_val = val
                best = j
        if best < 0 or best_val <= 1e-300:
            break
        used[best] = True
        support[count] = best
        count += 1
        coef, res = ls_fit(y, e, support[:count])
    return support[:count].copy(), coef


@_jit
def _less(j1, s1, sup1, j2, s2, sup2):
    """Ordering on candidates: score, then size, then lexicographic support."""
    if j1 != j2:
        return j1 < j2
    if s1 != s2:
        return s1 < s2
    for i in range(s1):
        if sup1[i] != sup2[i]:
            return sup1[i] < sup2[i]
    return False


@_jit
def _top_columns(res, e, colnorm, members, size, count):
    """The ``count`` best extensions of ``members`` by orthogonal-least-squares gain.

    Columns and residual are projected off the span of the current support,
    so a candidate's score is the residual energy it would remove after an
    exact refit.  Columns (numerically) inside that span are skipped.
    """
    r = e.shape[0]
    if size >= r:
        return np.empty(0, dtype=np.int64)
    if size == 0:
        corr = np.abs(e.conj().T @ res) / colnorm
    else:
        a = np.empty((r, size), dtype=np.complex128)
        for i in range(size):
            a[:, i] = e[:, members[i]]
        q = np.ascontiguousarray(np.linalg.qr(a)[0])
        e_perp = e - q @ (q.conj().T @ e)
        res_perp = res - q @ (q.conj().T @ res)
        pnorm = np.sqrt(np.sum(e_perp.real * e_perp.real + e_perp.imag * e_perp.imag, axis=0))
        corr = np.abs(e_perp.conj().T @ res_perp)
        for j in range(e.shape[1]):
            if pnorm[j] > 1e-8 * colnorm[j]:
                corr[j] /= pnorm[j]
            else:
                corr[j] = -1.0
    for i in range(size):
        corr[members[i]] = -1.0
    order = np.argsort(-corr, kind="mergesort")
    m = 0
    out = np.empty(count, dtype=np.int64)
    for idx in order:
        if m >= count or corr[idx] < 0.0:
            break
        out[m] = idx
        m += 1
    return out[:m]


@_jit
def best_pairs(y, e, ratio, count):
    """The ``count`` column pairs with the smallest ridge residual, by exhaustive search.

    Uses the Gram matrix so each pair costs a 2 x 2 solve.  Ties keep the
    lexicographically first pair.  Returns a (m, 2) array, m <= count.
    """
    two_k = e.shape[1]
    g = e.conj().T @ e
    c = e.conj().T @ y
    ynorm2 = _norm2(y)
    best = np.full(count, np.inf)
    pairs = np.zeros((count, 2), dtype=np.int64)
    filled = 0
    for i in range(two_k):
        a11 = g[i, i].real + ratio
        for j in range(i + 1, two_k):
            a22 = g[j, j].real + ratio
            a12 = g[i, j]
            det = a11 * a22 - (a12.real * a12.real + a12.imag * a12.imag)
            if det <= 0.0:
                continue
            x1 = (a22 * c[i] - a12 * c[j]) / det
            x2 = (a11 * c[j] - np.conj(a12) * c[i]) / det
            # ||y - A x||^2 = ||y||^2 - 2 Re(c^H x) + x^H G x
            quad = (g[i, i].real * (x1.real * x1.real + x1.imag * x1.imag)
                    + g[j, j].real * (x2.real * x2.real + x2.imag * x2.imag)
                    + 2.0 * (np.conj(x1) * a12 * x2).real)
            res = ynorm2 - 2.0 * (np.conj(c[i]) * x1 + np.conj(c[j]) * x2).real + quad
            if filled < count or res < best[count - 1]:
                pos = filled if filled < count else count - 1
                while pos > 0 and best[pos - 1] > res:
                    if pos < count:
                        best[pos] = best[pos - 1]
                        pairs[pos] = pairs[pos - 1]
                    pos -= 1
                best[pos] = res
                pairs[pos, 0] = i
                pairs[pos, 1] = j
                if filled < count:
                    filled += 1
    return pairs[:filled].copy()


@_jit
def mmp_search(y, e, ratio, beta, branch, depth, beam, seeds, seed_sizes):
    """Breadth-first multipath matching pursuit with a pruned frontier.

    Every node extends its support by the ``branch`` columns with the largest
    orthogonal-least-squares gain against its residual.  ``seeds`` rows hold
    extra supports (padded, valid length in ``seed_sizes``); a seed joins the
    candidates of the level matching its size and is expanded like any other
    node.  Identical supports are merged and only the ``beam`` best-scoring
    nodes advance.  Candidates are scored by ``||res||^2/||y||^2 + beta |S|``;
    the empty support scores 1.

    Returns (best support sorted, coefficients on it, best score).
    """
    r, two_k = e.shape
    ynorm2 = _norm2(y)
    colnorm = np.sqrt(np.sum(e.real * e.real + e.imag * e.imag, axis=0))
    for j in range(two_k):
        if colnorm[j] <= 0.0:
            colnorm[j] = np.inf
    depth = min(depth, two_k)
    width = depth if depth > seeds.shape[1] else seeds.shape[1]
    best_sup = np.zeros(width, dtype=np.int64)
    best_size = 0
    best_j = 1.0
    best_coef = np.zeros(0, dtype=np.complex128)

    f_sup = np.zeros((1, width), dtype=np.int64)
    f_res = np.empty((1, r), dtype=np.complex128)
    f_res[0] = y
    f_count = 1
    for level in range(1, depth + 1):
        n_seed = 0
        for si in range(seeds.shape[0]):
            if seed_sizes[si] == level:
                n_seed += 1
        cap = f_count * branch + n_seed
        c_sup = np.zeros((cap, width), dtype=np.int64)
        c_cnt = 0
        cols = np.empty(0, dtype=np.int64)
        for node in range(f_count + seeds.shape[0]):
            if node < f_count:
                cols = _top_columns(f_res[node], e, colnorm, f_sup[node], level - 1, branch)
                n_new = cols.shape[0]
            else:
                si = node - f_count
                if seed_sizes[si] != level:
                    continue
                n_new = 1
            for t in range(n_new):
                if node < f_count:
                    cand = np.empty(level, dtype=np.int64)
                    cand[: level - 1] = f_sup[node, : level - 1]
                    cand[level - 1] = cols[t]
                else:
                    cand = seeds[node - f_count, :level].copy()
                cand = np.sort(cand)
                dup = False
                for other in range(c_cnt):
                    same = True
                    for i in range(level):
                        if c_sup[other, i] != cand[i]:
                            same = False
                            break
                    if same:
                        dup = True
                        break
                if not dup:
                    c_sup[c_cnt, :level] = cand
                    c_cnt += 1
        if c_cnt == 0:
            break
        c_j = np.empty(c_cnt)
        c_res = np.empty((c_cnt, r), dtype=np.complex128)
        for ci in range(c_cnt):
            coef, res = ridge_fit(y, e, c_sup[ci, :level], ratio)
            c_j[ci] = _norm2(res) / ynorm2 + beta * level
            c_res[ci] = res
            if _less(c_j[ci], level, c_sup[ci], best_j, best_size, best_sup):
                best_j = c_j[ci]
                best_size = level
                best_sup[:] = 0
                best_sup[:level] = c_sup[ci, :level]
                best_coef = coef
        order = np.argsort(c_j, kind="mergesort")
        f_count = min(beam, c_cnt)
        f_sup = np.zeros((f_count, width), dtype=np.int64)
        f_res = np.empty((f_count, r), dtype=np.complex128)
        for i in range(f_count):
            f_sup[i] = c_sup[order[i]]
            f_res[i] = c_res[order[i]]

    # seeds deeper than the tree are scored on their own
    for si in range(seeds.shape[0]):
        size = seed_sizes[si]
        if size <= depth:
            continue
        cand = np.sort(seeds[si, :size])
        coef, res = ridge_fit(y, e, cand, ratio)
        jv = _norm2(res) / ynorm2 + beta * size
        padded = np.zeros(width, dtype=np.int64)
        padded[:size] = cand
        if _less(jv, size, padded, best_j, best_size, best_sup):
            best_j = jv
            best_size = size
            best_sup[:] = padded
            best_coef = coef
    return best_sup[:best_size].copy(), best_coef, best_j
