"""Pilot coder selection and the rank-truncated effective sensing operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import AntennaCoder, PixelNetwork, radiation_pattern, random_coders
from .channel import PilotObservation
from .errors import InsufficientPool, RankTooLarge, ShapeMismatch, SingularNetwork, ZeroPattern

RANK_RTOL = 1e-12
AUTO_ENERGY = 1.0 - 1e-6


@dataclass(frozen=True)
class SensingOperator:
    """SVD-truncated sensing operator.

    ``patterns`` is E(B) (2K x T).  ``E(B)^T ~= u_r diag(sigma_r) v_r^H`` and the
    effective matrix is ``e_eff = sqrt(P) diag(sigma_r) v_r^H`` (r x 2K), so a
    projected row obeys ``y_n = e_eff h_n + noise``.
    """

    coders: tuple
    patterns: np.ndarray
    u_r: np.ndarray
    sigma_r: np.ndarray
    v_r: np.ndarray
    e_eff: np.ndarray
    rank_r: int
    power: float
    sigma_full: np.ndarray

    @property
    def t(self) -> int:
        return self.patterns.shape[1]

    @property
    def two_k(self) -> int:
        return self.patterns.shape[0]


def pattern_matrix(net: PixelNetwork, coders) -> np.ndarray:
    return np.column_stack([radiation_pattern(net, c) for c in coders])


def greedy_min_coherence(patterns: np.ndarray, t: int) -> list[int]:
    """Greedy max-min selection of ``t`` columns by absolute inner product.

    Starts from the column whose largest coherence with the others is
    smallest, then repeatedly adds the candidate whose largest coherence
    with the chosen set is smallest.  Ties go to the lower index.
    """
    m = patterns.shape[1]
    if t > m:
        raise InsufficientPool(f"need {t} patterns, pool has {m}")
    gram = np.abs(patterns.conj().T @ patterns)
    np.fill_diagonal(gram, -np.inf)
    first = int(np.argmin(gram.max(axis=1))) if m > 1 else 0
    chosen = [first]
    worst = gram[first].copy()
    worst[first] = np.inf
    while len(chosen) < t:
        nxt = int(np.argmin(worst))
        chosen.append(nxt)
        worst = np.maximum(worst, gram[nxt])
        worst[chosen] = np.inf
    return chosen


def select_coders(net: PixelNetwork, t: int, pool_size: int | None = None, seed=0) -> list[AntennaCoder]:
    """Pick ``t`` low-cross-correlation coders from a random pool.

    ``pool_size`` defaults to ``20 t``.  Coders whose pattern is degenerate
    or whose network solve fails are dropped from the pool.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    pool_size = 20 * t if pool_size is None else int(pool_size)
    if pool_size < t:
        raise ValueError("pool_size must be >= t")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bits = random_coders(net.q, pool_size, rng)
    coders, pats = [], []
    for b in bits:
        try:
            pats.append(radiation_pattern(net, b))
        except (ZeroPattern, SingularNetwork):
            continue
        coders.append(AntennaCoder(b))
    if len(coders) < t:
        raise InsufficientPool(f"only {len(coders)} valid patterns for t={t}")
    order = greedy_min_coherence(np.column_stack(pats), t)
    return [coders[i] for i in order]


def max_coherence(patterns: np.ndarray) -> float:
    g = np.abs(patterns.conj().T @ patterns)
    np.fill_diagonal(g, 0.0)
    return float(g.max()) if g.size else 0.0


def auto_rank(sigma: np.ndarray, t: int) -> int:
    energy = np.cumsum(sigma ** 2)
    r = int(np.searchsorted(energy, AUTO_ENERGY * energy[-1]) + 1)
    return min(r, t, sigma.size)


def operator_from_patterns(patterns: np.ndarray, power: float, rank_r="auto",
                           coders=()) -> SensingOperator:
    patterns = np.asarray(patterns, dtype=complex)
    two_k, t = patterns.shape
    u, s, vh = np.linalg.svd(patterns.T, full_matrices=False)
    numerical = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if rank_r == "auto" or rank_r is None:
        r = auto_rank(s, t)
    else:
        r = int(rank_r)
        if not 1 <= r <= min(t, two_k):
            raise ValueError(f"rank_r={r} outside [1, min(T, 2K)={min(t, two_k)}]")
    if r > numerical:
        raise RankTooLarge(f"rank_r={r} exceeds numerical rank {numerical}")
    u_r, s_r, v_r = u[:, :r], s[:r], vh[:r].conj().T
    e_eff = np.sqrt(power) * (s_r[:, None] * vh[:r])
    return SensingOperator(
        coders=tuple(coders), patterns=patterns, u_r=u_r, sigma_r=s_r, v_r=v_r,
        e_eff=e_eff, rank_r=r, power=float(power), sigma_full=s,
    )


def build_operator(net: PixelNetwork, coders, power: float = 1.0, rank_r="auto") -> SensingOperator:
    """Stack coder patterns into E(B), SVD ``E(B)^T`` and truncate to ``rank_r``.

    ``rank_r='auto'`` keeps the fewest singular values holding a fraction
    1 - 1e-6 of the total squared mass.
    """
    return operator_from_patterns(pattern_matrix(net, coders), power, rank_r, coders)


def truncation_residual(op: SensingOperator) -> float:
    approx = op.u_r @ np.diag(op.sigma_r) @ op.v_r.conj().T
    return float(np.linalg.norm(op.patterns.T - approx))


def project_observation(obs: PilotObservation, op: SensingOperator) -> np.ndarray:
    """``Y_tilde = y_r conj(u_r)``; row n equals ``e_eff h_n`` plus white noise."""
    if obs.y_r.shape[1] != op.t:
        raise ShapeMismatch(f"observation has {obs.y_r.shape[1]} slots, operator has T={op.t}")
    return obs.y_r @ op.u_r.conj()
