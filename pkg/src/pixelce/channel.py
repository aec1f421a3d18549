"""Sparse angular-domain channels and uplink pilot observations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matio
from .errors import MatrixFormatError, ShapeMismatch, TooManyPaths


@dataclass(frozen=True)
class VirtualChannel:
    """N x 2K angular channel ``[H_theta, H_phi]`` with an optional known support."""

    h_v: np.ndarray
    support: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        h = np.asarray(self.h_v, dtype=complex)
        if h.ndim != 2 or h.shape[1] % 2:
            raise ShapeMismatch(f"h_v must be N x 2K, got {h.shape}")
        object.__setattr__(self, "h_v", h)
        if self.support is not None:
            object.__setattr__(self, "support", tuple(sorted((int(r), int(c)) for r, c in self.support)))

    @property
    def n_bs(self) -> int:
        return self.h_v.shape[0]

    @property
    def k(self) -> int:
        return self.h_v.shape[1] // 2

    def support_mask(self) -> np.ndarray:
        """Boolean mask of the support; falls back to the nonzero pattern."""
        if self.support is None:
            return self.h_v != 0
        mask = np.zeros(self.h_v.shape, dtype=bool)
        for r, c in self.support:
            mask[r, c] = True
        return mask


@dataclass(frozen=True)
class BsArray:
    e_bs: np.ndarray

    @property
    def n(self) -> int:
        return self.e_bs.shape[0]


@dataclass(frozen=True)
class PilotObservation:
    """Beamspace-projected pilots ``y_r = E_BS^* Y`` (N x T)."""

    y_r: np.ndarray
    power: float
    sigma2: float
    snr_db: float = field(default=float("nan"))

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")


def snr_db_to_sigma2(snr_db: float, power: float, n: int, k: int) -> float:
    """Noise variance for a per-slot, per-antenna received SNR.

    With ``||H_v||_F = 1`` and a unit-norm pattern, the expected received
    energy per slot is ``P ||H_v||_F^2 / (2K)``, spread over N antennas, so
    ``SNR = P / (2K N sigma2)``.  ``snr_db = inf`` gives a noiseless link.
    """
    if np.isposinf(snr_db):
        return 0.0
    return float(power / (2 * k * n * 10.0 ** (snr_db / 10.0)))


def sigma2_to_snr_db(sigma2: float, power: float, n: int, k: int) -> float:
    if sigma2 == 0:
        return float("inf")
    return float(10.0 * np.log10(power / (2 * k * n * sigma2)))


def dft_bs_array(n: int) -> BsArray:
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    return BsArray(np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synth_channel(n: int, k: int, paths: int, seed, los_boost_db: float = 24.0) -> VirtualChannel:
    """On-grid sparse channel with one dominant path, scaled to unit Frobenius norm.

    Path cells are distinct and uniform over the N x 2K grid, so both
    polarization blocks receive equal expected power.  Scattered gains are
    CN(0, 1); the first path's power is set to ``10^(los_boost_db/10)``
    times the realized mean scattered power.
    """
    size = n * 2 * k
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if paths > size:
        raise TooManyPaths(f"{paths} paths do not fit on a {n}x{2 * k} grid")
    rng = _rng(seed)
    cells = rng.choice(size, size=paths, replace=False)
    gains = (rng.standard_normal(paths) + 1j * rng.standard_normal(paths)) / np.sqrt(2)
    phase = np.exp(2j * np.pi * rng.random())
    if paths > 1:
        scattered = np.mean(np.abs(gains[1:]) ** 2)
        gains[0] = np.sqrt(10.0 ** (los_boost_db / 10.0) * scattered) * phase
    else:
        gains[0] = phase
    h = np.zeros(size, dtype=complex)
    h[cells] = gains
    h /= np.linalg.norm(h)
    h = h.reshape(n, 2 * k)
    rows, cols = np.unravel_index(cells, (n, 2 * k))
    return VirtualChannel(h, tuple(zip(rows.tolist(), cols.tolist())))


def observe(hv: VirtualChannel, bs: BsArray, patterns: np.ndarray, power: float,
            sigma2: float, seed) -> PilotObservation:
    """Noisy pilots ``Y = sqrt(P) E_BS^T H_v E(B) + N`` projected by ``E_BS^*``.

    All pilot symbols are 1.  ``sigma2 = 0`` yields a noiseless observation.
    """
    patterns = np.asarray(patterns, dtype=complex)
    n, two_k = hv.h_v.shape
    if bs.e_bs.shape != (n, n):
        raise ShapeMismatch(f"BS array is {bs.e_bs.shape}, channel has N={n}")
    if patterns.ndim != 2 or patterns.shape[0] != two_k:
        raise ShapeMismatch(f"patterns must be {two_k} x T, got {patterns.shape}")
    t = patterns.shape[1]
    rng = _rng(seed)
    y = np.sqrt(power) * (bs.e_bs.T @ hv.h_v @ patterns)
    if sigma2 > 0:
        y = y + np.sqrt(sigma2 / 2) * (rng.standard_normal((n, t)) + 1j * rng.standard_normal((n, t)))
    y_r = bs.e_bs.conj() @ y
    return PilotObservation(y_r=y_r, power=float(power), sigma2=float(sigma2),
                            snr_db=sigma2_to_snr_db(sigma2, power, n, hv.k))


def save_channel(path, hv: VirtualChannel, support_path=None) -> None:
    matio.save_matrix(path, hv.h_v)
    if support_path is not None:
        support = hv.support if hv.support is not None else list(zip(*np.nonzero(hv.h_v)))
        matio.save_support(support_path, support)


def load_channel(path, support_path=None, n: int | None = None, k: int | None = None) -> VirtualChannel:
    h = matio.load_matrix(path, shape=(n, None if k is None else 2 * k))
    if h.shape[1] % 2:
        raise MatrixFormatError(f"{path}: channel must have an even column count (2K)")
    support = None
    if support_path is not None:
        support = matio.load_support(support_path)
        for r, c in support:
            if not (0 <= r < h.shape[0] and 0 <= c < h.shape[1]):
                raise MatrixFormatError(f"{support_path}: index ({r}, {c}) outside {h.shape}")
    return VirtualChannel(h, support)
