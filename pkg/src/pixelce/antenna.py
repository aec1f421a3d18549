"""Multiport model of a pixel antenna with one antenna port and Q pixel ports.

Switch convention: ``b_q = 0`` shorts pixel port q (switch ON, zero load),
``b_q = 1`` leaves it open (switch OFF, infinite load).  Open ports carry
no current, so they are eliminated from the linear solve instead of being
modeled with a large finite load.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matio
from .errors import MatrixFormatError, SingularNetwork, ZeroPattern

COND_LIMIT = 1e12
ZERO_PATTERN_TOL = 1e-14
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class PixelNetwork:
    """Impedance partition and open-circuit patterns of a (Q+1)-port antenna.

    ``e_oc`` columns are ``[e_A, e_P1, ..., e_PQ]``; rows hold K theta-polarized
    samples followed by K phi-polarized samples.  ``z_aa`` is kept for
    completeness, no computation uses it.
    """

    z_aa: complex
    z_ap: np.ndarray
    z_pp: np.ndarray
    e_oc: np.ndarray

    def __post_init__(self):
        z_ap = np.asarray(self.z_ap, dtype=complex).reshape(-1)
        z_pp = np.asarray(self.z_pp, dtype=complex)
        e_oc = np.asarray(self.e_oc, dtype=complex)
        q = z_ap.size
        if z_pp.shape != (q, q):
            raise MatrixFormatError(f"z_pp must be {q}x{q}, got {z_pp.shape}")
        if e_oc.ndim != 2 or e_oc.shape[1] != q + 1 or e_oc.shape[0] % 2:
            raise MatrixFormatError(f"e_oc must be 2K x {q + 1}, got {e_oc.shape}")
        if not (np.all(np.isfinite(z_pp)) and np.all(np.isfinite(z_ap)) and np.all(np.isfinite(e_oc))):
            raise MatrixFormatError("network entries must be finite")
        scale = np.max(np.abs(z_pp)) if q else 0.0
        if np.max(np.abs(z_pp - z_pp.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise MatrixFormatError("z_pp is not symmetric (network must be reciprocal)")
        object.__setattr__(self, "z_aa", complex(self.z_aa))
        object.__setattr__(self, "z_ap", z_ap)
        object.__setattr__(self, "z_pp", z_pp)
        object.__setattr__(self, "e_oc", e_oc)

    @property
    def q(self) -> int:
        return self.z_ap.size

    @property
    def k(self) -> int:
        return self.e_oc.shape[0] // 2

    @property
    def z_pa(self) -> np.ndarray:
        return self.z_ap

    def impedance_matrix(self) -> np.ndarray:
        """Full (Q+1)x(Q+1) impedance matrix."""
        z = np.empty((self.q + 1, self.q + 1), dtype=complex)
        z[0, 0] = self.z_aa
        z[0, 1:] = self.z_ap
        z[1:, 0] = self.z_ap
        z[1:, 1:] = self.z_pp
        return z


@dataclass(frozen=True)
class AntennaCoder:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int8).reshape(-1)
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("coder bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, s: str) -> "AntennaCoder":
        return cls(np.array([int(ch) for ch in s.strip()], dtype=np.int8))

    def __str__(self) -> str:
        return "".join(str(int(b)) for b in self.bits)

    def __eq__(self, other):
        return isinstance(other, AntennaCoder) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def _bits(net: PixelNetwork, coder) -> np.ndarray:
    bits = coder.bits if isinstance(coder, AntennaCoder) else np.asarray(coder, dtype=np.int8)
    if bits.size != net.q:
        raise ValueError(f"coder has {bits.size} bits, network has Q={net.q}")
    return bits


def port_currents(net: PixelNetwork, coder, i_a: complex = 1.0) -> np.ndarray:
    """Pixel-port currents for a coder, exact in the open-circuit limit.

    OFF ports are returned as exact zeros; ON ports solve
    ``-Z_on i_on = z_pa_on i_a``.
    """
    bits = _bits(net, coder)
    i_p = np.zeros(net.q, dtype=complex)
    on = np.flatnonzero(bits == 0)
    if on.size == 0:
        return i_p
    z_on = net.z_pp[np.ix_(on, on)]
    cond = np.linalg.cond(z_on)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularNetwork(f"ON-port impedance block has condition number {cond:.3g}")
    try:
        i_p[on] = -np.linalg.solve(z_on, net.z_pa[on] * i_a)
    except np.linalg.LinAlgError as exc:
        raise SingularNetwork(str(exc)) from exc
    return i_p


def radiation_pattern(net: PixelNetwork, coder) -> np.ndarray:
    """Unit-norm radiation pattern (length 2K) produced by ``coder``."""
    i_p = port_currents(net, coder, 1.0)
    e = net.e_oc[:, 0] + net.e_oc[:, 1:] @ i_p
    nrm = np.linalg.norm(e)
    if nrm < ZERO_PATTERN_TOL:
        raise ZeroPattern(f"pattern norm {nrm:.3g} below {ZERO_PATTERN_TOL}")
    return e / nrm


def random_coders(q: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. uniform coders as a (count, q) int8 array."""
    return rng.integers(0, 2, size=(count, q), dtype=np.int8)


def synth_network(q: int, k: int, seed: int, pattern_rank: int = 9,
                  z0: float = 50.0, coupling: float = 4.0) -> PixelNetwork:
    """Random reciprocal pixel network standing in for EM-simulated data.

    ``z_pp = S + S^T + d I`` with ``d`` twice the spectral norm of ``S + S^T``,
    which keeps every principal (ON-port) submatrix within condition number 3.
    ``e_oc`` columns are random combinations of ``pattern_rank`` isotropic
    basis patterns, so every coder's pattern lies in a fixed subspace of
    that dimension.
    """
    if q < 1 or k < 1:
        raise ValueError("q and k must be positive")
    rank = min(int(pattern_rank), q + 1, 2 * k)
    if rank < 1:
        raise ValueError("pattern_rank must be positive")
    rng = np.random.default_rng(seed)

    s = z0 * (rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q))) / np.sqrt(2 * q)
    a = s + s.T
    d = 2.0 * np.linalg.norm(a, 2)
    z_pp = a + d * np.eye(q)
    z_pp = 0.5 * (z_pp + z_pp.T)
    # strong port-to-pixel coupling flattens the pattern spectrum and keeps patterns diverse
    z_ap = coupling * d * (rng.standard_normal(q) + 1j * rng.standard_normal(q)) / np.sqrt(q)
    z_aa = complex(z0 + 1j * rng.standard_normal() * z0)

    basis = (rng.standard_normal((2 * k, rank)) + 1j * rng.standard_normal((2 * k, rank))) / np.sqrt(2)
    mix = (rng.standard_normal((rank, q + 1)) + 1j * rng.standard_normal((rank, q + 1))) / np.sqrt(2)
    e_oc = basis @ mix / np.sqrt(2 * k)
    return PixelNetwork(z_aa=z_aa, z_ap=z_ap, z_pp=z_pp, e_oc=e_oc)


def save_network(prefix: str, net: PixelNetwork) -> tuple[str, str]:
    """Write ``<prefix>_z.txt`` (full Z) and ``<prefix>_eoc.txt``."""
    z_path, e_path = f"{prefix}_z.txt", f"{prefix}_eoc.txt"
    matio.save_matrix(z_path, net.impedance_matrix())
    matio.save_matrix(e_path, net.e_oc)
    return z_path, e_path


def load_network(z_path, e_oc_path, q: int | None = None, k: int | None = None) -> PixelNetwork:
    """Load measured Z ((Q+1)x(Q+1)) and E_oc (2K x (Q+1)) files.

    Raises MatrixFormatError on shape disagreement or an asymmetric Z_PP.
    """
    n_ports = None if q is None else q + 1
    z = matio.load_matrix(z_path, shape=(n_ports, n_ports))
    if z.shape[0] != z.shape[1] or z.shape[0] < 2:
        raise MatrixFormatError(f"{z_path}: impedance matrix must be square with Q+1 >= 2")
    if np.max(np.abs(z - z.T)) > SYMMETRY_RTOL * np.max(np.abs(z)):
        raise MatrixFormatError(f"{z_path}: impedance matrix is not symmetric")
    e_oc = matio.load_matrix(e_oc_path, shape=(None if k is None else 2 * k, z.shape[0]))
    return PixelNetwork(z_aa=z[0, 0], z_ap=z[0, 1:], z_pp=z[1:, 1:], e_oc=e_oc)
