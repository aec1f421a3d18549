"""Plain-text serialization shared by all modules.

Complex matrix format::

    rows cols
    re im re im ...      # one line per row, ``cols`` pairs

Support lists hold one ``row col`` pair per line; coder lists hold one
0/1 string per line.
"""
from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .errors import MatrixFormatError

PathLike = str | os.PathLike


def format_matrix(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.ndim != 2:
        raise MatrixFormatError("only 2-D matrices can be written")
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    for row in m:
        lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise MatrixFormatError(f"{source}: empty matrix file")
    try:
        rows, cols = (int(v) for v in lines[0].split())
    except ValueError:
        raise MatrixFormatError(f"{source}: first line must be 'rows cols'") from None
    if rows < 0 or cols < 0:
        raise MatrixFormatError(f"{source}: negative dimensions")
    if len(lines) - 1 != rows:
        raise MatrixFormatError(f"{source}: header declares {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=complex)
    for i, ln in enumerate(lines[1:]):
        try:
            vals = np.array(ln.split(), dtype=float)
        except ValueError:
            raise MatrixFormatError(f"{source}: non-numeric entry on row {i}") from None
        if vals.size != 2 * cols:
            raise MatrixFormatError(
                f"{source}: row {i} has {vals.size // 2} complex entries, expected {cols}"
            )
        out[i] = vals[0::2] + 1j * vals[1::2]
    if not np.all(np.isfinite(out)):
        raise MatrixFormatError(f"{source}: non-finite entries")
    return out


def save_matrix(path: PathLike, m: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(m))


def load_matrix(path: PathLike, shape: tuple[int | None, int | None] | None = None) -> np.ndarray:
    """Read a complex matrix; ``shape`` entries that are not None are enforced."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise MatrixFormatError(f"{path}: {exc.strerror}") from exc
    m = parse_matrix(text, source=str(path))
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and m.shape[axis] != want:
                raise MatrixFormatError(
                    f"{path}: expected shape {shape}, got {m.shape}"
                )
    return m


def save_support(path: PathLike, support: Iterable[tuple[int, int]]) -> None:
    with open(path, "w") as fh:
        for r, c in support:
            fh.write(f"{int(r)} {int(c)}\n")


def load_support(path: PathLike) -> list[tuple[int, int]]:
    out = []
    try:
        with open(path) as fh:
            for i, ln in enumerate(fh):
                if not ln.strip():
                    continue
                parts = ln.split()
                if len(parts) != 2:
                    raise MatrixFormatError(f"{path}: line {i + 1} is not 'row col'")
                out.append((int(parts[0]), int(parts[1])))
    except OSError as exc:
        raise MatrixFormatError(f"{path}: {exc.strerror}") from exc
    except ValueError:
        raise MatrixFormatError(f"{path}: non-integer support index") from None
    return out


def save_coders(path: PathLike, coders: Sequence) -> None:
    with open(path, "w") as fh:
        for c in coders:
            bits = getattr(c, "bits", c)
            fh.write("".join(str(int(b)) for b in bits) + "\n")


def load_coders(path: PathLike, q: int | None = None) -> list[np.ndarray]:
    out = []
    with open(path) as fh:
        for i, ln in enumerate(fh):
            s = ln.strip()
            if not s:
                continue
            if set(s) - {"0", "1"}:
                raise MatrixFormatError(f"{path}: line {i + 1} is not a 0/1 string")
            if q is not None and len(s) != q:
                raise MatrixFormatError(f"{path}: line {i + 1} has {len(s)} bits, expected {q}")
            out.append(np.array([int(ch) for ch in s], dtype=np.int8))
    return out
