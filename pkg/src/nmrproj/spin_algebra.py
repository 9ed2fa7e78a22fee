"""Spin-1/2 operator algebra for small clusters and the Wigner-rotation oracle.

Conventions: hbar = 1, spin k = 1 is the leftmost Kronecker factor, and the
single-spin basis is (|up>, |down>), so the all-up state is basis index 0.
Operators are plain complex ``ndarray`` objects; cached ones are returned
read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import kernels

HERMITIAN_TOL = 1e-12

_PAULI = {
    "X": np.array([[0.0, 0.5], [0.5, 0.0]], dtype=np.complex128),
    "Y": np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=np.complex128),
    "Z": np.array([[0.5, 0.0], [0.0, -0.5]], dtype=np.complex128),
}


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Probability of each magnetic quantum number, ``m_values`` ascending."""

    m_values: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m_values, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if m.shape != p.shape or m.ndim != 1:
            raise ValueError("m_values and probabilities must be matching 1-D arrays")
        object.__setattr__(self, "m_values", m)
        object.__setattr__(self, "probabilities", p)

    def __len__(self):
        return len(self.m_values)

    def __getitem__(self, m):
        idx = np.flatnonzero(np.isclose(self.m_values, m))
        if idx.size == 0:
            raise KeyError(m)
        return float(self.probabilities[idx[0]])

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def as_dict(self) -> dict:
        return {float(m): float(p) for m, p in zip(self.m_values, self.probabilities)}

    def max_abs_error(self, other: "OutcomeDistribution") -> float:
        """L-infinity distance; both distributions must share ``m_values``."""
        if not np.allclose(self.m_values, other.m_values):
            raise ValueError("distributions are over different m values")
        return float(np.max(np.abs(self.probabilities - other.probabilities)))


def _axis(axis: str) -> str:
    key = str(axis).upper()
    if key not in _PAULI:
        raise ValueError(f"axis must be one of X, Y, Z; got {axis!r}")
    return key


def _frozen(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _single_spin_op(k: int, axis: str, n: int) -> np.ndarray:
    left = np.eye(2 ** (k - 1), dtype=np.complex128)
    right = np.eye(2 ** (n - k), dtype=np.complex128)
    return _frozen(np.kron(np.kron(left, _PAULI[axis]), right))


def single_spin_op(k: int, axis: str, n: int) -> np.ndarray:
    """Component ``axis`` of spin ``k`` (1-based) in an ``n``-spin product space."""
    if n < 1:
        raise ValueError("spin count must be positive")
    if not 1 <= k <= n:
        raise IndexError(f"spin index {k} out of range 1..{n}")
    return _single_spin_op(int(k), _axis(axis), int(n))


@lru_cache(maxsize=None)
def _collective_op(axis: str, n: int) -> np.ndarray:
    return _frozen(sum(_single_spin_op(k, axis, n) for k in range(1, n + 1)))


def collective_op(axis: str, n: int) -> np.ndarray:
    """Total spin component S_axis = sum_k S_k,axis."""
    if n < 1:
        raise ValueError("spin count must be positive")
    return _collective_op(_axis(axis), int(n))


@lru_cache(maxsize=None)
def _total_spin_squared(n: int) -> np.ndarray:
    sx, sy, sz = (_collective_op(a, n) for a in "XYZ")
    return _frozen(sx @ sx + sy @ sy + sz @ sz)


def total_spin_squared(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("spin count must be positive")
    return _total_spin_squared(int(n))


def raising_op(n: int) -> np.ndarray:
    """S+ = S_X + i S_Y."""
    return collective_op("X", n) + 1j * collective_op("Y", n)


def magnetic_numbers(n: int) -> np.ndarray:
    """M_Z of every product basis state, as a float array of length 2**n."""
    return np.real(np.diag(collective_op("Z", n))).copy()


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * scale)


def hermitian_eig(a) -> EigenDecomposition:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Raises ``ValueError`` for non-Hermitian input and
    :class:`~nmrproj.kernels.NumericalError` if the sweeps fail to converge.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not is_hermitian(a):
        raise ValueError("matrix is not Hermitian")
    w, v = kernels.jacobi_eigh(0.5 * (a + a.conj().T))
    return EigenDecomposition(w, v)


def unitary_step(h, dt: float) -> np.ndarray:
    """Exact propagator exp(-i h dt) of a Hermitian generator."""
    w, v = hermitian_eig(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def spin_matrices(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J_x, J_y, J_z) of the spin-``s`` irrep in the basis M = s, s-1, ..., -s."""
    dim = int(round(2 * s)) + 1
    if dim < 1 or not np.isclose(2 * s, dim - 1):
        raise ValueError(f"spin must be a non-negative multiple of 1/2, got {s}")
    m = s - np.arange(dim)
    # <m+1|J+|m> sits one row above the diagonal because M decreases with index
    jp = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), 1).astype(np.complex128)
    jm = jp.conj().T
    return 0.5 * (jp + jm), -0.5j * (jp - jm), np.diag(m).astype(np.complex128)


def wigner_rotation_probs(s: float, m: float, beta: float) -> OutcomeDistribution:
    """|d^s_{m', m}(beta)|^2 over m' = -s..s.

    Built by exponentiating J_y inside the (2s+1)-dimensional irrep, so it is
    independent of any many-spin construction. At ``beta = pi/2`` this is the
    distribution of S_X outcomes for an S_Z eigenstate |s, m>.
    """
    _, jy, _ = spin_matrices(s)
    if abs(m) > s + 1e-12 or not np.isclose(s - m, round(s - m)):
        raise ValueError(f"|m| must not exceed s and s - m must be integer; got s={s}, m={m}")
    d = unitary_step(jy, beta)
    col = int(round(s - m))
    probs = np.abs(d[:, col]) ** 2
    m_values = s - np.arange(len(probs))
    return OutcomeDistribution(m_values[::-1].copy(), probs[::-1].copy())
