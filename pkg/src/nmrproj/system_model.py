"""Dipolar-coupled spin ring: couplings, Hamiltonians and eigenstate labels.

All Hamiltonians are in rad/s; user-facing frequencies are in Hz and are
converted with an explicit factor of 2*pi here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

from .spin_algebra import (
    collective_op,
    hermitian_eig,
    magnetic_numbers,
    single_spin_op,
    total_spin_squared,
)

TWO_PI = 2.0 * np.pi

# b_jk scales as r^-3; on a regular hexagon r_meta = sqrt(3) r_ortho, r_para = 2 r_ortho
RING_RATIOS = {1: 1.0, 2: 3.0**-1.5, 3: 1.0 / 8.0}


@dataclass(frozen=True, eq=False)
class CouplingSet:
    """Symmetric matrix of residual dipolar constants ``b`` in rad/s."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("coupling matrix must be square")
        if not np.allclose(b, b.T, rtol=0, atol=1e-12 * max(1.0, np.abs(b).max(initial=0))):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(b) != 0):
            raise ValueError("coupling matrix must have a zero diagonal")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def b_hz(self) -> np.ndarray:
        return self.b / TWO_PI

    def is_cyclic(self) -> bool:
        """True if the couplings are invariant under the shift k -> k+1 (mod n)."""
        perm = np.roll(np.arange(self.n), 1)
        return bool(np.allclose(self.b, self.b[np.ix_(perm, perm)]))


@dataclass(frozen=True)
class ClusterConfig:
    """Cluster parameters as they appear in the experiment config.

    ``b_ortho_hz`` is a configuration default, not a measured value: every
    reproduced observable depends only on the coupling ratios and the sign.
    The sign is positive so that, with the ``b (ZZ - XX/2 - YY/2)`` form, the
    high-spin states are the lowest in energy of each M_Z sector.
    """

    b_ortho_hz: float = 1400.0
    offset_hz: float = 0.0
    n: int = 6

    def __post_init__(self):
        if self.n != 6:
            raise ValueError("the benzene ring model has exactly 6 spins")


def ring_distance(j: int, k: int, n: int) -> int:
    d = abs(j - k) % n
    return min(d, n - d)


def benzene_couplings(b_ortho_hz: float) -> CouplingSet:
    """Hexagon couplings with ortho : meta : para = 1 : 3^(-3/2) : 1/8."""
    n = 6
    b = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            if j != k:
                b[j, k] = TWO_PI * b_ortho_hz * RING_RATIOS[ring_distance(j, k, n)]
    return CouplingSet(b)


def dipolar_hamiltonian(c: CouplingSet) -> np.ndarray:
    """sum_{k>j} b_jk (S_kZ S_jZ - S_kX S_jX / 2 - S_kY S_jY / 2)."""
    n = c.n
    h = np.zeros((2**n, 2**n), dtype=np.complex128)
    for j in range(1, n + 1):
        for k in range(j + 1, n + 1):
            bjk = c.b[j - 1, k - 1]
            if bjk == 0:
                continue
            zz = single_spin_op(k, "Z", n) @ single_spin_op(j, "Z", n)
            xx = single_spin_op(k, "X", n) @ single_spin_op(j, "X", n)
            yy = single_spin_op(k, "Y", n) @ single_spin_op(j, "Y", n)
            h += bjk * (zz - 0.5 * xx - 0.5 * yy)
    return h


def rotating_frame_hamiltonian(c: CouplingSet, offset: float, amp: float, phase: float) -> np.ndarray:
    """2 pi offset S_Z + H_dip - 2 pi amp (S_X cos phase + S_Y sin phase); offset and amp in Hz."""
    n = c.n
    return (
        TWO_PI * offset * collective_op("Z", n)
        + dipolar_hamiltonian(c)
        - TWO_PI * amp * (np.cos(phase) * collective_op("X", n) + np.sin(phase) * collective_op("Y", n))
    )


@lru_cache(maxsize=None)
def cyclic_shift(n: int) -> np.ndarray:
    """Permutation operator moving the state of spin k onto spin k+1 (mod n)."""
    dim = 2**n
    t = np.zeros((dim, dim))
    for idx in range(dim):
        # spin 1 is the most significant bit
        bits = [(idx >> (n - 1 - s)) & 1 for s in range(n)]
        shifted = bits[-1:] + bits[:-1]
        new = 0
        for bit in shifted:
            new = (new << 1) | bit
        t[new, idx] = 1.0
    t.setflags(write=False)
    return t


def _shift_surrogate(t: np.ndarray) -> np.ndarray:
    # Hermitian, commutes with t, and separates all n-th roots of unity
    alpha = 0.3819660112501051
    return 0.5 * (t + t.T.conj()) + alpha * (t - t.T.conj()) / 2j


def _wavenumber(vec: np.ndarray, t: np.ndarray, n: int) -> int:
    z = np.vdot(vec, t @ vec)
    return int(np.round(np.angle(z) * n / TWO_PI)) % n


@lru_cache(maxsize=None)
def momentum_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unitary ``w`` whose columns are cyclic-shift eigenvectors, grouped by
    wavenumber, and the wavenumber label of each column."""
    t = cyclic_shift(n)
    _, v = hermitian_eig(_shift_surrogate(t))
    k = np.array([_wavenumber(v[:, i], t, n) for i in range(v.shape[1])])
    order = np.argsort(k, kind="stable")
    w, k = v[:, order], k[order]
    w.setflags(write=False)
    k.setflags(write=False)
    return w, k


class EigenState(NamedTuple):
    energy: float
    m_z: int
    s_squared: float
    s_eff: float
    k: int
    vector: np.ndarray


def effective_spin(s_squared):
    """Solve s (s + 1) = <S^2> for s >= 0."""
    return 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * np.maximum(s_squared, 0.0)))


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenstates ordered by M_Z ascending, then energy ascending.

    ``vectors[:, i]`` is state ``i``; ``k`` is the cyclic wavenumber, or -1
    when the Hamiltonian has no cyclic symmetry.
    """

    n: int
    hamiltonian: np.ndarray
    energies: np.ndarray
    m_z: np.ndarray
    s_squared: np.ndarray
    s_eff: np.ndarray
    k: np.ndarray
    vectors: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.energies)

    def __getitem__(self, i) -> EigenState:
        return EigenState(
            float(self.energies[i]),
            int(self.m_z[i]),
            float(self.s_squared[i]),
            float(self.s_eff[i]),
            int(self.k[i]),
            self.vectors[:, i],
        )

    @property
    def states(self) -> list[EigenState]:
        return [self[i] for i in range(len(self))]

    @property
    def m_values(self) -> np.ndarray:
        return np.unique(self.m_z)

    def sector(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.m_z == m)

    def populations(self, rho) -> np.ndarray:
        """Diagonal of ``rho`` in this eigenbasis."""
        v = self.vectors
        return np.real(np.einsum("ji,jk,ki->i", v.conj(), np.asarray(rho), v))

    def index_of(self, s: float, m_z: int) -> int:
        """State of sector ``m_z`` whose effective spin is closest to ``s``.

        Ties go to the lower energy; for |m_z| >= n/2 - 1 the match is exact.
        """
        idx = self.sector(m_z)
        if idx.size == 0:
            raise ValueError(f"no states with M_Z = {m_z}")
        if s < abs(m_z):
            raise ValueError(f"S = {s} cannot carry M_Z = {m_z}")
        dist = np.round(np.abs(self.s_eff[idx] - s), 9)
        best = np.lexsort((self.energies[idx], dist))[0]
        return int(idx[best])


def classify_eigenstates(h: np.ndarray, n: int | None = None, tol: float = 1e-9) -> EigenSystem:
    """Diagonalise an M_Z-conserving Hamiltonian sector by sector and label
    each state with energy, M_Z, <S^2>, effective spin and wavenumber.

    Degenerate levels are resolved by diagonalising the cyclic shift inside
    the degenerate subspace, so labels are deterministic.
    """
    h = np.asarray(h, dtype=np.complex128)
    dim = h.shape[0]
    n = n if n is not None else int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError("Hamiltonian dimension is not 2**n")
    scale = max(1.0, float(np.abs(h).max()))
    sz = collective_op("Z", n)
    if np.abs(h @ sz - sz @ h).max() > tol * scale:
        raise ValueError("Hamiltonian mixes M_Z sectors")
    t = cyclic_shift(n)
    cyclic = np.abs(h @ t - t @ h).max() <= tol * scale
    surrogate = _shift_surrogate(t) if cyclic else None
    s2 = total_spin_squared(n)
    mz_basis = magnetic_numbers(n)

    energies, mzs, vecs, ks = [], [], [], []
    for m in np.unique(mz_basis):
        idx = np.flatnonzero(mz_basis == m)
        w, v = hermitian_eig(h[np.ix_(idx, idx)])
        full = np.zeros((dim, idx.size), dtype=np.complex128)
        full[idx] = v
        kk = np.full(idx.size, -1)
        if cyclic:
            start = 0
            while start < idx.size:
                stop = start + 1
                while stop < idx.size and w[stop] - w[start] <= tol * scale:
                    stop += 1
                sub = full[:, start:stop]
                if stop - start > 1:
                    _, u = hermitian_eig(sub.conj().T @ surrogate @ sub)
                    sub = sub @ u
                    full[:, start:stop] = sub
                kk[start:stop] = [_wavenumber(sub[:, i], t, n) for i in range(stop - start)]
                order = np.argsort(kk[start:stop], kind="stable")
                full[:, start:stop] = full[:, start:stop][:, order]
                kk[start:stop] = kk[start:stop][order]
                start = stop
        energies.append(w)
        mzs.append(np.full(idx.size, int(round(m))))
        vecs.append(full)
        ks.append(kk)

    vectors = np.concatenate(vecs, axis=1)
    s_sq = np.real(np.einsum("ji,jk,ki->i", vectors.conj(), s2, vectors))
    return EigenSystem(
        n=n,
        hamiltonian=h,
        energies=np.concatenate(energies),
        m_z=np.concatenate(mzs),
        s_squared=s_sq,
        s_eff=effective_spin(s_sq),
        k=np.concatenate(ks),
        vectors=vectors,
    )


def highspin_states(es: EigenSystem, tol: float = 1e-9) -> list[int]:
    """Lowest-energy state of every M_Z sector, M_Z ascending.

    A degenerate sector minimum is reported with a warning and resolved in
    favour of the larger <S^2>, then the smaller wavenumber.
    """
    scale = max(1.0, float(np.abs(es.energies).max()))
    out = []
    for m in es.m_values:
        idx = es.sector(m)
        e = es.energies[idx]
        lowest = idx[e - e.min() <= tol * scale]
        if lowest.size > 1:
            warnings.warn(f"degenerate lowest level in sector M_Z={m}; picking by <S^2>", stacklevel=2)
        best = lowest[np.lexsort((es.k[lowest], -np.round(es.s_squared[lowest], 9)))[0]]
        out.append(int(best))
    return out


class SpinWave(NamedTuple):
    index: int
    m_z: int
    k: int
    s_eff: float


def classify_spin_waves(es: EigenSystem) -> list[SpinWave]:
    """Label the one-flip states (M_Z = +-(n/2 - 1)) with their wavenumber."""
    if np.any(es.k < 0):
        raise ValueError("Hamiltonian is not invariant under the cyclic shift")
    top = es.n // 2 - 1 if es.n % 2 == 0 else None
    if top is None:
        raise ValueError("spin waves are labelled for even ring sizes only")
    out = []
    for m in (-top, top):
        for i in es.sector(m):
            out.append(SpinWave(int(i), int(m), int(es.k[i]), float(es.s_eff[i])))
    return out


class Cluster:
    """The benzene ring in the spectrometer reference frame.

    ``h_ref = H_dip + 2 pi offset_hz S_Z`` is the free-evolution Hamiltonian;
    its eigensystem labels every state the pulse engine and the spectra use.
    """

    def __init__(self, config: ClusterConfig | None = None, couplings: CouplingSet | None = None):
        self.config = config or ClusterConfig()
        self.couplings = couplings if couplings is not None else benzene_couplings(self.config.b_ortho_hz)
        self.n = self.couplings.n

    @property
    def offset_hz(self) -> float:
        return self.config.offset_hz

    @cached_property
    def h_dip(self) -> np.ndarray:
        return dipolar_hamiltonian(self.couplings)

    @cached_property
    def h_ref(self) -> np.ndarray:
        return self.h_dip + TWO_PI * self.offset_hz * collective_op("Z", self.n)

    @cached_property
    def eigensystem(self) -> EigenSystem:
        return classify_eigenstates(self.h_ref, self.n)

    @cached_property
    def highspin(self) -> list[int]:
        return highspin_states(self.eigensystem)

    def state_index(self, s: float, m_z: int) -> int:
        return self.eigensystem.index_of(s, m_z)
