"""Initial density matrices and the direct projective-measurement oracle.

Pseudopure states are stored as exact pure projectors. The identity part of
a real pseudopure state is invariant under every unitary and never shows up
in a deviation spectrum, so dropping it changes nothing observable.
"""

from __future__ import annotations

import numpy as np

from .spin_algebra import OutcomeDistribution, collective_op, hermitian_eig
from .system_model import EigenSystem

DENSITY_TOL = 1e-12


def validate_density_matrix(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    """Return ``rho`` as an array after checking Hermiticity, unit trace and
    positivity (eigenvalues >= -1e-10)."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3g}, not 1")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def pseudopure(es: EigenSystem, index: int) -> np.ndarray:
    """Pure projector onto eigenstate ``index`` of ``es``."""
    if not 0 <= index < len(es):
        raise IndexError(f"state index {index} out of range")
    v = es.vectors[:, index]
    return np.outer(v, v.conj())


def thermal_equilibrium(eps: float, n: int = 6) -> np.ndarray:
    """High-temperature equilibrium state (I + eps S_Z) / 2**n.

    Every pair of states with Delta M_Z = 1 differs in population by
    ``eps / 2**n``. Positivity requires ``|eps| <= 2 / n``.
    """
    if abs(eps) > 2.0 / n + 1e-15:
        raise ValueError(f"|eps| must not exceed {2.0 / n:.4g} for positivity")
    dim = 2**n
    return (np.eye(dim, dtype=np.complex128) + eps * collective_op("Z", n)) / dim


def group_eigenvalues(w: np.ndarray, rel_tol: float = 1e-9) -> list[np.ndarray]:
    """Split ascending eigenvalues into clusters of numerically equal values."""
    tol = rel_tol * max(1.0, float(np.abs(w).max(initial=0.0)))
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol:
            groups.append(np.arange(start, i))
            start = i
    return groups


def project_measurement(rho, observable, rel_tol: float = 1e-9) -> OutcomeDistribution:
    """Outcome probabilities of a projective measurement of ``observable``.

    Eigenvalues equal within ``rel_tol * max|lambda|`` form one outcome;
    its probability is the sum of <v|rho|v> over that eigenspace.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    w, v = hermitian_eig(observable)
    diag = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho, v))
    values, probs = [], []
    for g in group_eigenvalues(w, rel_tol):
        values.append(w[g].mean())
        probs.append(diag[g].sum())
    return OutcomeDistribution(np.array(values), np.array(probs))
