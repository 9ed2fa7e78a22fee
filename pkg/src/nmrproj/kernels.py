"""Hot numeric kernels: complex Hermitian Jacobi eigensolver, the
piecewise-constant propagator loop and FID synthesis.

Each kernel exists twice. The ``*_nb`` variants are explicit loops compiled
with numba; the ``*_np`` variants are vectorised numpy. ``jacobi_eigh``,
``propagate_blocks`` and ``fid_signal`` dispatch on
:data:`nmrproj._backend.BACKEND` unless given ``backend``.
"""

from __future__ import annotations

import numpy as np

from ._backend import BACKEND, njit

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100


class NumericalError(RuntimeError):
    """A numerical tolerance was breached (non-convergence, non-finite data)."""


# ---------------------------------------------------------------------------
# Jacobi eigensolver
# ---------------------------------------------------------------------------


@njit(cache=True)
def _jacobi_sweeps_nb(a, v, tol, max_sweeps):
    # In place: a -> diag, v accumulates rotations. Returns sweeps used, -1 if
    # the off-diagonal norm never dropped below tol * ||a||_F.
    n = a.shape[0]
    norm2 = 0.0
    for i in range(n):
        for j in range(n):
            norm2 += a[i, j].real ** 2 + a[i, j].imag ** 2
    thresh = tol * np.sqrt(norm2)
    skip = 1e-3 * thresh / max(n, 1)
    for sweep in range(max_sweeps + 1):
        off2 = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off2 += a[p, q].real ** 2 + a[p, q].imag ** 2
        if np.sqrt(2.0 * off2) <= thresh:
            return sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= skip:
                    continue
                e = apq / mag
                ec = e.conjugate()
                tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                jqp = -s * ec
                jqq = c * ec
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = akp * c + akq * jqp
                    a[k, q] = akp * s + akq * jqq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = apk * c + aqk * jqp.conjugate()
                    a[q, k] = apk * s + aqk * jqq.conjugate()
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = vkp * c + vkq * jqp
                    v[k, q] = vkp * s + vkq * jqq
    return -1


def _jacobi_sweeps_np(a, v, tol, max_sweeps):
    n = a.shape[0]
    thresh = tol * np.linalg.norm(a)
    skip = 1e-3 * thresh / max(n, 1)
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        if np.sqrt(2.0 * np.sum(np.abs(a[iu]) ** 2)) <= thresh:
            return sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= skip:
                    continue
                e = apq / mag
                tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = np.sign(tau or 1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                jqp = -s * np.conj(e)
                jqq = c * np.conj(e)
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = ap * c + aq * jqp
                a[:, q] = ap * s + aq * jqq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = rp * c + rq * np.conj(jqp)
                a[q, :] = rp * s + rq * np.conj(jqq)
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c + vq * jqp
                v[:, q] = vp * s + vq * jqq
    return -1


def jacobi_eigh(a, v0=None, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS, backend=None):
    """Cyclic Jacobi diagonalisation of a complex Hermitian matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Hermitian matrix. Not modified.
    v0 : (n, n) array_like, optional
        Unitary starting basis (warm start). The rotations act on
        ``v0^H a v0``.
    tol : float
        Convergence when the off-diagonal Frobenius norm is below
        ``tol * ||a||_F``.
    backend : {"numba", "numpy"}, optional
        Overrides the process-wide backend.

    Returns
    -------
    w : (n,) ndarray
        Eigenvalues, ascending.
    v : (n, n) ndarray
        Orthonormal eigenvectors as columns.
    """
    a = np.array(a, dtype=np.complex128)
    n = a.shape[0]
    if v0 is None:
        v = np.eye(n, dtype=np.complex128)
    else:
        v = np.array(v0, dtype=np.complex128)
        a = v.conj().T @ a @ v
        a = 0.5 * (a + a.conj().T)
    backend = backend or BACKEND
    sweeps_fn = _jacobi_sweeps_nb if backend == "numba" else _jacobi_sweeps_np
    used = sweeps_fn(a, v, tol, max_sweeps)
    if used < 0:
        raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


# ---------------------------------------------------------------------------
# Propagation over symmetry blocks
# ---------------------------------------------------------------------------


@njit(cache=True)
def _propagate_nb(ops, coeffs, dt, snap_every, tol, max_sweeps):
    # ops: (n_ops, nb, m, m); coeffs: (n_steps, n_ops). Returns the cumulative
    # block propagators and the cumulative propagator every snap_every steps.
    n_ops, nb, m, _ = ops.shape
    n_steps = coeffs.shape[0]
    n_snap = n_steps // snap_every if snap_every > 0 else 0
    snaps = np.zeros((n_snap, nb, m, m), dtype=np.complex128)
    u = np.zeros((nb, m, m), dtype=np.complex128)
    vprev = np.zeros((nb, m, m), dtype=np.complex128)
    for b in range(nb):
        for i in range(m):
            u[b, i, i] = 1.0
            vprev[b, i, i] = 1.0
    h = np.empty((m, m), dtype=np.complex128)
    eye = np.eye(m, dtype=np.complex128)
    # two-level accumulation keeps roundoff growth well below linear in n_steps
    chunk = np.zeros((nb, m, m), dtype=np.complex128)
    for b in range(nb):
        chunk[b] = eye
    in_chunk = 0
    for step in range(n_steps):
        for b in range(nb):
            h[:, :] = 0.0
            for o in range(n_ops):
                c = coeffs[step, o]
                if c != 0.0:
                    h += c * ops[o, b]
            vb = vprev[b].copy()
            hw = np.dot(np.dot(vb.conj().T, h), vb)
            for i in range(m):
                for j in range(i + 1, m):
                    x = 0.5 * (hw[i, j] + hw[j, i].conjugate())
                    hw[i, j] = x
                    hw[j, i] = x.conjugate()
            if _jacobi_sweeps_nb(hw, vb, tol, max_sweeps) < 0:
                raise RuntimeError("Jacobi did not converge during propagation")
            # rotations leave the basis off unitarity at roundoff level, and that
            # bias would accumulate over the step product
            vb = 0.5 * np.dot(vb, 3.0 * eye - np.dot(vb.conj().T, vb))
            vprev[b] = vb
            vph = vb.copy()
            for j in range(m):
                ph = np.exp(-1j * hw[j, j].real * dt)
                for i in range(m):
                    vph[i, j] *= ph
            chunk[b] = np.dot(np.dot(vph, vb.conj().T), chunk[b])
        in_chunk += 1
        if in_chunk == 256 or step == n_steps - 1:
            for b in range(nb):
                u[b] = np.dot(chunk[b], u[b])
                chunk[b] = eye
            in_chunk = 0
        if snap_every > 0 and (step + 1) % snap_every == 0:
            for b in range(nb):
                snaps[(step + 1) // snap_every - 1, b] = np.dot(chunk[b], u[b])
    return u, snaps


def _ordered_product(us):
    # us[0] acts first; returns us[-1] @ ... @ us[0] by pairwise reduction.
    while us.shape[0] > 1:
        if us.shape[0] % 2:
            head = us[:-1]
            us = np.concatenate([head[1::2] @ head[0::2], us[-1:]])
        else:
            us = us[1::2] @ us[0::2]
    return us[0]


def _propagate_np(ops, coeffs, dt, snap_every, chunk=1024):
    n_ops, nb, m, _ = ops.shape
    n_steps = coeffs.shape[0]
    if snap_every > 0:
        chunk = snap_every
    n_snap = n_steps // snap_every if snap_every > 0 else 0
    snaps = np.zeros((n_snap, nb, m, m), dtype=np.complex128)
    u = np.broadcast_to(np.eye(m, dtype=np.complex128), (nb, m, m)).copy()
    for start in range(0, n_steps, chunk):
        c = coeffs[start : start + chunk]
        h = np.einsum("lo,obij->lbij", c, ops)
        w, v = np.linalg.eigh(h)
        us = (v * np.exp(-1j * w * dt)[..., None, :]) @ v.conj().swapaxes(-1, -2)
        u = _ordered_product(us) @ u
        stop = start + c.shape[0]
        if snap_every > 0 and stop % snap_every == 0:
            snaps[stop // snap_every - 1] = u
    return u, snaps


def propagate_blocks(ops, coeffs, dt, snap_every=0, backend=None):
    """Time-ordered product of ``exp(-i H_k dt)`` over block-diagonal generators.

    ``H_k = sum_o coeffs[k, o] * ops[o]`` with ``ops`` of shape
    ``(n_ops, n_blocks, m, m)`` (blocks zero-padded to a common size ``m``).
    Returns ``(u, snaps)``: the final block propagators and the cumulative
    propagator after every ``snap_every`` steps.
    """
    ops = np.ascontiguousarray(ops, dtype=np.complex128)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(ops))):
        raise NumericalError("non-finite Hamiltonian entries")
    backend = backend or BACKEND
    if backend == "numba":
        try:
            u, snaps = _propagate_nb(ops, coeffs, float(dt), int(snap_every), JACOBI_TOL, JACOBI_MAX_SWEEPS)
        except RuntimeError as exc:
            raise NumericalError(str(exc)) from exc
    else:
        u, snaps = _propagate_np(ops, coeffs, float(dt), int(snap_every))
    if not np.all(np.isfinite(u)):
        raise NumericalError("non-finite propagator")
    return u, snaps


# ---------------------------------------------------------------------------
# Free-induction decay synthesis
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fid_nb(amps, omegas, dwell, points, decay):
    out = np.zeros(points, dtype=np.complex128)
    for j in range(amps.shape[0]):
        step = np.exp((1j * omegas[j] - decay) * dwell)
        z = amps[j] + 0.0j
        for n in range(points):
            out[n] += z
            z *= step
    return out


def _fid_np(amps, omegas, dwell, points, decay, chunk=256):
    t = np.arange(points) * dwell
    out = np.zeros(points, dtype=np.complex128)
    for start in range(0, len(amps), chunk):
        a = amps[start : start + chunk]
        w = omegas[start : start + chunk]
        out += a @ np.exp(np.outer(1j * w, t))
    return out * np.exp(-decay * t)


def fid_signal(amps, omegas, dwell, points, decay, backend=None):
    """sum_j amps[j] exp((i omegas[j] - decay) t_n), t_n = n * dwell."""
    amps = np.ascontiguousarray(amps, dtype=np.complex128)
    omegas = np.ascontiguousarray(omegas, dtype=np.float64)
    backend = backend or BACKEND
    if backend == "numba":
        return _fid_nb(amps, omegas, float(dwell), int(points), float(decay))
    return _fid_np(amps, omegas, float(dwell), int(points), float(decay))
