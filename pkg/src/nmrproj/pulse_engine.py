"""Density-matrix evolution through pulse sequences.

Frame conventions
-----------------
The free Hamiltonian is ``Cluster.h_ref`` (dipolar couplings plus the
resonance offset). An RF field of frequency ``nu(t)`` (Hz, relative to the
reference) and amplitude ``a(t)`` is handled in the frame co-rotating with
the RF phase, where

    H(t) = h_ref - 2 pi nu(t) S_Z - 2 pi a(t) (S_X cos phi + S_Y sin phi).

With ``nu`` swept upward from 0 the effective field turns from +x toward +z,
so an S_X eigenstate with M_X = m ends in the M_Z = m sector. Shaped pulses
rotate the result back into the reference frame before returning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .spin_algebra import collective_op, magnetic_numbers
from .state_prep import group_eigenvalues
from .system_model import TWO_PI, Cluster, cyclic_shift, momentum_basis

# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lock:
    """Frequency-swept spin-lock pulse.

    The amplitude is constant until ``dur_s - ramp_s`` and then falls to zero
    with a half-cosine; the RF frequency rises linearly from 0 to
    ``sweep_hz`` over ``sweep_s`` and stays there. ``ramp_s`` defaults to
    ``dur_s - sweep_s``.
    """

    amp_hz: float = 19e3
    dur_s: float = 25e-3
    sweep_hz: float = 20e3
    sweep_s: float = 20e-3
    ramp_s: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if min(self.dur_s, self.sweep_s, self.ramp) < 0:
            raise ValueError("lock durations must be non-negative")
        if self.sweep_s + self.ramp > self.dur_s * (1 + 1e-12):
            raise ValueError("lock needs sweep_s + ramp_s <= dur_s")

    @property
    def ramp(self) -> float:
        return self.dur_s - self.sweep_s if self.ramp_s is None else self.ramp_s

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        if self.ramp <= 0:
            return np.full_like(t, self.amp_hz)
        x = np.clip((t - (self.dur_s - self.ramp)) / self.ramp, 0.0, 1.0)
        return self.amp_hz * 0.5 * (1.0 + np.cos(np.pi * x))

    def frequency(self, t):
        t = np.asarray(t, dtype=float)
        if self.sweep_s <= 0:
            return np.full_like(t, self.sweep_hz)
        return self.sweep_hz * np.clip(t / self.sweep_s, 0.0, 1.0)

    def accumulated_phase(self, t: float) -> float:
        """2 pi times the integral of the RF frequency from 0 to ``t``."""
        if self.sweep_s <= 0:
            return TWO_PI * self.sweep_hz * t
        ts = min(t, self.sweep_s)
        cycles = 0.5 * self.sweep_hz * ts**2 / self.sweep_s + self.sweep_hz * max(t - self.sweep_s, 0.0)
        return TWO_PI * cycles


@dataclass(frozen=True)
class Hard:
    """Instantaneous rotation by ``angle`` about the axis at ``phase`` in the
    xy plane (phase 0 = +x, pi/2 = +y)."""

    angle: float
    phase: float = 0.0


@dataclass(frozen=True)
class Gaussian:
    """Gaussian-shaped selective pulse.

    The carrier is ``offset_hz`` or, with ``hs_transition = m``, the
    frequency of the high-spin transition M_Z = m -> m + 1. With a peak
    amplitude given, the envelope width is solved so the pulse turns the
    targeted two-level transition by ``angle``; without one the width is
    ``dur_s / 5`` and the peak is solved instead.
    """

    angle: float = math.pi
    dur_s: float = 30e-3
    peak_amp_hz: float | None = 15.0
    offset_hz: float | None = None
    hs_transition: int | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.dur_s < 0:
            raise ValueError("gaussian duration must be non-negative")
        if (self.offset_hz is None) == (self.hs_transition is None):
            raise ValueError("gaussian needs exactly one of offset_hz, hs_transition")


@dataclass(frozen=True)
class Gradient:
    pass


@dataclass(frozen=True)
class Delay:
    dur_s: float

    def __post_init__(self):
        if self.dur_s < 0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class Acquire:
    """Linear-response acquisition; ``None`` fields fall back to the config."""

    read_angle_deg: float | None = None
    points: int | None = None
    dwell_s: float | None = None
    broadening_hz: float | None = None


PulseSegment = Lock | Hard | Gaussian | Gradient | Delay | Acquire


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.5e-6
    convergence: float = 1e-4
    snapshot_s: float = 0.25e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.convergence > 0:
            raise ValueError("convergence tolerance must be positive")


# ---------------------------------------------------------------------------
# Generic propagation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Schedule:
    """Time-dependent Hamiltonian ``sum_o coefficients(t)[o] * operators[o]``.

    ``coefficients`` maps an array of times to an array of shape
    ``(len(t), len(operators))``.
    """

    operators: tuple
    coefficients: Callable[[np.ndarray], np.ndarray]

    def __call__(self, t: float) -> np.ndarray:
        c = np.asarray(self.coefficients(np.array([t], dtype=float)))[0]
        return sum(ci * op for ci, op in zip(c, self.operators))


def constant_schedule(h) -> Schedule:
    h = np.asarray(h, dtype=np.complex128)
    return Schedule((h,), lambda t: np.ones((len(t), 1)))


class _Blocks(NamedTuple):
    columns: list  # per block: the unitary columns spanning it
    ops: np.ndarray  # (n_ops, n_blocks, m, m)


def _block_form(operators) -> _Blocks:
    dim = operators[0].shape[0]
    n = int(round(math.log2(dim)))
    blocks = None
    if 2**n == dim and n > 1:
        t = cyclic_shift(n)
        if all(np.abs(op @ t - t @ op).max() <= 1e-9 * max(1.0, np.abs(op).max()) for op in operators):
            w, k = momentum_basis(n)
            blocks = [w[:, k == kk] for kk in np.unique(k)]
    if blocks is None:
        blocks = [np.eye(dim, dtype=np.complex128)]
    m = max(b.shape[1] for b in blocks)
    ops = np.zeros((len(operators), len(blocks), m, m), dtype=np.complex128)
    for o, op in enumerate(operators):
        for bi, wb in enumerate(blocks):
            s = wb.shape[1]
            ob = wb.conj().T @ op @ wb
            ops[o, bi, :s, :s] = 0.5 * (ob + ob.conj().T)
    return _Blocks(blocks, ops)


def _assemble(blocks: list, u_blocks: np.ndarray) -> np.ndarray:
    dim = blocks[0].shape[0]
    u = np.zeros((dim, dim), dtype=np.complex128)
    for wb, ub in zip(blocks, u_blocks):
        s = wb.shape[1]
        u += wb @ ub[:s, :s] @ wb.conj().T
    return u


def propagator(schedule: Schedule, duration: float, cfg: PropagationConfig | None = None, snapshot_every: int = 0,
               backend: str | None = None):
    """Time-ordered propagator with midpoint sampling.

    Returns ``(u, times, snapshots)`` where ``snapshots[i]`` is the cumulative
    propagator at ``times[i]`` (every ``snapshot_every`` steps). ``backend``
    overrides the process-wide kernel choice.
    """
    cfg = cfg or PropagationConfig()
    operators = [np.asarray(op, dtype=np.complex128) for op in schedule.operators]
    dim = operators[0].shape[0]
    if duration <= 0:
        return np.eye(dim, dtype=np.complex128), np.zeros(0), []
    n_steps = max(1, int(round(duration / cfg.dt)))
    dt = duration / n_steps
    mid = (np.arange(n_steps) + 0.5) * dt
    coeffs = np.asarray(schedule.coefficients(mid), dtype=float).reshape(n_steps, len(operators))
    blocks = _block_form(operators)
    u_blocks, snaps = kernels.propagate_blocks(blocks.ops, coeffs, dt, snapshot_every, backend)
    u = _assemble(blocks.columns, u_blocks)
    times = (np.arange(len(snaps)) + 1) * snapshot_every * dt
    return u, times, [_assemble(blocks.columns, s) for s in snaps]


def _evolve(rho, u):
    return u @ np.asarray(rho, dtype=np.complex128) @ u.conj().T


def propagate(rho, schedule: Schedule, duration: float, cfg: PropagationConfig | None = None) -> np.ndarray:
    """rho -> U rho U^+ with U the time-ordered product of exp(-i H(t_k) dt)."""
    u, _, _ = propagator(schedule, duration, cfg)
    if not np.all(np.isfinite(u)):
        raise kernels.NumericalError("non-finite propagator")
    return _evolve(rho, u)


@dataclass(eq=False)
class PropagationTrace:
    """Density matrices sampled during a propagation (rotating frame)."""

    schedule: Schedule
    times: np.ndarray
    rhos: list = field(repr=False)


def propagate_trace(rho, schedule: Schedule, duration: float, cfg: PropagationConfig | None = None):
    """Like :func:`propagate`, also returning a :class:`PropagationTrace`
    with snapshots every ``cfg.snapshot_s`` (plus t = 0)."""
    cfg = cfg or PropagationConfig()
    every = max(1, int(round(cfg.snapshot_s / cfg.dt)))
    u, times, snaps = propagator(schedule, duration, cfg, snapshot_every=every)
    rho = np.asarray(rho, dtype=np.complex128)
    rhos = [rho] + [_evolve(rho, s) for s in snaps]
    return _evolve(rho, u), PropagationTrace(schedule, np.concatenate([[0.0], times]), rhos)


# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------


def collective_rotation(angle: float, phase: float, n: int) -> np.ndarray:
    """exp(-i angle (S_X cos phase + S_Y sin phase)) as a product of
    single-spin rotations."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    r = np.array(
        [[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]],
        dtype=np.complex128,
    )
    u = np.ones((1, 1), dtype=np.complex128)
    for _ in range(n):
        u = np.kron(u, r)
    return u


def z_rotation(angle: float, n: int) -> np.ndarray:
    return np.diag(np.exp(-1j * angle * magnetic_numbers(n)))


def hard_pulse(rho, angle: float, phase: float = 0.0) -> np.ndarray:
    """Ideal hard pulse: couplings are ignored for the pulse's duration."""
    rho = np.asarray(rho, dtype=np.complex128)
    n = int(round(math.log2(rho.shape[0])))
    return _evolve(rho, collective_rotation(angle, phase, n))


def gradient_dephase(rho) -> np.ndarray:
    """Zero every coherence between different M_Z (infinite-gradient limit)."""
    rho = np.array(rho, dtype=np.complex128)
    m = magnetic_numbers(int(round(math.log2(rho.shape[0]))))
    rho[m[:, None] != m[None, :]] = 0.0
    return rho


def eigenbasis_dephase(rho, cluster: Cluster, rel_tol: float = 1e-9) -> np.ndarray:
    """Average over free-evolution delays: keep only coherences between
    degenerate eigenstates of ``h_ref`` with equal M_Z.

    States with different M_Z are never degenerate in the laboratory frame,
    where the Zeeman term separates them, so their coherences go as well.
    This is the limit of a zero-quantum filter; populations are untouched.
    """
    es = cluster.eigensystem
    v = es.vectors
    rt = v.conj().T @ np.asarray(rho, dtype=np.complex128) @ v
    scale = max(1.0, float(np.abs(es.energies).max()))
    de = np.abs(es.energies[:, None] - es.energies[None, :])
    rt[(de > rel_tol * scale) | (es.m_z[:, None] != es.m_z[None, :])] = 0.0
    return v @ rt @ v.conj().T


def free_evolution(rho, cluster: Cluster, duration: float) -> np.ndarray:
    es = cluster.eigensystem
    u = (es.vectors * np.exp(-1j * es.energies * duration)) @ es.vectors.conj().T
    return _evolve(rho, u)


def lock_schedule(seg: Lock, cluster: Cluster) -> Schedule:
    n = cluster.n
    ops = (cluster.h_ref, collective_op("Z", n), collective_op("X", n), collective_op("Y", n))
    cphi, sphi = math.cos(seg.phase), math.sin(seg.phase)

    def coefficients(t):
        a = seg.amplitude(t)
        return np.column_stack(
            [np.ones_like(a), -TWO_PI * seg.frequency(t), -TWO_PI * a * cphi, -TWO_PI * a * sphi]
        )

    return Schedule(ops, coefficients)


def adiabatic_lock(rho, seg: Lock, cluster: Cluster, cfg: PropagationConfig | None = None, trace: bool = False):
    """Switch a spin lock on instantly, sweep its frequency, ramp it off.

    Returns the density matrix in the reference frame, plus the
    :class:`PropagationTrace` (rotating frame) when ``trace`` is true.
    """
    sched = lock_schedule(seg, cluster)
    back = z_rotation(seg.accumulated_phase(seg.dur_s), cluster.n)
    if trace:
        out, tr = propagate_trace(rho, sched, seg.dur_s, cfg)
        return _evolve(out, back), tr
    return _evolve(propagate(rho, sched, seg.dur_s, cfg), back)


def gaussian_area(peak: float, sigma: float, dur: float) -> float:
    """Integral of peak * exp(-(t - dur/2)^2 / (2 sigma^2)) over [0, dur]."""
    return peak * sigma * math.sqrt(2 * math.pi) * math.erf(dur / (2 * math.sqrt(2) * sigma))


def gaussian_shape(angle: float, dur: float, weight: float, peak: float | None) -> tuple[float, float]:
    """(peak_hz, sigma_s) turning a transition with |<f|S+|i>|^2 = ``weight``
    by ``angle``: angle = 2 pi sqrt(weight) * area."""
    need = angle / (TWO_PI * math.sqrt(weight))
    if peak is None:
        sigma = dur / 5.0
        return need / gaussian_area(1.0, sigma, dur), sigma
    if peak == 0:
        return 0.0, dur / 5.0
    if need >= peak * dur:
        raise ValueError(f"peak {peak} Hz over {dur} s cannot reach the requested flip angle")
    if need <= 0:
        return peak, dur / 5.0
    sigma = brentq(lambda s: gaussian_area(peak, s, dur) - need, 1e-9 * dur, 1e6 * dur, xtol=1e-15, rtol=1e-13)
    return peak, sigma


def resolve_gaussian(seg: Gaussian, cluster: Cluster):
    """Carrier (Hz), peak (Hz) and sigma (s) for a Gaussian segment."""
    from .spectroscopy import transition_table

    tt = transition_table(cluster.eigensystem, highspin=cluster.highspin)
    if seg.hs_transition is not None:
        row = tt.highspin_row(seg.hs_transition)
        if row is None:
            raise ValueError(f"no high-spin transition from M_Z = {seg.hs_transition}")
        nu = float(tt.freq_hz[row])
    else:
        nu = float(seg.offset_hz)
        near = np.flatnonzero(np.abs(tt.freq_hz - nu) <= 1.0)
        row = near[np.argmax(tt.weight[near])] if near.size else None
    if row is None:
        if seg.peak_amp_hz is None:
            raise ValueError("cannot calibrate a gaussian that hits no transition; give peak_amp_hz")
        return nu, seg.peak_amp_hz, seg.dur_s / 5.0
    peak, sigma = gaussian_shape(seg.angle, seg.dur_s, float(tt.weight[row]), seg.peak_amp_hz)
    return nu, peak, sigma


def gaussian_selective(rho, seg: Gaussian, cluster: Cluster, cfg: PropagationConfig | None = None) -> np.ndarray:
    """Shaped pulse under the full free Hamiltonian."""
    nu, peak, sigma = resolve_gaussian(seg, cluster)
    n = cluster.n
    ops = (cluster.h_ref, collective_op("Z", n), collective_op("X", n), collective_op("Y", n))
    cphi, sphi = math.cos(seg.phase), math.sin(seg.phase)
    centre = seg.dur_s / 2

    def coefficients(t):
        a = peak * np.exp(-((t - centre) ** 2) / (2 * sigma**2))
        return np.column_stack([np.ones_like(t), np.full_like(t, -TWO_PI * nu), -TWO_PI * a * cphi, -TWO_PI * a * sphi])

    out = propagate(rho, Schedule(ops, coefficients), seg.dur_s, cfg)
    return _evolve(out, z_rotation(TWO_PI * nu * seg.dur_s, n))


def apply_segment(rho, seg, cluster: Cluster, cfg: PropagationConfig | None = None) -> np.ndarray:
    if isinstance(seg, Lock):
        return adiabatic_lock(rho, seg, cluster, cfg)
    if isinstance(seg, Hard):
        return hard_pulse(rho, seg.angle, seg.phase)
    if isinstance(seg, Gaussian):
        return gaussian_selective(rho, seg, cluster, cfg)
    if isinstance(seg, Gradient):
        return gradient_dephase(rho)
    if isinstance(seg, Delay):
        return free_evolution(rho, cluster, seg.dur_s)
    if isinstance(seg, Acquire):
        return np.asarray(rho, dtype=np.complex128)
    raise TypeError(f"unknown segment {seg!r}")


# ---------------------------------------------------------------------------
# Adiabaticity diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AdiabaticityReport:
    """Populations of instantaneous-eigenstate groups at every snapshot.

    Groups are labelled by the spin projection on the effective field (the
    negative of the Hamiltonian's linear spin term); a Hamiltonian with no
    such field is grouped by degenerate energy level instead.
    """

    times: np.ndarray
    labels: np.ndarray
    populations: np.ndarray  # (n_snapshots, n_labels)

    @property
    def leakage(self) -> np.ndarray:
        return np.abs(self.populations - self.populations[0]).max(axis=1)

    @property
    def max_leakage(self) -> float:
        return float(self.leakage.max(initial=0.0))


def _field_vector(h: np.ndarray, n: int) -> np.ndarray:
    # Linear spin term of h, recovered as Tr(h S_a) / Tr(S_a^2).
    norm = 2**n * n / 4.0
    return np.array([np.real(np.trace(h @ collective_op(a, n))) / norm for a in "XYZ"])


def adiabaticity_report(trace: PropagationTrace, rel_field_tol: float = 1e-9) -> AdiabaticityReport:
    """Track population flow between instantaneous eigenstate groups."""
    n = trace.rhos[0].shape[0].bit_length() - 1
    ops = [collective_op(a, n) for a in "XYZ"]
    rows, label_sets = [], []
    for t, rho in zip(trace.times, trace.rhos):
        h = trace.schedule(float(t))
        w, v = np.linalg.eigh(h)
        pops = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho, v))
        f = -_field_vector(h, n)
        if np.linalg.norm(f) > rel_field_tol * max(1.0, np.abs(h).max()):
            proj = sum(fa / np.linalg.norm(f) * op for fa, op in zip(f, ops))
            lab = np.round(np.real(np.einsum("ji,jk,ki->i", v.conj(), proj, v)) * 2) / 2
        else:
            lab = np.zeros(len(w))
            for gi, g in enumerate(group_eigenvalues(w)):
                lab[g] = gi
        labels = np.unique(lab)
        rows.append({float(x): float(pops[lab == x].sum()) for x in labels})
        label_sets.append(set(rows[-1]))
    all_labels = np.array(sorted(set().union(*label_sets)))
    table = np.array([[row.get(float(x), 0.0) for x in all_labels] for row in rows])
    return AdiabaticityReport(np.asarray(trace.times), all_labels, table)
