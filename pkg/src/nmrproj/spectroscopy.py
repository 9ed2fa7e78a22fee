"""Linear-response spectra: transition table, stick spectra and simulated FIDs.

A transition runs from a lower state ``i`` (M_Z = m) to an upper state ``f``
(M_Z = m + 1) of the reference Hamiltonian, at frequency (E_f - E_i) / 2 pi
with weight |<f|S+|i>|^2. Stick intensities are (p_f - p_i) * weight, which
is positive for a thermal state with positive polarisation. A small Y
rotation turns each population difference into a coherence of the same sign,
so the FID line of that transition sits at the same signed frequency with
amplitude (theta / 2) * weight * (p_f - p_i).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .spin_algebra import raising_op
from .system_model import TWO_PI, EigenSystem, highspin_states

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class AcquisitionParams:
    """FID acquisition settings. Broadening is the Lorentzian FWHM in Hz.

    The FID is zero-filled to ``zero_fill * points`` before the transform; a
    plain DFT of a still-ringing FID mixes in a wrapped tail whose phase
    depends on where a line falls on the grid, which spoils peak areas.
    """

    points: int = 8192
    dwell_s: float = 50e-6
    broadening_hz: float = 2.0
    read_angle_deg: float = 1.0
    zero_fill: int = 4

    def __post_init__(self):
        if int(self.points) < 2:
            raise ValueError("need at least two points")
        if not self.dwell_s > 0:
            raise ValueError("dwell must be positive")
        if self.broadening_hz < 0:
            raise ValueError("broadening must be non-negative")
        if int(self.zero_fill) < 1:
            raise ValueError("zero fill factor must be at least 1")

    @property
    def nyquist_hz(self) -> float:
        return 0.5 / self.dwell_s

    @property
    def resolution_hz(self) -> float:
        return 1.0 / (self.points * self.dwell_s)


@dataclass(frozen=True, eq=False)
class TransitionTable:
    """Single-quantum transitions, one row per (lower, upper) pair.

    Rows are ordered by the lower state's M_Z, then by frequency.
    ``highspin[r]`` marks rows joining two consecutive high-spin states.
    """

    lower: np.ndarray
    upper: np.ndarray
    freq_hz: np.ndarray
    weight: np.ndarray
    m_lower: np.ndarray
    highspin: np.ndarray

    def __len__(self):
        return len(self.lower)

    def highspin_row(self, m_lower: int):
        """Row of the high-spin transition M_Z = m_lower -> m_lower + 1, or None."""
        rows = np.flatnonzero(self.highspin & (self.m_lower == m_lower))
        return int(rows[0]) if rows.size else None

    @property
    def highspin_rows(self) -> np.ndarray:
        """High-spin rows ordered by M_Z of the lower state."""
        rows = np.flatnonzero(self.highspin)
        return rows[np.argsort(self.m_lower[rows], kind="stable")]

    def rows_between(self, i: int, f: int):
        rows = np.flatnonzero((self.lower == i) & (self.upper == f))
        return int(rows[0]) if rows.size else None


def transition_table(es: EigenSystem, highspin=None, min_weight: float = WEIGHT_TOL) -> TransitionTable:
    """All Delta M_Z = +1 pairs of ``es`` with weight above ``min_weight``."""
    hs = list(highspin_states(es) if highspin is None else highspin)
    sp = es.vectors.conj().T @ raising_op(es.n) @ es.vectors
    hs_pairs = set(zip(hs[:-1], hs[1:]))
    rows = []
    for m in es.m_values[:-1]:
        lo, up = es.sector(m), es.sector(m + 1)
        w = np.abs(sp[np.ix_(up, lo)]) ** 2
        for a, f in enumerate(up):
            for b, i in enumerate(lo):
                if w[a, b] > min_weight:
                    nu = (es.energies[f] - es.energies[i]) / TWO_PI
                    rows.append((m, nu, i, f, w[a, b]))
    rows.sort(key=lambda r: (r[0], r[1]))
    if rows:
        m_lower, freq, lower, upper, weight = (np.array(c) for c in zip(*rows))
    else:
        m_lower, freq = np.zeros(0, int), np.zeros(0)
        lower, upper, weight = np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    mask = np.array([(int(i), int(f)) in hs_pairs for i, f in zip(lower, upper)], dtype=bool)
    return TransitionTable(
        lower.astype(int), upper.astype(int), freq.astype(float), weight.astype(float),
        m_lower.astype(int), mask,
    )


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Stick spectrum (``kind="stick"``, real ``values`` aligned with the rows
    of ``table``) or sampled spectrum (``kind="sampled"``, complex ``values``
    on the ascending ``freq_hz`` grid)."""

    kind: str
    freq_hz: np.ndarray
    values: np.ndarray
    table: TransitionTable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("stick", "sampled"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if np.shape(self.freq_hz) != np.shape(self.values):
            raise ValueError("frequency and value arrays differ in shape")

    def __len__(self):
        return len(self.freq_hz)

    def sticks(self, tol: float = 1e-12):
        """(freq_hz, intensity) of the sticks with |intensity| > tol."""
        if self.kind != "stick":
            raise ValueError("not a stick spectrum")
        keep = np.abs(self.values) > tol
        return self.freq_hz[keep], self.values[keep]


def stick_spectrum(rho, es: EigenSystem, tt: TransitionTable, population_difference: float | None = None) -> Spectrum:
    """Stick intensities (p_f - p_i) * weight from the eigenbasis populations.

    Coherences between eigenstates do not enter. ``population_difference``
    is stored for use as a thermal reference.
    """
    p = es.populations(rho)
    intensity = (p[tt.upper] - p[tt.lower]) * tt.weight
    return Spectrum("stick", tt.freq_hz.copy(), intensity, tt, {"population_difference": population_difference})


def _fid_terms(rho, es: EigenSystem, read_angle: float):
    """Amplitudes and angular frequencies of Tr(rho(t) S+) after a Y pulse."""
    from .pulse_engine import hard_pulse

    rho = hard_pulse(rho, read_angle, np.pi / 2)
    v = es.vectors
    rt = v.conj().T @ rho @ v
    sp = v.conj().T @ raising_op(es.n) @ v
    amps, omegas = [], []
    for m in es.m_values[:-1]:
        lo, up = es.sector(m), es.sector(m + 1)
        a = rt[np.ix_(lo, up)] * sp[np.ix_(up, lo)].T
        w = es.energies[up][None, :] - es.energies[lo][:, None]
        amps.append(a.ravel())
        omegas.append(w.ravel())
    amps, omegas = np.concatenate(amps), np.concatenate(omegas)
    scale = np.abs(amps).max(initial=0.0)
    keep = np.abs(amps) > 1e-14 * max(scale, 1e-300)
    return amps[keep], omegas[keep]


def fid(rho, es: EigenSystem, acq: AcquisitionParams | None = None, backend=None):
    """Time axis and broadened FID s(t) = Tr(rho(t) S+) after the read pulse."""
    acq = acq or AcquisitionParams()
    amps, omegas = _fid_terms(rho, es, np.deg2rad(acq.read_angle_deg))
    if omegas.size and np.abs(omegas).max() / TWO_PI > acq.nyquist_hz:
        warnings.warn(
            f"transition at {np.abs(omegas).max() / TWO_PI:.0f} Hz exceeds the "
            f"{acq.nyquist_hz:.0f} Hz Nyquist limit and will alias",
            RuntimeWarning,
            stacklevel=2,
        )
    t = np.arange(acq.points) * acq.dwell_s
    s = kernels.fid_signal(amps, omegas, acq.dwell_s, acq.points, np.pi * acq.broadening_hz, backend)
    return t, s


def fid_spectrum(rho, es: EigenSystem, acq: AcquisitionParams | None = None,
                 population_difference: float | None = None, backend=None) -> Spectrum:
    """Sampled spectrum of the FID.

    The first point is halved and the transform is scaled by the dwell time,
    so a line of time-domain amplitude A has an absorption integral of A / 2.
    """
    acq = acq or AcquisitionParams()
    _, s = fid(rho, es, acq, backend)
    s = s.copy()
    s[0] *= 0.5
    size = acq.points * int(acq.zero_fill)
    spec = np.fft.fftshift(np.fft.fft(s, size)) * acq.dwell_s
    freq = np.fft.fftshift(np.fft.fftfreq(size, acq.dwell_s))
    meta = {
        "points": acq.points,
        "dwell_s": acq.dwell_s,
        "broadening_hz": acq.broadening_hz,
        "read_angle_deg": acq.read_angle_deg,
        "zero_fill": acq.zero_fill,
        "population_difference": population_difference,
    }
    return Spectrum("sampled", freq, spec, None, meta)


# ---------------------------------------------------------------------------
# Peak picking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Peak:
    freq_hz: float
    height: float
    area: float
    index: int


def _parabolic(y0, y1, y2):
    den = y0 - 2.0 * y1 + y2
    return 0.0 if den == 0 else 0.5 * (y0 - y2) / den


def peak_area(spec: Spectrum, center_hz: float, half_width_hz: float | None = None) -> float:
    """Absorption area of the line at ``center_hz``, in time-domain amplitude units.

    The real part is summed over a window of +-``half_width_hz`` and divided by
    the fraction of a Lorentzian of the acquisition linewidth that the window
    holds.
    """
    if spec.kind != "sampled":
        raise ValueError("peak areas need a sampled spectrum")
    df = spec.freq_hz[1] - spec.freq_hz[0]
    gamma = 0.5 * spec.meta.get("broadening_hz", 0.0)
    if half_width_hz is None:
        half_width_hz = max(10.0 * gamma, 4.0 * df)
    sel = np.abs(spec.freq_hz - center_hz) <= half_width_hz
    raw = 2.0 * np.real(spec.values[sel]).sum() * df
    frac = (2.0 / np.pi) * np.arctan(half_width_hz / gamma) if gamma > 0 else 1.0
    return float(raw / frac)


def pick_peaks(spec: Spectrum, threshold: float = 3.0, min_rel_height: float = 1e-3) -> list[Peak]:
    """Local maxima of |values| above ``threshold`` times the median magnitude.

    Maxima below ``min_rel_height`` times the tallest one are dropped too: in
    a noise-free spectrum the median sits far below the truncation ripple.
    """
    if spec.kind != "sampled":
        raise ValueError("peak picking needs a sampled spectrum")
    mag = np.abs(spec.values)
    floor = max(threshold * np.median(mag), min_rel_height * mag.max(initial=0.0))
    interior = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]) & (mag[1:-1] > floor)
    df = spec.freq_hz[1] - spec.freq_hz[0]
    peaks = []
    for j in np.flatnonzero(interior) + 1:
        delta = _parabolic(mag[j - 1], mag[j], mag[j + 1])
        f0 = float(spec.freq_hz[j] + delta * df)
        peaks.append(Peak(f0, float(mag[j]), peak_area(spec, f0), int(j)))
    return peaks


def assign_peaks(peaks: list[Peak], tt: TransitionTable, rows, tol_hz: float = 1.0) -> dict:
    """Map each requested transition row to the nearest peak within ``tol_hz``."""
    out = {}
    if not peaks:
        return out
    freqs = np.array([p.freq_hz for p in peaks])
    for r in rows:
        j = int(np.argmin(np.abs(freqs - tt.freq_hz[r])))
        if abs(freqs[j] - tt.freq_hz[r]) <= tol_hz:
            out[int(r)] = peaks[j]
    return out


def line_clusters(freq_hz, tol_hz: float) -> np.ndarray:
    """Label frequencies so that lines closer than ``tol_hz`` share a label."""
    freq_hz = np.asarray(freq_hz, dtype=float)
    order = np.argsort(freq_hz, kind="stable")
    labels = np.empty(len(freq_hz), dtype=int)
    current = -1
    for pos, j in enumerate(order):
        if pos == 0 or freq_hz[j] - freq_hz[order[pos - 1]] > tol_hz:
            current += 1
        labels[j] = current
    return labels


def resolvable_rows(tt: TransitionTable, rows, linewidth_hz: float, min_rel_weight: float = 0.02) -> np.ndarray:
    """Rows of ``rows`` that stand alone in a sampled spectrum.

    A row is kept when no other table line lies within ``linewidth_hz`` of it
    and its weight is at least ``min_rel_weight`` of the strongest line.
    """
    rows = np.asarray(rows, dtype=int)
    labels = line_clusters(tt.freq_hz, linewidth_hz)
    counts = np.bincount(labels)
    strong = tt.weight[rows] >= min_rel_weight * tt.weight.max(initial=0.0)
    return rows[(counts[labels[rows]] == 1) & strong]


def line_shapes(spec: Spectrum, freq_hz, backend=None) -> np.ndarray:
    """Spectra of unit-amplitude lines at ``freq_hz`` under the acquisition
    of ``spec``, one column per line, built the same way as the data."""
    meta = spec.meta
    points, dwell = int(meta["points"]), float(meta["dwell_s"])
    size = points * int(meta.get("zero_fill", 1))
    cols = np.empty((size, len(freq_hz)), dtype=np.complex128)
    for j, nu in enumerate(freq_hz):
        s = kernels.fid_signal(np.ones(1), np.array([TWO_PI * nu]), dwell, points,
                               np.pi * meta["broadening_hz"], backend)
        s[0] *= 0.5
        cols[:, j] = np.fft.fftshift(np.fft.fft(s, size)) * dwell
    return cols


def fit_amplitudes(spec: Spectrum, tt: TransitionTable) -> np.ndarray:
    """Least-squares line amplitudes of every table row, in stick units.

    The model is the exact discrete line shape at each tabulated frequency, so
    overlapping tails are separated instead of being integrated into the
    wrong peak. Rows within one linewidth of each other are fitted as a
    single line at their mean frequency and share its amplitude equally;
    callers that need them apart must sum them.
    """
    lw = max(float(spec.meta.get("broadening_hz", 0.0)), spec.freq_hz[1] - spec.freq_hz[0])
    labels = line_clusters(tt.freq_hz, 0.25 * lw)
    n = labels.max(initial=-1) + 1
    centres = np.array([tt.freq_hz[labels == c].mean() for c in range(n)])
    a = line_shapes(spec, centres)
    coef, *_ = np.linalg.lstsq(a, spec.values, rcond=None)
    counts = np.bincount(labels, minlength=n)
    scale = 0.5 * np.sin(np.deg2rad(spec.meta["read_angle_deg"]))
    return np.real(coef[labels]) / counts[labels] / scale


def transition_intensities(spec: Spectrum, rows, tt: TransitionTable | None = None, tol_hz: float = 1.0,
                           require_peaks: bool = True) -> np.ndarray:
    """Intensities of the given transition rows in stick units.

    For a sampled spectrum each row's line cluster (lines closer than the
    linewidth) must hold a picked peak, allowing ``tol_hz`` beyond its
    outermost lines. The value returned for a row is the fitted amplitude
    summed over its cluster, since unresolved lines cannot be told apart;
    it equals the summed sticks of that cluster. With ``require_peaks``
    off, rows without a picked peak are read from the fit as well, which is
    how a line that is genuinely absent comes out as zero.
    """
    rows = np.asarray(rows, dtype=int)
    if spec.kind == "stick":
        return np.asarray(spec.values)[rows]
    if tt is None:
        raise ValueError("a transition table is needed to assign a sampled spectrum")
    lw = max(float(spec.meta.get("broadening_hz", 0.0)), spec.freq_hz[1] - spec.freq_hz[0])
    labels = line_clusters(tt.freq_hz, lw)
    peaks = np.array([p.freq_hz for p in pick_peaks(spec)])
    missing = []
    for r in rows if require_peaks else ():
        members = tt.freq_hz[labels == labels[r]]
        hit = (peaks >= members.min() - tol_hz) & (peaks <= members.max() + tol_hz)
        if not hit.any():
            missing.append(int(r))
    if missing:
        lost = ", ".join(f"{tt.freq_hz[r]:.2f} Hz" for r in missing)
        raise ValueError(f"no peak assigned to transition(s) at {lost}")
    amps = fit_amplitudes(spec, tt)
    return np.array([amps[labels == labels[r]].sum() for r in rows])
