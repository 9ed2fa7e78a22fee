"""End-to-end S_X measurement protocols and spectrum inversion.

Three routes lead from an initial eigenstate to the distribution of M_X:

``oracle``
    Direct projective measurement of S_X on the initial density matrix.
``hardpulse``
    A 90 degree collective rotation maps M_X onto M_Z; gradient dephasing
    removes every coherence between different M_Z and the M_Z populations
    are summed.
``adiabatic``
    The spin lock and frequency sweep carry every S_X eigenstate onto an
    eigenstate of the dipolar Hamiltonian with the same magnetic number; the
    populations are then read back from linear-response spectra.

The adiabatic readout inverts the spectrum over every transition of the
connected network that contains the high-spin ladder, not just the six
ladder lines. An S_X eigenstate with |M_X| <= 1 and S = 3 is not an
eigenstate of the dipolar Hamiltonian in the locked frame, so part of its
weight arrives in the other symmetric states of the same M_Z sector. The
ladder-only figure is still reported as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import pulse_engine as pe
from .kernels import NumericalError
from .spectroscopy import (
    AcquisitionParams,
    Spectrum,
    TransitionTable,
    fid_spectrum,
    resolvable_rows,
    stick_spectrum,
    transition_intensities,
    transition_table,
)
from .spin_algebra import OutcomeDistribution, collective_op, magnetic_numbers, wigner_rotation_probs
from .state_prep import project_measurement, pseudopure, thermal_equilibrium
from .system_model import Cluster, EigenSystem

PROTOCOLS = ("adiabatic", "hardpulse", "oracle")
POPULATED_TOL = 1e-3
COMPONENT_WEIGHT_TOL = 1e-6
REFERENCE_EPS = 1e-2
TRACE_TOL = 1e-9


def theory_distribution(s: float, m_z: float) -> OutcomeDistribution:
    """Exact S_X outcome probabilities for the S_Z eigenstate |s, m_z>."""
    return wigner_rotation_probs(s, m_z, np.pi / 2)


def expectation_sx2(d: OutcomeDistribution) -> float:
    """<S_X^2> = sum_M P(M) M^2."""
    return float(np.sum(d.probabilities * d.m_values**2))


def distribution_by_mz(populations, m_z, m_values=None) -> OutcomeDistribution:
    """Sum ``populations`` over states sharing the same ``m_z``."""
    m_z = np.asarray(m_z)
    if m_values is None:
        m_values = np.unique(m_z)
    probs = np.array([np.sum(populations[np.isclose(m_z, m)]) for m in m_values])
    return OutcomeDistribution(np.asarray(m_values, dtype=float), probs)


# ---------------------------------------------------------------------------
# Spectrum inversion
# ---------------------------------------------------------------------------


class StatePopulations(NamedTuple):
    """Populations recovered for a set of eigenstate indices."""

    states: np.ndarray
    populations: np.ndarray


def thermal_reference(es: EigenSystem, tt: TransitionTable, eps: float = REFERENCE_EPS,
                      acq: AcquisitionParams | None = None, sampled: bool = False) -> Spectrum:
    """Thermal spectrum tagged with its common population difference."""
    rho = thermal_equilibrium(eps, es.n)
    delta = eps / 2**es.n
    if sampled:
        return fid_spectrum(rho, es, acq, population_difference=delta)
    return stick_spectrum(rho, es, tt, population_difference=delta)


def populations_from_spectrum(sample: Spectrum, thermal: Spectrum, total: float = 1.0,
                              transitions=None, tt: TransitionTable | None = None,
                              thermal_difference: float | None = None) -> StatePopulations:
    """Recover eigenstate populations from a sample and a thermal spectrum.

    Each transition gives the population difference between its upper and
    lower state as I_sample / I_thermal times the thermal difference, which
    fixes the populations up to a constant; the constant makes them sum to
    ``total``. With more transitions than states the differences are solved
    in the least-squares sense.

    Parameters
    ----------
    sample, thermal : Spectrum
        Stick or sampled spectra of the same cluster.
    total : float
        Sum of the recovered populations.
    transitions : array of int, optional
        Table rows to use; defaults to the six high-spin ladder lines.
    tt : TransitionTable, optional
        Needed when neither spectrum is a stick spectrum.
    thermal_difference : float, optional
        Common population difference of the thermal state; read from
        ``thermal.meta`` when omitted.

    Raises
    ------
    ValueError
        Missing peak assignment in the thermal spectrum, zero thermal intensity, unknown thermal
        difference, or transitions that do not connect their states.
    """
    tt = tt or sample.table or thermal.table
    if tt is None:
        raise ValueError("no transition table available for peak assignment")
    rows = tt.highspin_rows if transitions is None else np.asarray(transitions, dtype=int)
    if rows.size == 0:
        raise ValueError("no transitions to invert")
    if thermal_difference is None:
        thermal_difference = thermal.meta.get("population_difference")
    if thermal_difference is None:
        raise ValueError("thermal population difference unknown; pass thermal_difference")

    # lines are assigned on the reference; a line missing from the sample
    # is a zero population difference, not a failed assignment
    i_sample = transition_intensities(sample, rows, tt, require_peaks=False)
    i_thermal = transition_intensities(thermal, rows, tt)
    floor = 1e-12 * max(1.0, float(np.abs(i_thermal).max()))
    zero = np.abs(i_thermal) <= floor * abs(thermal_difference)
    if zero.any():
        raise ValueError(f"thermal intensity is zero at {tt.freq_hz[rows[zero]][0]:.2f} Hz")
    diff = i_sample / i_thermal * thermal_difference

    states, local = np.unique(np.concatenate([tt.lower[rows], tt.upper[rows]]), return_inverse=True)
    lo, up = local[: rows.size], local[rows.size :]
    adj = coo_matrix((np.ones(rows.size), (lo, up)), shape=(states.size, states.size))
    if connected_components(adj, directed=False)[0] != 1:
        raise ValueError("transitions do not connect all of their states")
    a = np.zeros((rows.size, states.size))
    a[np.arange(rows.size), up] = 1.0
    a[np.arange(rows.size), lo] = -1.0
    p, *_ = np.linalg.lstsq(a, diff, rcond=None)
    p += (total - p.sum()) / states.size
    return StatePopulations(states, p)


def ladder_component(tt: TransitionTable, min_weight: float = COMPONENT_WEIGHT_TOL) -> np.ndarray:
    """Rows of the connected transition network holding the high-spin ladder."""
    rows = np.flatnonzero(tt.weight > min_weight)
    n = int(max(tt.lower.max(initial=0), tt.upper.max(initial=0))) + 1
    adj = coo_matrix((np.ones(rows.size), (tt.lower[rows], tt.upper[rows])), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    hs = tt.highspin_rows
    if hs.size == 0:
        raise ValueError("transition table has no high-spin ladder")
    target = label[tt.lower[hs[0]]]
    return rows[label[tt.lower[rows]] == target]


class SpectralReadout(NamedTuple):
    distribution: OutcomeDistribution
    ladder_distribution: OutcomeDistribution
    direct_distribution: OutcomeDistribution
    states: np.ndarray
    sample: Spectrum
    populations: np.ndarray


def spectral_readout(rho, cluster: Cluster, readout: str = "stick", acq: AcquisitionParams | None = None,
                     total: float = 1.0) -> SpectralReadout:
    """M_Z distribution of ``rho`` read from its linear-response spectrum.

    The spectrum is inverted over the connected transition network holding
    the high-spin ladder and the recovered populations are summed by M_Z.
    The ladder-only inversion and the exact eigenbasis populations come back
    alongside for comparison.

    Raises
    ------
    NumericalError
        If ``rho`` has lost trace or the distribution misses ``total`` by
        more than 1e-6.
    """
    if readout not in ("stick", "fid"):
        raise ValueError(f"readout must be 'stick' or 'fid', got {readout!r}")
    drift = abs(float(np.real(np.trace(rho))) - 1.0)
    if drift > TRACE_TOL:
        raise NumericalError(f"density matrix trace drifted by {drift:.2e}")
    es = cluster.eigensystem
    tt = transition_table(es, cluster.highspin)
    sampled = readout == "fid"
    thermal = thermal_reference(es, tt, acq=acq, sampled=sampled)
    rows = ladder_component(tt)
    if sampled:
        # a unitary sequence leaves coherences between eigenstates that the
        # read pulse would turn into spurious intensity; a delay-averaged
        # filter keeps only the populations
        sample = fid_spectrum(pe.eigenbasis_dephase(rho, cluster), es, acq)
        lw = max(sample.meta["broadening_hz"], sample.freq_hz[1] - sample.freq_hz[0])
        rows = resolvable_rows(tt, rows, lw)
    else:
        sample = stick_spectrum(rho, es, tt)

    m_all = np.arange(-cluster.n // 2, cluster.n // 2 + 1, dtype=float)
    comp = populations_from_spectrum(sample, thermal, total, rows, tt)
    dist = distribution_by_mz(comp.populations, es.m_z[comp.states], m_all)
    if abs(dist.total - total) > 1e-6:
        raise NumericalError(f"recovered distribution sums to {dist.total:.8f}, not {total}")
    ladder = populations_from_spectrum(sample, thermal, total, tt.highspin_rows, tt)
    pops = es.populations(rho)
    return SpectralReadout(
        dist,
        distribution_by_mz(ladder.populations, es.m_z[ladder.states], m_all),
        distribution_by_mz(pops, es.m_z, m_all),
        comp.states,
        sample,
        pops,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementReport:
    """Outcome of one measurement run.

    ``populations`` are the eigenbasis populations of the final density
    matrix (``None`` for the oracle route). ``theory`` is the exact
    distribution when the initial state is an S = 3 eigenstate.
    """

    initial: tuple
    protocol: str
    distribution: OutcomeDistribution
    theory: OutcomeDistribution | None
    populations: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    spectrum: Spectrum | None = None

    @property
    def sx2(self) -> float:
        return expectation_sx2(self.distribution)

    @property
    def abs_error(self) -> np.ndarray | None:
        if self.theory is None:
            return None
        return np.abs(self.distribution.probabilities - self.theory.probabilities)

    @property
    def max_error(self) -> float | None:
        err = self.abs_error
        return None if err is None else float(err.max())

    def records(self) -> list[dict]:
        """One record per M: m, probability, theory, abs_error."""
        err = self.abs_error
        out = []
        for j, (m, p) in enumerate(zip(self.distribution.m_values, self.distribution.probabilities)):
            out.append({
                "m": int(round(m)),
                "probability": float(p),
                "theory": None if self.theory is None else float(self.theory.probabilities[j]),
                "abs_error": None if err is None else float(err[j]),
            })
        return out


def theory_for(cluster: Cluster, s: float, m: int) -> OutcomeDistribution | None:
    """Exact distribution when (s, m) labels a state of the full multiplet."""
    n = cluster.n
    if not np.isclose(s, n / 2):
        return None
    return theory_distribution(s, m)


def _initial_state(cluster: Cluster, initial) -> tuple[int, np.ndarray]:
    s, m = initial
    idx = cluster.state_index(float(s), int(m))
    return idx, pseudopure(cluster.eigensystem, idx)


def measure_mx_oracle(initial, cluster: Cluster | None = None) -> MeasurementReport:
    """Direct projective measurement of S_X on the initial eigenstate."""
    cluster = cluster or Cluster()
    idx, rho = _initial_state(cluster, initial)
    d = project_measurement(rho, collective_op("X", cluster.n))
    m_all = np.arange(-cluster.n // 2, cluster.n // 2 + 1, dtype=float)
    probs = np.array([d[m] if np.isclose(d.m_values, m).any() else 0.0 for m in m_all])
    dist = OutcomeDistribution(m_all, probs)
    diag = {"state_index": idx, "s_eff": float(cluster.eigensystem.s_eff[idx])}
    return MeasurementReport(tuple(initial), "oracle", dist, theory_for(cluster, *initial), None, diag)


def measure_mx_hardpulse(initial, cluster: Cluster | None = None) -> MeasurementReport:
    """90 degree pulse, gradient dephasing, and M_Z grouping."""
    cluster = cluster or Cluster()
    es = cluster.eigensystem
    idx, rho = _initial_state(cluster, initial)
    rho = pe.gradient_dephase(pe.hard_pulse(rho, np.pi / 2, -np.pi / 2))
    m_all = np.arange(-cluster.n // 2, cluster.n // 2 + 1, dtype=float)
    dist = distribution_by_mz(np.real(np.diag(rho)), magnetic_numbers(cluster.n), m_all)
    pops = es.populations(rho)
    diag = {
        "state_index": idx,
        "s_eff": float(es.s_eff[idx]),
        "populated_states": int(np.sum(pops > POPULATED_TOL)),
    }
    return MeasurementReport(tuple(initial), "hardpulse", dist, theory_for(cluster, *initial), pops, diag)


def measure_mx_adiabatic(initial, cluster: Cluster | None = None, lock: pe.Lock | None = None,
                         cfg: pe.PropagationConfig | None = None, acq: AcquisitionParams | None = None,
                         readout: str = "stick", total: float = 1.0) -> MeasurementReport:
    """Spin lock with frequency sweep, then spectroscopic population readout.

    Parameters
    ----------
    readout : {"stick", "fid"}
        Whether the inversion reads stick intensities or fitted FID lines.
        The FID route first removes all coherences between non-degenerate
        eigenstates (a delay-averaged filter), then drops weak lines and
        lines that overlap within the linewidth; unresolved ladder lines make
        its ladder diagnostic blend in their neighbours.
    total : float
        Population sum imposed by the inversion.

    Diagnostics hold the ladder-only distribution, the distribution read
    straight off the density matrix, the maximum adiabatic leakage and the
    number of populated eigenstates.
    """
    cluster = cluster or Cluster()
    lock = lock or pe.Lock()
    es = cluster.eigensystem
    idx, rho0 = _initial_state(cluster, initial)
    rho, trace = pe.adiabatic_lock(rho0, lock, cluster, cfg, trace=True)
    leak = pe.adiabaticity_report(trace)
    out = spectral_readout(rho, cluster, readout, acq, total)
    diag = {
        "state_index": idx,
        "s_eff": float(es.s_eff[idx]),
        "ladder_distribution": out.ladder_distribution,
        "direct_distribution": out.direct_distribution,
        "component_states": out.states,
        "max_leakage": leak.max_leakage,
        "populated_states": int(np.sum(out.populations > POPULATED_TOL)),
        "trace": float(np.real(np.trace(rho))),
    }
    return MeasurementReport(tuple(initial), "adiabatic", out.distribution, theory_for(cluster, *initial),
                             out.populations, diag, out.sample)


def measure(initial, protocol: str = "adiabatic", cluster: Cluster | None = None, **kwargs) -> MeasurementReport:
    """Dispatch to one of the three measurement routes."""
    if protocol == "adiabatic":
        return measure_mx_adiabatic(initial, cluster, **kwargs)
    if kwargs:
        raise TypeError(f"protocol {protocol!r} takes no options, got {sorted(kwargs)}")
    if protocol == "hardpulse":
        return measure_mx_hardpulse(initial, cluster)
    if protocol == "oracle":
        return measure_mx_oracle(initial, cluster)
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")
