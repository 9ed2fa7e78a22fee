"""Run a pulse program on an initial state and write its outputs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pulse_engine as pe
from .config import ExperimentConfig
from .export import distribution_csv, export_spectrum, report_records, report_text, write_atomic
from .measurement import (
    POPULATED_TOL,
    REFERENCE_EPS,
    MeasurementReport,
    spectral_readout,
    theory_for,
)
from .program import PulseProgram
from .spectroscopy import AcquisitionParams, Spectrum, fid_spectrum, stick_spectrum, transition_table
from .state_prep import pseudopure, thermal_equilibrium
from .system_model import Cluster


def parse_initial(text: str):
    """``"S,MZ"`` -> (S, M_Z); ``"thermal"`` passes through."""
    text = text.strip()
    if text.lower() == "thermal":
        return "thermal"
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"initial state must look like S,MZ (e.g. 3,2), got {text!r}")
    try:
        s, m = float(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"initial state must look like S,MZ (e.g. 3,2), got {text!r}") from None
    if abs(m) > s:
        raise ValueError(f"|M_Z| = {abs(m)} exceeds S = {s:g}")
    return (s, m)


def initial_tag(initial) -> str:
    if initial == "thermal":
        return "thermal"
    s, m = initial
    return f"s{s:g}_m{m:+d}"


def acquisition_for(program: PulseProgram, base: AcquisitionParams) -> AcquisitionParams:
    """Acquisition settings of ``program``'s acquire directive over ``base``."""
    acq = program.acquire
    if acq is None:
        return base
    changes = {k: v for k, v in vars(acq).items() if v is not None}
    return replace(base, **changes)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Final state, spectra and report of one program run.

    ``report`` is ``None`` for a thermal initial state, which has no
    outcome distribution to read. ``sampled`` is present only when the
    program ends in ``acquire``.
    """

    rho: np.ndarray
    stick: Spectrum
    sampled: Spectrum | None
    report: MeasurementReport | None
    files: dict = field(default_factory=dict)


def run_experiment(config: ExperimentConfig, program: PulseProgram, initial, out_dir=None,
                   cluster: Cluster | None = None) -> ExperimentResult:
    """Apply ``program`` to ``initial`` and, with ``out_dir``, export the results.

    Locks are traced for the adiabatic-leakage diagnostic. The outcome
    distribution comes from the spectral readout of the final state
    (configured by ``config.readout`` and ``config.total``).
    """
    cluster = cluster or Cluster(config.cluster)
    es = cluster.eigensystem
    if initial == "thermal":
        rho = thermal_equilibrium(REFERENCE_EPS, cluster.n)
        idx = None
    else:
        idx = cluster.state_index(*initial)
        rho = pseudopure(es, idx)

    leakage = []
    for seg in program:
        if isinstance(seg, pe.Lock):
            rho, trace = pe.adiabatic_lock(rho, seg, cluster, config.propagation, trace=True)
            leakage.append(pe.adiabaticity_report(trace).max_leakage)
        else:
            rho = pe.apply_segment(rho, seg, cluster, config.propagation)

    acq = acquisition_for(program, config.acquisition)
    tt = transition_table(es, cluster.highspin)
    stick = stick_spectrum(rho, es, tt)
    sampled = fid_spectrum(rho, es, acq) if program.acquire is not None else None

    report = None
    if idx is not None:
        out = spectral_readout(rho, cluster, config.readout, acq, config.total)
        diag = {
            "state_index": idx,
            "s_eff": float(es.s_eff[idx]),
            "ladder_distribution": out.ladder_distribution,
            "direct_distribution": out.direct_distribution,
            "populated_states": int(np.sum(out.populations > POPULATED_TOL)),
        }
        if leakage:
            diag["max_leakage"] = max(leakage)
        name = program.name or "program"
        report = MeasurementReport(tuple(initial), f"program:{name}", out.distribution,
                                   theory_for(cluster, *initial), out.populations, diag, out.sample)

    files = {}
    if out_dir is not None:
        stem = f"{program.name or 'program'}_{initial_tag(initial)}"
        out_dir = Path(out_dir)
        files["stick"] = export_spectrum(stick, out_dir / f"{stem}_stick.csv")
        if sampled is not None:
            files["sampled"] = export_spectrum(sampled, out_dir / f"{stem}_fid.csv")
        if report is not None:
            files["distribution"] = write_atomic(out_dir / f"{stem}_distribution.csv", distribution_csv(report))
            files["report"] = write_atomic(out_dir / f"{stem}_report.txt", report_text(report))
            files["records"] = write_atomic(out_dir / f"{stem}_records.txt", report_records(report))
    return ExperimentResult(rho, stick, sampled, report, files)
