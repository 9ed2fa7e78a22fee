"""Command-line interface.

Exit codes: 0 success, 2 parse or configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import initial_tag, parse_initial, run_experiment
from .export import export_distribution, export_spectrum, report_records, report_text, write_atomic
from .kernels import NumericalError
from .measurement import PROTOCOLS, REFERENCE_EPS, measure, theory_distribution
from .program import BUILTINS, ProgramError, builtin_program, parse_pulse_program
from .spectroscopy import fid_spectrum, stick_spectrum, transition_table
from .state_prep import pseudopure, thermal_equilibrium
from .system_model import TWO_PI, Cluster, classify_spin_waves

EXIT_OK, EXIT_PARSE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class _UsageError(Exception):
    pass


def _initial(text: str):
    try:
        return parse_initial(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _eigenstate(text: str):
    value = _initial(text)
    if value == "thermal":
        raise argparse.ArgumentTypeError("an S,MZ eigenstate label is needed here")
    return value


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment configuration file")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--dt-us", type=float, help="propagation time step in microseconds")

    p = argparse.ArgumentParser(prog="nmrproj", description="Projective S_X measurement on a six-spin dipolar ring.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("eigen", parents=[common], help="eigenstates with <S^2>, effective spin and wavenumber")

    sp = sub.add_parser("spectrum", parents=[common], help="stick and FID spectra")
    sp.add_argument("--initial", type=_initial, default="thermal", help="S,MZ or 'thermal' (default)")
    sp.add_argument("--kind", choices=("stick", "fid", "both"), default="both")

    me = sub.add_parser("measure", parents=[common], help="measure S_X by one protocol")
    me.add_argument("--initial", type=_eigenstate, action="append", required=True,
                    help="S,MZ; repeat for several initial states")
    me.add_argument("--protocol", choices=PROTOCOLS, default="adiabatic")
    me.add_argument("--jobs", type=int, default=1, help="parallel runs over initial states")

    th = sub.add_parser("theory", help="exact S_X outcome distribution")
    th.add_argument("--initial", type=_eigenstate, action="append", required=True)

    rn = sub.add_parser("run", parents=[common], help="run a pulse program")
    rn.add_argument("program", help=f"program file or builtin ({', '.join(sorted(BUILTINS))})")
    rn.add_argument("--initial", type=_initial, action="append", required=True)
    rn.add_argument("--jobs", type=int, default=1)
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "dt_us", None) is not None:
        cfg = cfg.with_dt_us(args.dt_us)
    return cfg


def _out_dir(args, cfg: ExperimentConfig):
    """--out, else the config's output directory when a config was given."""
    if getattr(args, "out", None) is not None:
        return args.out
    return cfg.output_dir if getattr(args, "config", None) else None


def _cmd_eigen(args, out) -> None:
    cfg = _config(args)
    cluster = Cluster(cfg.cluster)
    es = cluster.eigensystem
    hs = set(cluster.highspin)
    waves = {w.index for w in classify_spin_waves(es)}
    lines = ["index,m_z,energy_hz,s_squared,s_eff,k,label"]
    for i in range(len(es)):
        tags = [t for t, hit in (("highspin", i in hs), ("spinwave", i in waves)) if hit]
        lines.append(f"{i},{es.m_z[i]},{es.energies[i] / TWO_PI:.6f},{es.s_squared[i]:.9f},"
                     f"{es.s_eff[i]:.6f},{es.k[i]},{'+'.join(tags)}")
    text = "\n".join(lines) + "\n"
    out.write(text)
    target = _out_dir(args, cfg)
    if target is not None:
        write_atomic(target / "eigen.csv", text)


def _cmd_spectrum(args, out) -> None:
    cfg = _config(args)
    cluster = Cluster(cfg.cluster)
    es = cluster.eigensystem
    if args.initial == "thermal":
        rho = thermal_equilibrium(REFERENCE_EPS, cluster.n)
    else:
        rho = pseudopure(es, cluster.state_index(*args.initial))
    tag = initial_tag(args.initial)
    target = _out_dir(args, cfg)
    if args.kind in ("stick", "both"):
        spec = stick_spectrum(rho, es, transition_table(es, cluster.highspin))
        freq, inten = spec.sticks()
        out.write(f"{tag}: {len(freq)} sticks\n")
        for j in np.argsort(freq):
            out.write(f"  {freq[j]:12.3f} Hz  {inten[j]: .6e}\n")
        if target is not None:
            export_spectrum(spec, target / f"spectrum_{tag}_stick.csv")
    if args.kind in ("fid", "both"):
        spec = fid_spectrum(rho, es, cfg.acquisition)
        out.write(f"{tag}: sampled spectrum, {len(spec)} points\n")
        if target is not None:
            export_spectrum(spec, target / f"spectrum_{tag}_fid.csv")


def _measure_one(job):
    cfg, initial, protocol = job
    cluster = Cluster(cfg.cluster)
    if protocol == "adiabatic":
        return measure(initial, protocol, cluster, cfg=cfg.propagation, acq=cfg.acquisition,
                       readout=cfg.readout, total=cfg.total)
    return measure(initial, protocol, cluster)


def _fan_out(fn, jobs, n_jobs: int):
    if n_jobs < 1:
        raise _UsageError("--jobs must be at least 1")
    if n_jobs == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _cmd_measure(args, out) -> None:
    cfg = _config(args)
    reports = _fan_out(_measure_one, [(cfg, init, args.protocol) for init in args.initial], args.jobs)
    target = _out_dir(args, cfg)
    for rep in reports:
        out.write(report_text(rep))
        out.write("\n")
        if target is not None:
            stem = f"{args.protocol}_{initial_tag(rep.initial)}"
            export_distribution(rep, target / f"{stem}_distribution.csv")
            write_atomic(target / f"{stem}_report.txt", report_text(rep))
            write_atomic(target / f"{stem}_records.txt", report_records(rep))


def _cmd_theory(args, out) -> None:
    for s, m in args.initial:
        d = theory_distribution(s, m)
        out.write(f"S={s:g} M_Z={m:+d}\n")
        for mx, p in zip(d.m_values, d.probabilities):
            out.write(f"  M_X={mx:+g}  {p:.12f}\n")
        out.write(f"  <S_X^2> = {float(np.sum(d.probabilities * d.m_values**2)):.12f}\n")


def _load_program(spec: str):
    path = Path(spec)
    if spec in BUILTINS and not path.exists():
        return builtin_program(spec)
    return parse_pulse_program(path.read_text(encoding="utf-8"), path.stem)


def _run_one(job):
    cfg, program, initial, out_dir = job
    return run_experiment(cfg, program, initial, out_dir)


def _cmd_run(args, out) -> None:
    cfg = _config(args)
    program = _load_program(args.program)
    target = _out_dir(args, cfg) or cfg.output_dir
    results = _fan_out(_run_one, [(cfg, program, init, target) for init in args.initial], args.jobs)
    for res in results:
        if res.report is not None:
            out.write(report_text(res.report))
        for kind, path in res.files.items():
            out.write(f"wrote {kind}: {path}\n")
        out.write("\n")


_COMMANDS = {
    "eigen": _cmd_eigen,
    "spectrum": _cmd_spectrum,
    "measure": _cmd_measure,
    "theory": _cmd_theory,
    "run": _cmd_run,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args, out)
    except (ConfigError, ProgramError, _UsageError, KeyError, ValueError) as exc:
        print(f"nmrproj: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"nmrproj: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"nmrproj: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
