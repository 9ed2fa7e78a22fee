"""CSV and text exports. Every file is written to a temporary sibling and
renamed into place, so readers never see a partial file."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .measurement import MeasurementReport
from .spectroscopy import Spectrum


class ExportError(OSError):
    """Write failure, carrying the target path."""


def _num(x) -> str:
    return format(float(x), ".17g")


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ExportError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def spectrum_csv(spec: Spectrum, tol: float = 1e-12) -> str:
    """``freq_hz,intensity`` for sticks above ``tol``, sorted by frequency, or
    ``freq_hz,real,imag,magnitude`` for a sampled spectrum."""
    if spec.kind == "stick":
        freq, inten = spec.sticks(tol)
        order = np.argsort(freq, kind="stable")
        rows = [f"{_num(freq[j])},{_num(inten[j])}" for j in order]
        return "freq_hz,intensity\n" + "".join(r + "\n" for r in rows)
    v = spec.values
    mag = np.abs(v)
    rows = [f"{_num(f)},{_num(z.real)},{_num(z.imag)},{_num(m)}" for f, z, m in zip(spec.freq_hz, v, mag)]
    return "freq_hz,real,imag,magnitude\n" + "".join(r + "\n" for r in rows)


def distribution_csv(report: MeasurementReport) -> str:
    lines = ["m,probability,theory,abs_error"]
    for r in report.records():
        theory = "" if r["theory"] is None else _num(r["theory"])
        err = "" if r["abs_error"] is None else _num(r["abs_error"])
        lines.append(f"{r['m']},{_num(r['probability'])},{theory},{err}")
    return "\n".join(lines) + "\n"


def _label(report: MeasurementReport) -> str:
    s, m = report.initial
    return f"S={s:g} M_Z={m:+d}"


def report_text(report: MeasurementReport) -> str:
    """Human-readable table of one run."""
    out = [f"{'initial state':<18}{_label(report)}", f"{'protocol':<18}{report.protocol}"]
    out.append(f"{'<S_X^2>':<18}{report.sx2:.6f}")
    if report.max_error is not None:
        out.append(f"{'max |error|':<18}{report.max_error:.6f}")
    for key in ("max_leakage", "populated_states", "s_eff"):
        if key in report.diagnostics:
            out.append(f"{key:<18}{report.diagnostics[key]:.6g}")
    out.append("")
    out.append(f"{'M':>3}  {'probability':>12}  {'theory':>12}  {'abs_error':>12}")
    for r in report.records():
        theory = "-" if r["theory"] is None else f"{r['theory']:.6f}"
        err = "-" if r["abs_error"] is None else f"{r['abs_error']:.6f}"
        out.append(f"{r['m']:>3}  {r['probability']:>12.6f}  {theory:>12}  {err:>12}")
    return "\n".join(out) + "\n"


def report_records(report: MeasurementReport) -> str:
    """Key-value records, one line per M plus one summary line."""
    s, m = report.initial
    head = f"initial_s={s:g} initial_mz={m:d} protocol={report.protocol} sx2={_num(report.sx2)}"
    lines = [head]
    for r in report.records():
        theory = "nan" if r["theory"] is None else _num(r["theory"])
        err = "nan" if r["abs_error"] is None else _num(r["abs_error"])
        lines.append(f"m={r['m']} probability={_num(r['probability'])} theory={theory} abs_error={err}")
    return "\n".join(lines) + "\n"


def export_spectrum(spec: Spectrum, path) -> Path:
    return write_atomic(path, spectrum_csv(spec))


def export_distribution(report: MeasurementReport, path) -> Path:
    return write_atomic(path, distribution_csv(report))
