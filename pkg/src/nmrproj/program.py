"""Text pulse programs.

One directive per line, ``#`` starts a comment. Parameters are ``key=value``
pairs whose key carries the unit::

    # spin lock with frequency sweep, then read out
    lock amp_khz=19 dur_ms=25 sweep_khz=20 sweep_ms=20
    acquire read_deg=1

Directives and their keys (all optional unless marked):

=========  ==============================================================
lock       amp, dur, sweep (frequency), sweep (time), ramp, phase
pulse      angle (required), phase
gauss      angle, dur, peak (frequency or ``auto``), phase, and exactly one
           of offset (frequency) or ``lower_mz`` (high-spin transition
           from that M_Z upward)
gradient   none
delay      dur (required)
acquire    read (angle), points, dwell, broadening
=========  ==============================================================

Units: ``s``, ``ms``, ``us``; ``hz``, ``khz``; ``deg``, ``rad``. ``acquire``
may appear once, as the last directive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .pulse_engine import Acquire, Delay, Gaussian, Gradient, Hard, Lock, PulseSegment

_UNITS = {
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "hz": ("freq", 1.0),
    "khz": ("freq", 1e3),
    "deg": ("angle", math.pi / 180.0),
    "rad": ("angle", 1.0),
}

# directive -> (base, kind) -> field; kind "int" keys carry no unit
_KEYS = {
    "lock": {
        ("amp", "freq"): "amp_hz",
        ("dur", "time"): "dur_s",
        ("sweep", "freq"): "sweep_hz",
        ("sweep", "time"): "sweep_s",
        ("ramp", "time"): "ramp_s",
        ("phase", "angle"): "phase",
    },
    "pulse": {("angle", "angle"): "angle", ("phase", "angle"): "phase"},
    "gauss": {
        ("angle", "angle"): "angle",
        ("dur", "time"): "dur_s",
        ("peak", "freq"): "peak_amp_hz",
        ("offset", "freq"): "offset_hz",
        ("lower_mz", "int"): "hs_transition",
        ("phase", "angle"): "phase",
    },
    "gradient": {},
    "delay": {("dur", "time"): "dur_s"},
    "acquire": {
        ("read", "angle"): "read_angle_deg",
        ("points", "int"): "points",
        ("dwell", "time"): "dwell_s",
        ("broadening", "freq"): "broadening_hz",
    },
}
_REQUIRED = {"pulse": ("angle",), "delay": ("dur",)}
_CLASSES = {"lock": Lock, "pulse": Hard, "gauss": Gaussian, "gradient": Gradient, "delay": Delay, "acquire": Acquire}


class ProgramError(ValueError):
    """Syntax or semantic error in a pulse program, with its location."""

    def __init__(self, message: str, line: int, column: int):
        self.line, self.column, self.message = line, column, message
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class PulseProgram:
    segments: tuple = ()
    name: str | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def acquire(self) -> Acquire | None:
        if self.segments and isinstance(self.segments[-1], Acquire):
            return self.segments[-1]
        return None


def _split_key(key: str, directive: str):
    """(base, kind, scale) for ``key`` in ``directive``, or None."""
    known = _KEYS[directive]
    if (key, "int") in known:
        return key, "int", None
    base, sep, unit = key.rpartition("_")
    if not sep or unit not in _UNITS:
        return None
    kind, scale = _UNITS[unit]
    return (base, kind, scale) if (base, kind) in known else None


def _number(text: str, kind: str):
    if kind == "int":
        v = int(text)
    else:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError
    return v


def _parse_line(text: str, lineno: int) -> PulseSegment | None:
    code = text.split("#", 1)[0]
    tokens = []
    pos = 0
    for tok in code.split():
        pos = code.index(tok, pos)
        tokens.append((tok, pos + 1))
        pos += len(tok)
    if not tokens:
        return None
    directive, dcol = tokens[0]
    if directive not in _KEYS:
        raise ProgramError(f"unknown directive {directive!r}", lineno, dcol)
    known = _KEYS[directive]
    kwargs, seen = {}, {}
    for tok, col in tokens[1:]:
        key, eq, raw = tok.partition("=")
        if not eq or not key or not raw:
            raise ProgramError(f"expected key=value, got {tok!r}", lineno, col)
        split = _split_key(key, directive)
        if split is None:
            raise ProgramError(f"unknown key {key!r} for {directive}", lineno, col)
        base, kind, scale = split
        if (base, kind) in seen:
            raise ProgramError(f"duplicate key {key!r} (already given as {seen[(base, kind)]!r})", lineno, col)
        seen[(base, kind)] = key
        vcol = col + len(key) + 1
        dest = known[(base, kind)]
        if dest == "peak_amp_hz" and raw == "auto":
            kwargs[dest] = None
            continue
        try:
            value = _number(raw, kind)
        except ValueError:
            what = "an integer" if kind == "int" else "a number"
            raise ProgramError(f"malformed value {raw!r} for {key}: expected {what}", lineno, vcol) from None
        if dest == "read_angle_deg":
            value = value if key.endswith("_deg") else math.degrees(value)
        elif scale is not None:
            value = value * scale
        kwargs[dest] = value
    bases = {b for b, _ in seen}
    for req in _REQUIRED.get(directive, ()):
        if req not in bases:
            raise ProgramError(f"{directive} is missing required key {req}_<unit>", lineno, dcol)
    if directive == "acquire":
        for name in ("points", "dwell_s", "read_angle_deg"):
            if name in kwargs and not kwargs[name] > 0:
                raise ProgramError(f"acquire {name} must be positive", lineno, dcol)
    try:
        return _CLASSES[directive](**kwargs)
    except ValueError as exc:
        raise ProgramError(str(exc), lineno, dcol) from None


def parse_pulse_program(text: str, name: str | None = None) -> PulseProgram:
    """Parse program text into segments in source order."""
    segments, acquire_line = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        seg = _parse_line(line, lineno)
        if seg is None:
            continue
        if acquire_line is not None:
            raise ProgramError(f"acquire on line {acquire_line} must be the last directive", lineno, 1)
        if isinstance(seg, Acquire):
            acquire_line = lineno
        segments.append(seg)
    return PulseProgram(tuple(segments), name)


def _fmt(v) -> str:
    return repr(int(v)) if isinstance(v, int) else repr(float(v))


def format_pulse_program(program: PulseProgram) -> str:
    """Canonical text of ``program`` in SI units; parsing it gives the same
    program back."""
    lines = []
    for seg in program.segments:
        if isinstance(seg, Lock):
            parts = ["lock", f"amp_hz={_fmt(seg.amp_hz)}", f"dur_s={_fmt(seg.dur_s)}",
                     f"sweep_hz={_fmt(seg.sweep_hz)}", f"sweep_s={_fmt(seg.sweep_s)}"]
            if seg.ramp_s is not None:
                parts.append(f"ramp_s={_fmt(seg.ramp_s)}")
            parts.append(f"phase_rad={_fmt(seg.phase)}")
        elif isinstance(seg, Hard):
            parts = ["pulse", f"angle_rad={_fmt(seg.angle)}", f"phase_rad={_fmt(seg.phase)}"]
        elif isinstance(seg, Gaussian):
            peak = "auto" if seg.peak_amp_hz is None else _fmt(seg.peak_amp_hz)
            parts = ["gauss", f"angle_rad={_fmt(seg.angle)}", f"dur_s={_fmt(seg.dur_s)}", f"peak_hz={peak}"]
            if seg.offset_hz is not None:
                parts.append(f"offset_hz={_fmt(seg.offset_hz)}")
            else:
                parts.append(f"lower_mz={int(seg.hs_transition)}")
            parts.append(f"phase_rad={_fmt(seg.phase)}")
        elif isinstance(seg, Gradient):
            parts = ["gradient"]
        elif isinstance(seg, Delay):
            parts = ["delay", f"dur_s={_fmt(seg.dur_s)}"]
        elif isinstance(seg, Acquire):
            parts = ["acquire"]
            if seg.read_angle_deg is not None:
                parts.append(f"read_deg={_fmt(seg.read_angle_deg)}")
            if seg.points is not None:
                parts.append(f"points={int(seg.points)}")
            if seg.dwell_s is not None:
                parts.append(f"dwell_s={_fmt(seg.dwell_s)}")
            if seg.broadening_hz is not None:
                parts.append(f"broadening_hz={_fmt(seg.broadening_hz)}")
        else:
            raise TypeError(f"cannot format segment {seg!r}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


BUILTINS = {
    "fig1": """\
# spin lock at 19 kHz, 20 kHz sweep over the first 20 ms, ramp-down to 25 ms
lock amp_khz=19 dur_ms=25 sweep_khz=20 sweep_ms=20
acquire read_deg=1
""",
    "fig2d": """\
# 90 degree hard pulse about -y, gradient, read out
pulse angle_deg=90 phase_deg=-90
gradient
acquire read_deg=1
""",
    "prep32": """\
# selective inversion of the (3,3) <-> (3,2) high-spin line
gauss angle_deg=180 dur_ms=30 peak_hz=15 lower_mz=2
acquire read_deg=1
""",
    "thermal": """\
acquire read_deg=1
""",
}
BUILTINS["fig2e"] = BUILTINS["prep32"]


def builtin_program(name: str) -> PulseProgram:
    if name not in BUILTINS:
        raise KeyError(f"no builtin program {name!r}; choose from {', '.join(sorted(BUILTINS))}")
    return parse_pulse_program(BUILTINS[name], name)
