from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from nmrproj.config import ConfigError, ExperimentConfig, load_config, parse_config

FULL = """\
[cluster]
b_ortho_hz = 700
offset_hz = 12.5

[propagation]
dt_us = 0.25
convergence = 1e-5

[acquisition]
points = 4096
dwell_us = 100
broadening_hz = 1.5
read_angle_deg = 0.5
zero_fill = 2

[measurement]
total = 2
readout = fid

[paths]
output_dir = out/run1
"""


def test_defaults_from_empty_text():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.cluster.b_ortho_hz == 1400.0
    assert cfg.propagation.dt == 0.5e-6
    assert cfg.acquisition.points == 8192


def test_full_config():
    cfg = parse_config(FULL)
    assert cfg.cluster.b_ortho_hz == 700 and cfg.cluster.offset_hz == 12.5
    assert cfg.propagation.dt == pytest.approx(0.25e-6) and cfg.propagation.convergence == 1e-5
    assert cfg.acquisition.dwell_s == pytest.approx(1e-4) and cfg.acquisition.zero_fill == 2
    assert cfg.total == 2 and cfg.readout == "fid"
    assert cfg.output_dir == Path("out/run1")


def _sections(text):
    blocks = text.strip().split("\n\n")
    return blocks


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(5)), st.booleans())
def test_order_insensitive(perm, reverse_keys):
    blocks = _sections(FULL)
    out = []
    for i in perm:
        head, *keys = blocks[i].splitlines()
        out.append("\n".join([head] + (keys[::-1] if reverse_keys else keys)))
    assert parse_config("\n\n".join(out)) == parse_config(FULL)


@pytest.mark.parametrize("text, fragment", [
    ("[cluster]\nb_orhto_hz = 1\n", "unknown key"),
    ("[clutser]\nb_ortho_hz = 1\n", "unknown section"),
    ("[propagation]\ndt_us = 0\n", "positive"),
    ("[propagation]\ndt_us = fast\n", "dt_us"),
    ("[acquisition]\npoints = 10.5\n", "integer"),
    ("[acquisition]\npoints = -4\n", "positive"),
    ("[measurement]\nreadout = fft\n", "stick"),
    ("[cluster]\nb_ortho_hz = 1\nb_ortho_hz = 2\n", "b_ortho_hz"),
    ("b_ortho_hz = 1\n", "header"),
])
def test_rejects(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text, "test.cfg")


def test_load_config(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(FULL)
    assert load_config(p) == parse_config(FULL)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.cfg")


def test_with_dt_us():
    assert ExperimentConfig().with_dt_us(0.25).propagation.dt == pytest.approx(0.25e-6)
    with pytest.raises(ConfigError):
        ExperimentConfig().with_dt_us(0)
