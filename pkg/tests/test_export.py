import csv
import io

import numpy as np
import pytest

from nmrproj import export as ex
from nmrproj.measurement import measure_mx_hardpulse, measure_mx_oracle
from nmrproj.spectroscopy import AcquisitionParams, fid_spectrum, stick_spectrum, transition_table
from nmrproj.state_prep import pseudopure, thermal_equilibrium


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_stick_csv_of_aligned_state(cluster, es):
    tt = transition_table(es, cluster.highspin)
    spec = stick_spectrum(pseudopure(es, cluster.state_index(3, 3)), es, tt)
    rows = _rows(ex.spectrum_csv(spec))
    assert rows[0] == ["freq_hz", "intensity"]
    assert len(rows) == 2
    assert float(rows[1][0]) == tt.freq_hz[tt.highspin_row(2)]


def test_stick_csv_sorted_and_exact(es):
    tt = transition_table(es)
    spec = stick_spectrum(thermal_equilibrium(1e-2), es, tt)
    rows = _rows(ex.spectrum_csv(spec))[1:]
    freq = [float(r[0]) for r in rows]
    assert freq == sorted(freq)
    assert len(rows) == len(tt)
    # 17 significant digits survive the text round trip
    assert sorted(float(r[1]) for r in rows) == sorted(spec.values.tolist())


def test_sampled_csv(es):
    spec = fid_spectrum(thermal_equilibrium(1e-2), es, AcquisitionParams(points=256, zero_fill=1))
    rows = _rows(ex.spectrum_csv(spec))
    assert rows[0] == ["freq_hz", "real", "imag", "magnitude"]
    assert len(rows) == 257
    vals = np.array(rows[1:], dtype=float)
    assert np.abs(vals[:, 3] - np.hypot(vals[:, 1], vals[:, 2])).max() <= 1e-12 * np.abs(vals[:, 3]).max()


def test_distribution_csv(cluster):
    rows = _rows(ex.distribution_csv(measure_mx_hardpulse((3, 3), cluster)))
    assert rows[0] == ["m", "probability", "theory", "abs_error"]
    assert len(rows) == 8
    assert [int(r[0]) for r in rows[1:]] == list(range(-3, 4))
    no_theory = _rows(ex.distribution_csv(measure_mx_oracle((2.78, 1), cluster)))
    assert all(r[2] == "" and r[3] == "" for r in no_theory[1:])


def test_report_text_and_records(cluster):
    rep = measure_mx_hardpulse((3, 2), cluster)
    text = ex.report_text(rep)
    assert "S=3 M_Z=+2" in text and "hardpulse" in text and "populated_states" in text
    assert text.count("\n") == 15
    rec = ex.report_records(rep).splitlines()
    assert rec[0].startswith("initial_s=3 initial_mz=2 protocol=hardpulse sx2=")
    assert len(rec) == 8
    fields = dict(kv.split("=") for kv in rec[4].split())
    assert fields["m"] == "0" and float(fields["theory"]) == pytest.approx(0.0, abs=1e-15)


def test_write_atomic(tmp_path):
    target = tmp_path / "a" / "b" / "out.csv"
    assert ex.write_atomic(target, "x\n") == target
    assert target.read_text() == "x\n"
    ex.write_atomic(target, "y\n")
    assert target.read_text() == "y\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.csv"]


def test_write_atomic_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ex.ExportError) as info:
        ex.write_atomic(blocker / "sub" / "x.csv", "data")
    assert isinstance(info.value, OSError)
