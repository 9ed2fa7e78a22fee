import numpy as np
import pytest

from nmrproj.config import ExperimentConfig
from nmrproj.experiment import acquisition_for, initial_tag, parse_initial, run_experiment
from nmrproj.measurement import measure_mx_hardpulse
from nmrproj.program import builtin_program, parse_pulse_program
from nmrproj.spectroscopy import AcquisitionParams

from conftest import adiabatic_report


def test_parse_initial():
    assert parse_initial(" 3,2 ") == (3.0, 2)
    assert parse_initial("Thermal") == "thermal"
    for bad in ("3", "3,2,1", "a,b", "2,3"):
        with pytest.raises(ValueError):
            parse_initial(bad)
    assert initial_tag((3.0, -2)) == "s3_m-2"
    assert initial_tag("thermal") == "thermal"


def test_acquisition_override():
    base = AcquisitionParams()
    prog = parse_pulse_program("acquire points=1024 read_deg=0.5")
    acq = acquisition_for(prog, base)
    assert acq.points == 1024 and acq.read_angle_deg == 0.5 and acq.dwell_s == base.dwell_s
    assert acquisition_for(parse_pulse_program("gradient"), base) is base


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig(acquisition=AcquisitionParams(points=2048))


def test_fig2d_reproduces_hard_pulse(cfg, cluster, tmp_path):
    res = run_experiment(cfg, builtin_program("fig2d"), (3, 3), tmp_path, cluster)
    ref = measure_mx_hardpulse((3, 3), cluster)
    assert res.report.protocol == "program:fig2d"
    assert res.report.distribution.max_abs_error(ref.distribution) < 1e-9
    assert res.report.diagnostics["populated_states"] > 7
    assert sorted(res.files) == ["distribution", "records", "report", "sampled", "stick"]
    assert all(p.exists() for p in res.files.values())
    assert res.files["stick"].name == "fig2d_s3_m+3_stick.csv"


def test_rerun_is_byte_identical(cfg, cluster, tmp_path):
    a = run_experiment(cfg, builtin_program("fig2d"), (3, 2), tmp_path / "a", cluster)
    b = run_experiment(cfg, builtin_program("fig2d"), (3, 2), tmp_path / "b", cluster)
    for kind in a.files:
        assert a.files[kind].read_bytes() == b.files[kind].read_bytes()


def test_thermal_run_has_no_report(cfg, cluster, tmp_path):
    res = run_experiment(cfg, builtin_program("thermal"), "thermal", tmp_path, cluster)
    assert res.report is None
    assert sorted(res.files) == ["sampled", "stick"]
    assert np.all(res.stick.values >= 0)


def test_program_without_acquire(cfg, cluster):
    res = run_experiment(cfg, parse_pulse_program("pulse angle_deg=90 phase_deg=-90\ngradient"), (3, 3),
                         None, cluster)
    assert res.sampled is None and res.files == {}
    assert res.report.protocol == "program:program"


@pytest.mark.slow
def test_fig1_reproduces_adiabatic_protocol(cluster, tmp_path):
    res = run_experiment(ExperimentConfig(), builtin_program("fig1"), (3, 3), tmp_path, cluster)
    ref = adiabatic_report((3, 3))
    assert res.report.distribution.max_abs_error(ref.distribution) < 1e-12
    assert res.report.max_error <= 0.02
    assert res.report.diagnostics["max_leakage"] == pytest.approx(ref.diagnostics["max_leakage"])
