import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmrproj import spectroscopy as sp
from nmrproj.state_prep import pseudopure, thermal_equilibrium
from nmrproj.system_model import Cluster, CouplingSet, classify_eigenstates, dipolar_hamiltonian

from conftest import diagonal_state


@pytest.fixture(scope="module")
def tt(cluster):
    return sp.transition_table(cluster.eigensystem, cluster.highspin)


@pytest.fixture(scope="module")
def thermal_fid(es):
    return sp.fid_spectrum(thermal_equilibrium(1e-2), es)


def _closed_form_line(amp, nu, acq, freq):
    """DFT of amp * exp((2 pi i nu - pi lw) t) on ``points`` samples, first point halved."""
    d = acq.dwell_s
    z = np.exp((2j * np.pi * (nu - freq) - np.pi * acq.broadening_hz) * d)
    total = (1 - z**acq.points) / (1 - z)
    return amp * d * (total - 0.5)


# -- transition table ---------------------------------------------------------


def test_highspin_rows(cluster, tt):
    rows = tt.highspin_rows
    assert len(rows) == 6
    hs = cluster.highspin
    assert [(tt.lower[r], tt.upper[r]) for r in rows] == list(zip(hs[:-1], hs[1:]))
    assert list(tt.m_lower[rows]) == list(range(-3, 3))
    assert tt.highspin_row(3) is None
    assert tt.rows_between(hs[5], hs[6]) == tt.highspin_row(2)
    # the outer ladder steps carry the S = 3 weights s(s+1) - m(m+1)
    assert tt.weight[tt.highspin_row(2)] == pytest.approx(6.0, abs=1e-9)
    assert tt.weight[tt.highspin_row(-3)] == pytest.approx(6.0, abs=1e-9)


def test_table_invariants(es, tt):
    assert np.all(tt.weight > 0)
    assert np.all(es.m_z[tt.upper] == es.m_z[tt.lower] + 1)
    assert np.allclose(tt.freq_hz, (es.energies[tt.upper] - es.energies[tt.lower]) / (2 * np.pi))


def test_uncoupled_system_has_one_frequency():
    es = classify_eigenstates(dipolar_hamiltonian(CouplingSet(np.zeros((6, 6)))))
    t = sp.transition_table(es)
    assert np.ptp(t.freq_hz) < 1e-9
    # sum of weights is Tr(S- S+) over the ladder
    assert t.weight.sum() == pytest.approx(6 * 2**5, rel=1e-12)


def test_weights_symmetric_under_spin_flip(tt):
    a = sorted(zip(np.round(tt.freq_hz, 6), np.round(tt.weight, 9)))
    b = sorted(zip(np.round(-tt.freq_hz, 6), np.round(tt.weight, 9)))
    assert a == b


# -- stick spectra ------------------------------------------------------------


def test_thermal_sticks_proportional_to_weight(es, tt):
    spec = sp.stick_spectrum(thermal_equilibrium(1e-2), es, tt)
    ratio = spec.values / tt.weight
    assert np.all(spec.values >= 0)
    assert np.ptp(ratio) / ratio.mean() < 1e-9
    assert ratio.mean() == pytest.approx(1e-2 / 64, rel=1e-9)


def test_pseudopure_aligned_state_has_one_stick(cluster, es, tt):
    spec = sp.stick_spectrum(pseudopure(es, cluster.state_index(3, 3)), es, tt)
    freq, inten = spec.sticks()
    assert len(freq) == 1
    assert freq[0] == pytest.approx(tt.freq_hz[tt.highspin_row(2)])
    assert inten[0] == pytest.approx(6.0)


def test_maximally_mixed_has_no_sticks(es, tt):
    spec = sp.stick_spectrum(np.eye(64) / 64, es, tt)
    assert len(spec.sticks()[0]) == 0


def test_spectrum_type_checks(es, tt):
    with pytest.raises(ValueError):
        sp.Spectrum("bogus", np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        sp.Spectrum("stick", np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        sp.fid_spectrum(np.eye(64) / 64, es, sp.AcquisitionParams(points=64)).sticks()


@pytest.mark.parametrize("kwargs", [dict(points=1), dict(dwell_s=0), dict(broadening_hz=-1), dict(zero_fill=0)])
def test_acquisition_validation(kwargs):
    with pytest.raises(ValueError):
        sp.AcquisitionParams(**kwargs)


# -- sampled spectra ----------------------------------------------------------


def test_single_transition_is_analytic_lorentzian(cluster, es, tt):
    # a tiny read angle keeps the third-order 2 -> 1 coherence out of the comparison
    acq = sp.AcquisitionParams(zero_fill=1, read_angle_deg=0.01)
    spec = sp.fid_spectrum(pseudopure(es, cluster.state_index(3, 3)), es, acq)
    nu = tt.freq_hz[tt.highspin_row(2)]
    amp = 3 * np.sin(np.deg2rad(acq.read_angle_deg))
    ref = _closed_form_line(amp, nu, acq, spec.freq_hz)
    assert np.abs(spec.values - ref).max() < 1e-6 * np.abs(ref).max()
    peaks = sp.pick_peaks(spec)
    top = max(peaks, key=lambda p: p.height)
    assert top.freq_hz == pytest.approx(nu, abs=acq.resolution_hz / 2)
    # half-height full width of the absorption line
    re = np.real(spec.values)
    above = spec.freq_hz[re >= re.max() / 2]
    assert above.max() - above.min() == pytest.approx(acq.broadening_hz, abs=2 * acq.resolution_hz)
    # areas need the default zero fill; a bare DFT folds the ringing tail back in
    full = sp.fid_spectrum(pseudopure(es, cluster.state_index(3, 3)), es)
    assert sp.peak_area(full, nu) == pytest.approx(3 * np.sin(np.deg2rad(1.0)), rel=0.02)


def test_maximally_mixed_gives_zero_signal(es):
    _, s = sp.fid(np.eye(64) / 64, es)
    assert np.abs(s).max() < 1e-15


def test_fid_spectrum_metadata(es):
    spec = sp.fid_spectrum(thermal_equilibrium(1e-2), es, population_difference=1e-2 / 64)
    assert spec.kind == "sampled" and len(spec) == 8192 * 4
    assert spec.meta["points"] == 8192 and spec.meta["population_difference"] == 1e-2 / 64
    assert np.all(np.diff(spec.freq_hz) > 0)


def test_small_angle_linearity(es, thermal_fid):
    half = sp.fid_spectrum(thermal_equilibrium(1e-2), es, sp.AcquisitionParams(read_angle_deg=0.5))
    idx = [p.index for p in sp.pick_peaks(thermal_fid)]
    ratio = np.abs(thermal_fid.values[idx]) / np.abs(half.values[idx])
    assert np.allclose(ratio, 2.0, rtol=0.01)


def test_sign_convention_matches_sticks(es, tt, thermal_fid):
    r = tt.highspin_row(2)
    nu = tt.freq_hz[r]
    stick = sp.stick_spectrum(thermal_equilibrium(1e-2), es, tt)
    assert stick.values[r] > 0
    j = np.argmin(np.abs(thermal_fid.freq_hz - nu))
    assert np.real(thermal_fid.values[j]) > 0
    # the mirror frequency is a different line, not a folded copy
    assert sp.fit_amplitudes(thermal_fid, tt)[r] == pytest.approx(stick.values[r], rel=1e-3)


def test_aliasing_warning(es):
    with pytest.warns(RuntimeWarning, match="Nyquist"):
        sp.fid(thermal_equilibrium(1e-2), es, sp.AcquisitionParams(points=64, dwell_s=2e-3))


def test_fid_backends_agree(es):
    acq = sp.AcquisitionParams(points=1024)
    a = sp.fid_spectrum(thermal_equilibrium(1e-2), es, acq, backend="numba")
    b = sp.fid_spectrum(thermal_equilibrium(1e-2), es, acq, backend="numpy")
    assert np.abs(a.values - b.values).max() < 1e-10 * np.abs(a.values).max()


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fid_and_sticks_agree_on_resolved_lines(es, tt, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(64))
    rho = diagonal_state(es, range(64), p)
    stick = sp.stick_spectrum(rho, es, tt)
    spec = sp.fid_spectrum(rho, es)
    lw = spec.meta["broadening_hz"]
    rows = sp.resolvable_rows(tt, np.arange(len(tt)), lw, min_rel_weight=0.05)
    got = sp.transition_intensities(spec, rows, tt, require_peaks=False)
    ref = stick.values[rows]
    big = np.abs(ref) >= 0.05 * np.abs(ref).max()
    assert big.sum() >= 5
    assert np.allclose(got[big] / np.abs(ref).max(), ref[big] / np.abs(ref).max(), atol=0.02)


# -- peak handling and assignment ---------------------------------------------


def test_line_clusters():
    labels = sp.line_clusters([0.0, 5.0, 0.5, 10.0, 5.9], 1.0)
    assert labels[0] == labels[2] and labels[1] == labels[4]
    assert len(set(labels)) == 3


def test_resolvable_rows_drop_crowded_and_weak(tt):
    rows = sp.resolvable_rows(tt, np.arange(len(tt)), 2.0)
    labels = sp.line_clusters(tt.freq_hz, 2.0)
    counts = np.bincount(labels)
    assert np.all(counts[labels[rows]] == 1)
    assert np.all(tt.weight[rows] >= 0.02 * tt.weight.max())


def test_thermal_intensities_from_sampled_spectrum(es, tt, thermal_fid):
    stick = sp.stick_spectrum(thermal_equilibrium(1e-2), es, tt)
    rows = tt.highspin_rows
    got = sp.transition_intensities(thermal_fid, rows, tt)
    labels = sp.line_clusters(tt.freq_hz, 2.0)
    ref = np.array([stick.values[labels == labels[r]].sum() for r in rows])
    assert np.allclose(got, ref, rtol=0.02)
    assert np.array_equal(sp.transition_intensities(stick, rows), stick.values[rows])
    with pytest.raises(ValueError):
        sp.transition_intensities(thermal_fid, rows)


def test_missing_peak_is_reported(cluster, es, tt):
    spec = sp.fid_spectrum(pseudopure(es, cluster.state_index(3, 3)), es)
    with pytest.raises(ValueError, match="no peak"):
        sp.transition_intensities(spec, [tt.highspin_row(-3)], tt)
    got = sp.transition_intensities(spec, [tt.highspin_row(-3)], tt, require_peaks=False)
    assert abs(got[0]) < 1e-6


def test_assign_peaks(cluster, es, tt):
    spec = sp.fid_spectrum(pseudopure(es, cluster.state_index(3, 3)), es)
    r = tt.highspin_row(2)
    got = sp.assign_peaks(sp.pick_peaks(spec), tt, [r, tt.highspin_row(-3)])
    assert list(got) == [r]
    assert sp.assign_peaks([], tt, [r]) == {}


def test_peak_functions_need_sampled_spectra(es, tt):
    stick = sp.stick_spectrum(thermal_equilibrium(1e-2), es, tt)
    with pytest.raises(ValueError):
        sp.pick_peaks(stick)
    with pytest.raises(ValueError):
        sp.peak_area(stick, 0.0)
