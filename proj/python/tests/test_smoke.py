import json
import math

import pytest

import sicmag


def test_closed_form_lines():
    f_minus, f_plus = sicmag.transition_frequencies(sicmag.SensorSpinModel(), 200.0)
    assert f_minus == pytest.approx(790.5)
    assert f_plus == pytest.approx(1911.5)
    b, center = sicmag.field_from_splitting(sicmag.SensorSpinModel(), 790.5, 1911.5)
    assert b == pytest.approx(200.0)
    assert center == pytest.approx(1351.0)


def test_spectrum_round_trip():
    model = sicmag.SensorSpinModel()
    probe = sicmag.extract_field(sicmag.synthesize_spectrum(model, 203.2), model)
    ref = sicmag.extract_field(sicmag.synthesize_spectrum(model, 200.0), model)
    b_fgt, sigma = sicmag.differential_field(probe["b_g"], probe["sigma_b_g"], ref["b_g"], ref["sigma_b_g"])
    assert b_fgt == pytest.approx(3.2, abs=1e-3)
    assert sigma >= 0.0


def test_tc_from_critical_series():
    temps = [296.0 + 94.0 * i / 11 for i in range(12)]
    fields = [4.0 * max(0.0, 1 - t / 360.0) ** 0.5 for t in temps]
    est = sicmag.estimate_tc(temps, fields, [0.1] * 12)
    assert est["tc_k"] == pytest.approx(360.0, abs=1e-3)


def test_stray_field_on_axis():
    bx, by, bz = sicmag.stray_field(sicmag.FlakeGeometry(), 1e5, [0.0, 0.0, -1.0])
    assert abs(bx) < 1e-12 and abs(by) < 1e-12
    assert bz != 0.0


def test_relaxometry_chain():
    delays = sicmag.log_delays(1.0, 1000.0, 200)
    fit = sicmag.fit_trace(delays, sicmag.synthesize_trace(6.2, 1.0, 1.0, delays))
    assert fit["gamma_khz"] == pytest.approx(6.2, rel=1e-6)
    params = sicmag.calibrate_phonon(0.3, 400.0, 296.0, 6.2, 393.0, 22.1)
    assert sicmag.phonon_rate(params, 393.0) == pytest.approx(22.1)
    shape = sicmag.fluctuation_with_peak(sicmag.FluctuationModel(), 10.0)
    temps = [296.0 + 97.0 * i / 24 for i in range(25)]
    rates = [sicmag.fluctuation_rate(shape, t) for t in temps]
    res = sicmag.fit_fluctuation_model(temps, rates, [0.1] * 25, shape)
    assert res["peak_t_k"] == pytest.approx(360.0, abs=1e-3)


def test_errors_are_raised():
    with pytest.raises(sicmag.SicmagError):
        sicmag.estimate_tc([300.0 + i for i in range(6)], [0.0] * 6, [0.1] * 6)
    with pytest.raises(sicmag.SicmagError):
        sicmag.magnetization(sicmag.MagnetizationModel(), 300.0, 0.0, "sideways")


def test_default_config_and_reproduce(tmp_path):
    cfg = json.loads(sicmag.default_config_json())
    assert cfg["magnet"]["model"]["tc_k"] == 360.0
    ok, report = sicmag.reproduce(str(tmp_path / "out"), jobs=2)
    report = json.loads(report)
    assert ok and report["pass"]
    assert math.isclose(report["summary"]["tc_fit_k"], 360.0, abs_tol=3.0)
