import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optoent.model import HBAR, TWO_PI, sql_free_mass
from optoent.spectra import (
    ALIGO_RESONANCES,
    ExtrapolationError,
    FitError,
    LigoParam,
    PowerTable,
    Quiet,
    ResonantMode,
    SpectrumError,
    Structural,
    SuspensionOnly,
    Tabulated,
    White,
    fit_noise_model,
    force_spectrum,
    loss_angle,
    lorentzian_factor,
    model_to_json,
    read_psd_csv,
    sensing_spectrum,
    vacuum_input_spectrum,
)

TABLE = PowerTable((1.0, 10.0, 100.0), (1e-40, 1e-42, 1e-46), low_tail=-2.0, high_tail=-4.0)

MODELS = [
    Quiet(),
    White(TWO_PI * 100, TWO_PI * 150, 1.0),
    Structural(TWO_PI * 100, TWO_PI * 260, 0.05, TWO_PI * 0.05, 1.0),
    LigoParam.aligo(),
    LigoParam.aligo(resonances=True, alpha_f1=1e-12, alpha_f2=15.0),
    SuspensionOnly(),
    Tabulated(force=TABLE, sensing=TABLE),
]


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(MODELS), st.floats(1e-3, 1e6))
def test_spectra_even_and_nonnegative(model, w):
    for fn in (force_spectrum, sensing_spectrum):
        a, b = fn(model, w), fn(model, -w)
        assert a == b
        assert a >= 0 and np.isfinite(a)


def test_white_crosses_sql_at_its_frequencies():
    m = White(TWO_PI * 100, TWO_PI * 150, 2.0)
    wf = m.omega_f
    # force noise referred to displacement of a free mass equals the SQL at omega_f
    x_force = force_spectrum(m, wf) / (m.mass * wf**2) ** 2
    assert x_force == pytest.approx(sql_free_mass(wf, m.mass), rel=1e-12)
    assert sensing_spectrum(m, m.omega_x) == pytest.approx(sql_free_mass(m.omega_x, m.mass))


def test_structural_scaling():
    m = Structural(TWO_PI * 100, TWO_PI * 260, 0.05, TWO_PI * 0.05, 1.0)
    hi = TWO_PI * 1e3
    ratio = force_spectrum(m, hi) / force_spectrum(m, 2 * hi)
    assert ratio == pytest.approx(2.0, rel=1e-3)
    assert np.isfinite(force_spectrum(m, 0.0))


def test_loss_angle():
    assert loss_angle(0.0, 0.1, 1.0) == 0.0
    assert loss_angle(1.0, 0.1, 1.0) == pytest.approx(0.05)
    assert loss_angle(1e9, 0.1, 1.0) == pytest.approx(0.1, rel=1e-8)
    assert loss_angle(-3.0, 0.1, 1.0) == loss_angle(3.0, 0.1, 1.0)


def test_ligo_knobs():
    base = LigoParam.aligo()
    w = TWO_PI * 0.1
    assert force_spectrum(dataclasses.replace(base, alpha_f1=1e-3), w) == pytest.approx(
        1e-3 * force_spectrum(base, w))
    # larger alpha_f2 moves the corner down
    assert force_spectrum(dataclasses.replace(base, alpha_f2=10.0), TWO_PI) < force_spectrum(base, TWO_PI)
    assert force_spectrum(base, 0.0) == pytest.approx(base.tau_f)
    assert sensing_spectrum(base, 0.0) == pytest.approx(base.tau_x2)


def test_resonances_are_lorentzian_peaks():
    modes = ALIGO_RESONANCES
    assert len(modes) == 7
    on = lorentzian_factor(modes[2].center, modes)
    off = lorentzian_factor(modes[2].center + 10 * modes[2].fwhm, modes)
    assert on > 100 * off
    with pytest.raises(SpectrumError):
        ResonantMode(1.0, 0.0, 1.0)


def test_vacuum_input():
    assert vacuum_input_spectrum("u1", "u1") == 1.0
    assert vacuum_input_spectrum("u1", "u2") == 0.0
    with pytest.raises(SpectrumError):
        vacuum_input_spectrum("nX", "u1")


def test_power_table_interpolation_and_tails():
    assert TABLE(TWO_PI * 10.0) == pytest.approx(1e-42)
    assert TABLE(TWO_PI * np.sqrt(10.0)) == pytest.approx(1e-41, rel=1e-10)
    assert TABLE(TWO_PI * 0.1) == pytest.approx(1e-38, rel=1e-10)
    bare = PowerTable((1.0, 10.0), (1.0, 2.0))
    with pytest.raises(ExtrapolationError):
        bare(TWO_PI * 100.0)
    with pytest.raises(SpectrumError):
        PowerTable((2.0, 1.0), (1.0, 1.0))


def test_invalid_models_rejected():
    with pytest.raises(SpectrumError):
        White(-1.0, 1.0, 1.0)
    with pytest.raises(SpectrumError):
        Structural(1.0, 1.0, -0.1, 1.0, 1.0)
    with pytest.raises(SpectrumError):
        force_spectrum(object(), 1.0)


def test_read_psd_csv(tmp_path):
    path = tmp_path / "psd.csv"
    path.write_text("frequency_hz,psd\n1,2e-40\n10,3e-41\n")
    t = read_psd_csv(path)
    assert t.frequency == (1.0, 10.0)
    assert t.psd == (2e-40, 3e-41)


def test_fit_recovers_known_parameters():
    truth = LigoParam.aligo(alpha_f1=0.3, alpha_f2=2.0)
    f = np.geomspace(0.01, 10.0, 300)
    psd = force_spectrum(truth, TWO_PI * f)
    res = fit_noise_model((f, psd), LigoParam.aligo(), ["alpha_f1", "alpha_f2"])
    assert res.model.alpha_f1 == pytest.approx(0.3, rel=1e-8)
    assert res.model.alpha_f2 == pytest.approx(2.0, rel=1e-8)
    assert res.residual < 1e-20
    assert res.metadata["weighting"] == "log-uniform"


def test_fit_rejects_empty_and_unknown_fields():
    with pytest.raises(FitError):
        fit_noise_model(([1.0], [1.0]), LigoParam.aligo(), ["alpha_f1"])
    with pytest.raises(SpectrumError):
        fit_noise_model(([1.0, 2.0], [1.0, 1.0]), LigoParam.aligo(), ["nope"])


def test_model_to_json():
    text = model_to_json(LigoParam.aligo(resonances=True), residual=0.1)
    d = json.loads(text)
    assert d["family"] == "ligo"
    assert d["alpha_F1"] == 1.0
    assert len(d["resonances"]) == 7
    assert set(d["resonances"][0]) == {"Omega_v", "Gamma_v", "A_v"}
    assert d["residual"] == 0.1
