import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optoent.dynamics import (
    DynamicsError,
    mechanical_susceptibility,
    output_cross_spectrum,
    transfer,
    transfer_adiabatic,
    transfer_full,
)
from optoent.model import TWO_PI, aligo_params, free_mass_params
from optoent.spectra import LigoParam, Quiet, Structural, White

P = aligo_params()
MODELS = [Quiet(), White(TWO_PI * 20, TWO_PI * 200, P.mass), LigoParam.aligo(resonances=True),
          Structural(TWO_PI * 50, TWO_PI * 130, 0.05, TWO_PI * 0.05, P.mass)]


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(MODELS), st.sampled_from(["full", "adiabatic"]), st.floats(1e-2, 1e5))
def test_output_spectrum_hermitian_and_real_in_time(model, kind, w):
    S = output_cross_spectrum(transfer([w, -w], P, model, kind), model).matrix
    np.testing.assert_array_equal(S[0], S[0].conj().T)
    # a real time-domain process has S(-W) = conj S(W)
    np.testing.assert_allclose(S[1], S[0].conj(), rtol=1e-12, atol=1e-12 * np.abs(S[0]).max())
    assert np.all(np.linalg.eigvalsh(S[0]) > -1e-9 * np.abs(S[0]).max())


def test_transfer_shapes():
    assert transfer_full(1.0, P).matrix.shape == (6, 4)
    assert transfer_adiabatic(np.ones(3), P).matrix.shape == (3, 4, 4)
    with pytest.raises(ValueError):
        transfer(1.0, P, kind="nope")


def test_adiabatic_limit_matches_full():
    p = free_mass_params(TWO_PI * 100, cavity_decay=TWO_PI * 1e7)
    w = TWO_PI * np.array([1.0, 30.0, 300.0])
    full = transfer_full(w, p)
    adi = transfer_adiabatic(w, p)
    # reflection off the cavity adds an overall sign to the outgoing field
    for out, sign in (("B1", 1), ("B2", 1), ("v1", -1), ("v2", -1)):
        for src in ("u1", "u2", "nX", "nF"):
            a, b = full.entry(out, src), sign * adi.entry(out, src)
            np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-4 * np.abs(b).max() + 1e-300)


def test_output_vacuum_preserved_without_coupling():
    p = free_mass_params(0.0, cavity_decay=TWO_PI * 100)
    S = output_cross_spectrum(transfer_full(TWO_PI * np.array([3.0, 700.0]), p), Quiet())
    np.testing.assert_allclose(S.entry("v1", "v1"), 1.0, rtol=1e-12)
    np.testing.assert_allclose(S.entry("v2", "v2"), 1.0, rtol=1e-12)
    np.testing.assert_allclose(S.entry("v1", "v2"), 0.0, atol=1e-12)


def test_susceptibility_resonance():
    p = free_mass_params(0.0, mech_damping=0.0)
    with pytest.raises(DynamicsError):
        mechanical_susceptibility(p.mech_freq, p)
    s = Structural(1.0, 1.0, 0.1, 1e-3, p.mass)
    chi = mechanical_susceptibility(np.array([-2.0, 2.0]), p, s)
    assert chi[0] == pytest.approx(np.conj(chi[1]))
    # dissipative: Im chi has the sign of W under this convention
    assert chi[1].imag > 0
