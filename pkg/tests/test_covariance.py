import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import OMEGA_F, white_set
from optoent.covariance import (
    CovarianceError,
    IntegratorSettings,
    TimeGrid,
    assemble,
    build_blocks,
    build_covariance,
    build_v_qq,
    commutator_matrix,
    load_covariance,
    partial_transpose,
    save_covariance,
    trace_cavity,
)
from optoent.model import TWO_PI, aligo_params, free_mass_params
from optoent.oracles import lyapunov_qq
from optoent.spectra import LigoParam, Quiet, White

CASES = st.tuples(st.floats(0.3, 3.0), st.floats(0.5, 4.0), st.integers(2, 10),
                  st.sampled_from([0.5e-3, 1e-3, 2e-3]))


def _block(V, nq, a, b):
    return V[nq + 2 * a: nq + 2 * a + 2, nq + 2 * b: nq + 2 * b + 2]


@settings(max_examples=100, deadline=None)
@given(CASES)
def test_vv_block_toeplitz_exact(case):
    q, x, n, dt = case
    cs = white_set(q, x, n, dt)
    for a in range(n):
        for b in range(n):
            np.testing.assert_array_equal(_block(cs.V, cs.n_q, a, b),
                                          _block(cs.V, cs.n_q, 0, b - a) if b >= a
                                          else _block(cs.V, cs.n_q, a - b, 0))


@settings(max_examples=100, deadline=None)
@given(CASES)
def test_partial_transpose_involution(case):
    cs = white_set(*case)
    twice = partial_transpose(partial_transpose(cs))
    np.testing.assert_array_equal(twice.V, cs.V)
    np.testing.assert_array_equal(twice.J, cs.J)
    assert np.array_equal(partial_transpose(cs).V[1, 1], cs.V[1, 1])


def test_symmetric_and_labelled():
    cs = white_set(n_bins=4)
    np.testing.assert_array_equal(cs.V, cs.V.T)
    assert cs.dim == 2 + 8
    assert cs.labels[:3] == ["B1", "B2", "v1[0]"]
    assert cs.grid.times[0] == pytest.approx(-0.5e-3)


def test_commutator_matrix():
    J = commutator_matrix(2, 3)
    assert J.shape == (10, 10)
    np.testing.assert_array_equal(J, -J.T)
    np.testing.assert_array_equal(J @ J, -np.eye(10))


def test_uncoupled_light_is_vacuum():
    p = free_mass_params(0.0, cavity_decay=TWO_PI * 100)
    cs = build_covariance(p, Quiet(), TimeGrid(8, 1e-3), "full")
    np.testing.assert_allclose(cs.V[4:, 4:], 0.5 * np.eye(16), atol=1e-9)
    np.testing.assert_allclose(cs.V[:2, 4:], 0.0, atol=1e-12)


def test_traced_is_principal_submatrix():
    p = aligo_params()
    grid = TimeGrid(6, 1e-3)
    full = build_covariance(p, LigoParam.aligo(), grid, "full")
    traced = build_covariance(p, LigoParam.aligo(), grid, "traced")
    keep = np.r_[0:2, 4:full.dim]
    np.testing.assert_array_equal(traced.V, full.V[np.ix_(keep, keep)])
    np.testing.assert_array_equal(trace_cavity(full).V, traced.V)
    with pytest.raises(CovarianceError):
        trace_cavity(traced)


def test_shorter_window_is_leading_submatrix():
    a = white_set(n_bins=4)
    b = white_set(n_bins=8)
    k = a.dim
    np.testing.assert_allclose(a.V, b.V[:k, :k], rtol=1e-7, atol=1e-9 * np.abs(b.V).max())


def test_v_qq_matches_lyapunov_free_mass():
    p = free_mass_params(OMEGA_F, cavity_decay=TWO_PI * 1e4)
    noise = White(OMEGA_F, 2 * OMEGA_F, 1.0)
    qq = build_v_qq(p, noise)
    ref = lyapunov_qq(p, noise)
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    assert np.max(np.abs(qq - ref) / scale) < 1e-3


def test_mechanical_variance_grows_with_force_noise():
    p = free_mass_params(OMEGA_F)
    var = [build_v_qq(p, White(TWO_PI * f, OMEGA_F, 1.0), partition="adiabatic")[0, 0]
           for f in (30.0, 60.0, 120.0, 240.0)]
    assert np.all(np.diff(var) > 0)


def test_convergence_gate_records_change():
    p = free_mass_params(OMEGA_F)
    integ = IntegratorSettings(check_convergence=True, convergence_tol=1e-4)
    blocks = build_blocks(p, White(OMEGA_F, OMEGA_F, 1.0), TimeGrid(4, 1e-3), "adiabatic", integ)
    assert blocks["info"]["refinement_change"] < 1e-4


def test_assemble_checks_shapes():
    blocks = {"qq": np.eye(2), "qv": np.zeros((2, 4)), "vv": np.eye(4)}
    cs = assemble("adiabatic", blocks, TimeGrid(2, 1e-3))
    assert cs.dim == 6
    with pytest.raises(CovarianceError):
        assemble("full", blocks, TimeGrid(2, 1e-3))
    with pytest.raises(CovarianceError):
        assemble("adiabatic", blocks, TimeGrid(3, 1e-3))
    with pytest.raises(CovarianceError):
        assemble("nope", blocks, TimeGrid(2, 1e-3))


def test_save_load_roundtrip(tmp_path):
    cs = white_set(n_bins=3)
    path = save_covariance(cs, tmp_path / "cov")
    back = load_covariance(path)
    np.testing.assert_array_equal(back.V, cs.V)
    assert back.grid == cs.grid
    assert back.metadata["hash"] == cs.metadata["hash"]


def test_provenance_hash_tracks_inputs():
    a, b = white_set(x=1.5), white_set(x=1.6)
    assert a.metadata["hash"] != b.metadata["hash"]
    assert a.metadata["hash"] == white_set(x=1.5).metadata["hash"]


def test_time_grid_validation():
    assert TimeGrid.from_duration(0.1, 0.25e-3).n_bins == 400
    with pytest.raises(CovarianceError):
        TimeGrid(1, 1e-3)
    with pytest.raises(CovarianceError):
        TimeGrid(4, 0.0)
    with pytest.raises(CovarianceError):
        IntegratorSettings(sampling="nope")
