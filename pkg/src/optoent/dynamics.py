"""Frequency-domain solution of the linearized optomechanical Langevin system.

Fourier convention ``f(W) = int f(t) exp(+iWt) dt``, so ``d/dt -> -iW``.
Inputs are ordered ``(u1, u2, nX, nF)`` and outputs
``(B1, B2, A1, A2, v1, v2)``; the adiabatic model has no ``A`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import HBAR, SystemParams
from .spectra import (
    NoiseModel,
    Structural,
    force_spectrum,
    loss_angle,
    sensing_spectrum,
)

__all__ = [
    "INPUTS",
    "FULL_OUTPUTS",
    "ADIABATIC_OUTPUTS",
    "DynamicsError",
    "TransferMatrix",
    "OutputCrossSpectrum",
    "mechanical_susceptibility",
    "transfer_full",
    "transfer_adiabatic",
    "transfer",
    "input_spectra",
    "output_cross_spectrum",
    "cross_spectra",
]

INPUTS = ("u1", "u2", "nX", "nF")
FULL_OUTPUTS = ("B1", "B2", "A1", "A2", "v1", "v2")
ADIABATIC_OUTPUTS = ("B1", "B2", "v1", "v2")


class DynamicsError(ArithmeticError):
    """The response is singular at the requested frequency."""


@dataclass(frozen=True)
class TransferMatrix:
    omega: np.ndarray
    matrix: np.ndarray
    kind: str

    @property
    def outputs(self):
        return FULL_OUTPUTS if self.kind == "full" else ADIABATIC_OUTPUTS

    def entry(self, output, source):
        return self.matrix[..., self.outputs.index(output), INPUTS.index(source)]


@dataclass(frozen=True)
class OutputCrossSpectrum:
    omega: np.ndarray
    matrix: np.ndarray
    kind: str

    @property
    def outputs(self):
        return FULL_OUTPUTS if self.kind == "full" else ADIABATIC_OUTPUTS

    def entry(self, a, b):
        return self.matrix[..., self.outputs.index(a), self.outputs.index(b)]


def mechanical_susceptibility(omega, params: SystemParams, model: Optional[NoiseModel] = None):
    """Displacement response to force, ``x = chi F``.

    Viscous damping enters as ``-i M gamma_m W``. A structural model replaces
    it by a complex spring ``M w_m^2 (1 - i phi(|W|) sign W)`` (plus the
    model's own optional viscous term); the sign makes the loss dissipative
    under this Fourier convention and keeps ``chi(-W) = conj(chi(W))``.
    """
    w = np.asarray(omega, dtype=float)
    m, wm = params.mass, params.mech_freq
    if isinstance(model, Structural):
        inv = m * (wm**2 - w**2) - 1j * m * model.viscous_damping * w
        inv = inv - 1j * m * wm**2 * loss_angle(w, model.loss, model.omega_c) * np.sign(w)
    else:
        inv = m * (wm**2 - w**2) - 1j * m * params.mech_damping * w
    if np.any(inv == 0):
        raise DynamicsError("mechanical susceptibility is singular (undamped resonance)")
    return 1.0 / inv


def _transfer_full(w, params, model):
    gam, G = params.cavity_decay, params.coupling
    n = w.shape[0]
    T = np.zeros((n, 6, 4), dtype=complex)
    chi = mechanical_susceptibility(w, params, model)
    cav = 1.0 / (gam - 1j * w)
    sq = np.sqrt(2.0 * gam)
    # A1 from u1; x from radiation pressure and force noise
    a1_u1 = sq * cav
    x = np.zeros((n, 4), dtype=complex)
    x[:, 0] = chi * np.sqrt(2.0) * HBAR * G * a1_u1
    x[:, 3] = chi
    a2 = np.sqrt(2.0) * G * cav[:, None] * x
    a2[:, 1] += sq * cav
    a2[:, 2] += np.sqrt(2.0) * G * cav
    T[:, 0, :] = x / params.x_zpf
    T[:, 1, :] = (-1j * w * params.mass)[:, None] * x / params.p_zpf
    T[:, 2, 0] = a1_u1
    T[:, 3, :] = a2
    T[:, 4, 0] = 1.0 - sq * a1_u1
    T[:, 5, :] = -sq * a2
    T[:, 5, 1] += 1.0
    return T


def _transfer_adiabatic(w, params, model):
    a = params.alpha
    n = w.shape[0]
    T = np.zeros((n, 4, 4), dtype=complex)
    chi = mechanical_susceptibility(w, params, model)
    x = np.zeros((n, 4), dtype=complex)
    x[:, 0] = chi * HBAR * a
    x[:, 3] = chi
    T[:, 0, :] = x / params.x_zpf
    T[:, 1, :] = (-1j * w * params.mass)[:, None] * x / params.p_zpf
    T[:, 2, 0] = 1.0
    T[:, 3, :] = a * x
    T[:, 3, 1] += 1.0
    T[:, 3, 2] += a
    return T


def transfer(omega, params: SystemParams, model: Optional[NoiseModel] = None,
             kind: str = "full") -> TransferMatrix:
    """Transfer matrix of the full or adiabatic model at one or many frequencies."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if kind == "full":
        T = _transfer_full(w, params, model)
    elif kind == "adiabatic":
        T = _transfer_adiabatic(w, params, model)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    if np.ndim(omega) == 0:
        return TransferMatrix(float(omega), T[0], kind)
    return TransferMatrix(w, T, kind)


def transfer_full(omega, params: SystemParams, model: Optional[NoiseModel] = None):
    """Exact input-output relations of the cavity model (6x4 per frequency)."""
    return transfer(omega, params, model, "full")


def transfer_adiabatic(omega, params: SystemParams, model: Optional[NoiseModel] = None):
    """Cavity adiabatically eliminated (4x4 per frequency)."""
    return transfer(omega, params, model, "adiabatic")


def input_spectra(model: NoiseModel, omega, params: Optional[SystemParams] = None):
    """Diagonal input spectra ``(1, 1, S_nX [m^2/Hz], S_nF [N^2/Hz])``, shape (n, 4)."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty((w.shape[0], 4))
    out[:, 0] = 1.0
    out[:, 1] = 1.0
    out[:, 2] = sensing_spectrum(model, w)
    out[:, 3] = force_spectrum(model, w)
    return out


def cross_spectra(T: np.ndarray, s_in: np.ndarray) -> np.ndarray:
    """``T diag(s_in) T^dagger`` for stacked matrices, exactly Hermitian."""
    S = np.einsum("nik,nk,njk->nij", T, s_in, T.conj())
    return 0.5 * (S + np.conj(np.swapaxes(S, -1, -2)))


def output_cross_spectrum(T: TransferMatrix, model: NoiseModel,
                          params: Optional[SystemParams] = None) -> OutputCrossSpectrum:
    """One-sided symmetrized cross-spectra of the outputs.

    Inputs are mutually uncorrelated with spectra from :func:`input_spectra`.
    """
    mats = np.asarray(T.matrix)
    scalar = mats.ndim == 2
    if scalar:
        mats = mats[None]
    S = cross_spectra(mats, input_spectra(model, T.omega, params))
    return OutputCrossSpectrum(T.omega, S[0] if scalar else S, T.kind)
